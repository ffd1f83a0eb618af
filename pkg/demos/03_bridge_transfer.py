"""
Learning difficulty from motion alone
=====================================

The bridge regressor sees only kinematic features of the ground-truth pose
history. It is trained on one synthetic participant and then used, frozen,
to normalize scores for two participants with different motion mixtures.
Training takes a few seconds.
"""

from scipy.stats import spearmanr

from posecp import (
    ScoreRecord,
    TrainConfig,
    calibrate_adaptive,
    calibrate_standard,
    coverage_by_quartile,
    feature_matrix,
    fit_bridge,
    generate_synthetic,
    quartile_partition,
    sigma_for_trajectory,
)
from posecp.difficulty import FEATURE_NAMES, predict_sigmas
from posecp.evaluation import heteroscedastic_config
from posecp.se3_geometry import geodesic_score_batch

train = generate_synthetic(heteroscedastic_config(20000, seed=100, participant_id="A"))
ids, X = feature_matrix(train.truth)
targets = train.sigma[train.truth.indices_of(ids)]
print(f"{X.shape[0]} training frames, {len(FEATURE_NAMES)} features")

model = fit_bridge(X, targets, TrainConfig(), seed=0)
rho = spearmanr(predict_sigmas(model, X), targets)[0]
print(f"final loss {model.final_loss:.4f}, training Spearman {rho:.3f}")
print("model hash", model.content_hash[:16])

###############################################################################
# Apply the frozen model to new participants.

for pid, seed, weights in (("B", 401, (0.2, 0.3, 0.2, 0.3)), ("C", 402, (0.3, 0.15, 0.25, 0.3))):
    d = generate_synthetic(heteroscedastic_config(20000, seed=seed, participant_id=pid, weights=weights))
    t, p = d.truth, d.predicted
    s = geodesic_score_batch(p.rotations, p.translations, t.rotations, t.translations)
    sig = sigma_for_trajectory(model, t)
    recs = [ScoreRecord(int(f), "synthetic", 1, float(v), sig[int(f)]) for f, v in zip(t.frame_ids, s) if int(f) in sig]
    cal, test = recs[: len(recs) // 2], recs[len(recs) // 2:]
    q = quartile_partition(test)
    std = coverage_by_quartile(test, calibrate_standard(cal, 0.1), q)
    ada = coverage_by_quartile(test, calibrate_adaptive(cal, 0.1), q)
    print(f"{pid}: standard Ovr {std.overall_coverage:.3f} Q4 {std.q4_coverage:.3f} | "
          f"adaptive Ovr {ada.overall_coverage:.3f} Q4 {ada.q4_coverage:.3f}")
