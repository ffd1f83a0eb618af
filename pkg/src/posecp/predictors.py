"""Pose predictors and nonconformity scoring.

The constant-velocity predictor repeats the last observed inter-frame
motion ``k`` times. Externally produced predictions (from feature-matching
or depth networks run elsewhere) are ingested from files, either as full
poses or as precomputed scalar scores.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from posecp.conformal import ScoreRecord
from posecp.errors import ParseError, ValidationError
from posecp.se3_geometry import Pose, Rotation, ScoreWeights, rodrigues, score_batch, so3_log_batch
from posecp.trajectory import Trajectory, _read_text, iter_data_lines, parse_frame_id, parse_pose_fields, rows_to_poses

CONST_VEL = "const_vel"


def check_horizon(k) -> int:
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)) or k < 1:
        raise ValidationError(f"horizon k must be a positive integer, got {k!r}")
    return int(k)


@dataclass(frozen=True)
class PredictionRecord:
    """A prediction for target frame ``frame_id``.

    Exactly one of ``predicted`` (a pose, scored against ground truth) or
    ``score`` (a precomputed residual) is set.
    """

    frame_id: int
    predictor_id: str
    predicted: Pose | None = None
    score: float | None = None
    horizon: int | None = None

    def __post_init__(self):
        if (self.predicted is None) == (self.score is None):
            raise ValidationError("PredictionRecord needs exactly one of predicted or score")
        if self.score is not None and not (np.isfinite(self.score) and self.score >= 0):
            raise ValidationError(f"score must be finite and nonnegative, got {self.score}")


def _power_translation(rel_R: np.ndarray, rel_t: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Rotation and translation of ``delta^k`` for stacked relative motions."""
    phi = so3_log_batch(rel_R)
    acc = np.zeros_like(rel_t)
    for j in range(k):
        rj = rodrigues(j * phi) if j else np.broadcast_to(np.eye(3), rel_R.shape)
        acc += np.einsum("nij,nj->ni", rj, rel_t)
    return rodrigues(k * phi), acc


def _const_vel_arrays(traj: Trajectory, idx: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    R0, R1 = traj.rotations[idx - 1], traj.rotations[idx]
    t0, t1 = traj.translations[idx - 1], traj.translations[idx]
    rel_R = np.einsum("nji,njk->nik", R0, R1)
    rel_t = np.einsum("nji,nj->ni", R0, t1 - t0)
    dk_R, dk_t = _power_translation(rel_R, rel_t, k)
    pred_R = R1 @ dk_R
    pred_t = t1 + np.einsum("nij,nj->ni", R1, dk_t)
    return pred_R, pred_t


def const_vel_predict(traj: Trajectory, i: int, k: int) -> Pose:
    """Predict the pose ``k`` frames after list position ``i``.

    Uses the relative motion ``delta = y[i-1]^-1 * y[i]`` and returns
    ``y[i] * delta^k``, with the rotation power taken as
    ``exp(k * log(delta_R))``. Both history frames must lie in the same
    break-delimited segment.
    """
    k = check_horizon(k)
    if not isinstance(i, (int, np.integer)) or i < 1 or i >= len(traj):
        raise ValidationError(f"const-vel needs frames i-1 and i; got i={i} for {len(traj)} frames")
    if not traj.same_segment(i - 1, i):
        raise ValidationError(f"history for frame index {i} spans a break")
    R, t = _const_vel_arrays(traj, np.array([i]), k)
    return Pose(Rotation(R[0]), t[0])


def const_vel_predictions(traj: Trajectory, k: int) -> list[PredictionRecord]:
    """Const-vel predictions for every target frame with valid history.

    Target ``i + k`` is predicted from frames ``i - 1`` and ``i``; all three
    must share a segment.
    """
    k = check_horizon(k)
    n = len(traj)
    idx = np.arange(1, max(n - k, 1))
    if idx.size:
        seg = traj.segments
        idx = idx[(seg[idx - 1] == seg[idx]) & (seg[idx] == seg[idx + k])]
    if not idx.size:
        return []
    pred_R, pred_t = _const_vel_arrays(traj, idx, k)
    targets = traj.frame_ids[idx + k]
    return [
        PredictionRecord(int(fid), CONST_VEL, Pose(Rotation(r), t), horizon=k)
        for fid, r, t in zip(targets, pred_R, pred_t)
    ]


def load_external_predictions(source, predictor_id: str, horizon: int | None = None) -> list[PredictionRecord]:
    """Read externally computed predictions.

    Each line is either ``frame_id tx ty tz qw qx qy qz`` (a predicted pose
    for that target frame) or ``frame_id score`` (a precomputed residual).
    A file must use one form throughout.
    """
    text, name = _read_text(source)
    records, seen, form = [], set(), None
    pose_rows, pose_lines, pose_ids = [], [], []
    for lineno, fields in iter_data_lines(text):
        if fields is None:
            continue
        this = "score" if len(fields) == 2 else "pose"
        if form is None:
            form = this
        elif this != form:
            raise ParseError(f"mixed line forms: expected {form} line", lineno, name)
        if this == "score":
            fid = parse_frame_id(fields[0], lineno, name)
            try:
                s = float(fields[1])
            except ValueError:
                raise ParseError(f"score must be numeric, got {fields[1]!r}", lineno, name) from None
            if not np.isfinite(s) or s < 0:
                raise ParseError(f"score must be finite and nonnegative, got {s}", lineno, name)
            records.append(PredictionRecord(fid, predictor_id, score=s, horizon=horizon))
        else:
            fid, vals = parse_pose_fields(fields, lineno, name)
            pose_rows.append(vals)
            pose_lines.append(lineno)
            pose_ids.append(fid)
        if fid in seen:
            raise ParseError(f"duplicate frame_id {fid}", lineno, name)
        seen.add(fid)
    if pose_rows:
        trans, rots = rows_to_poses(np.array(pose_rows), pose_lines, name)
        records = [
            PredictionRecord(fid, predictor_id, Pose(Rotation(r), t), horizon=horizon)
            for fid, r, t in zip(pose_ids, rots, trans)
        ]
    return records


def score_predictions(
    preds: Sequence[PredictionRecord],
    truth: Trajectory | None,
    score_fn: str = "geodesic",
    w: ScoreWeights | None = None,
) -> list[ScoreRecord]:
    """One ``ScoreRecord`` per prediction, ordered by frame_id.

    Precomputed scores pass through unchanged; pose predictions are scored
    with ``score_fn`` against the ground-truth frame of the same id.
    ``truth`` may be None only when every record carries a precomputed score.
    """
    w = w or ScoreWeights()
    preds = sorted(preds, key=lambda p: p.frame_id)
    pose_preds = [p for p in preds if p.predicted is not None]
    if truth is None:
        if pose_preds:
            raise ValidationError("pose predictions need a ground-truth trajectory")
    elif preds:
        all_ids = np.array([p.frame_id for p in preds], dtype=np.int64)
        absent = all_ids[truth.indices_of(all_ids) < 0]
        if absent.size:
            raise ValidationError(f"no ground truth for frame_ids {absent.tolist()}")
    scores: dict[int, float] = {}
    if pose_preds:
        ids = np.array([p.frame_id for p in pose_preds], dtype=np.int64)
        pos = truth.indices_of(ids)
        pred_R = np.array([p.predicted.R for p in pose_preds])
        pred_t = np.array([p.predicted.t for p in pose_preds])
        vals = score_batch(score_fn, pred_R, pred_t, truth.rotations[pos], truth.translations[pos], w)
        scores = dict(zip(ids.tolist(), vals.tolist()))
    out = []
    for p in preds:
        s = p.score if p.predicted is None else scores[p.frame_id]
        out.append(ScoreRecord(p.frame_id, p.predictor_id, p.horizon, s))
    return out
