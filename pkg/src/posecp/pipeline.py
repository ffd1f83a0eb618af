"""Glue between the modules: scoring, sigma attachment, and per-cell evaluation."""
from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from posecp.conformal import (
    CalibrationResult,
    ScoreRecord,
    calibrate_adaptive,
    calibrate_standard,
)
from posecp.difficulty import DifficultyModel, sigma_for_trajectory
from posecp.errors import ValidationError
from posecp.evaluation import (
    CoverageReport,
    coverage_by_quartile,
    displacement_by_quartile,
    quartile_partition,
)
from posecp.se3_geometry import ScoreWeights
from posecp.predictors import (
    CONST_VEL,
    PredictionRecord,
    const_vel_predictions,
    score_predictions,
)
from posecp.trajectory import Trajectory


def predictions_for(
    truth: Trajectory, predictor: str, k: int, external: Sequence[PredictionRecord] | None = None
) -> list[PredictionRecord]:
    """Predictions whose target frames lie in ``truth``.

    ``predictor`` is ``const_vel`` (computed on ``truth`` itself) or any
    other id, in which case ``external`` supplies the records.
    """
    if predictor == CONST_VEL:
        return const_vel_predictions(truth, k)
    if external is None:
        raise ValidationError(f"predictor {predictor!r} needs an external predictions file")
    ids = np.array([p.frame_id for p in external], dtype=np.int64)
    keep = truth.indices_of(ids) >= 0 if ids.size else np.zeros(0, bool)
    return [p for p, ok in zip(external, keep) if ok]


def score_cell(
    truth: Trajectory,
    predictor: str,
    k: int,
    score_fn: str = "geodesic",
    weights: ScoreWeights | None = None,
    external: Sequence[PredictionRecord] | None = None,
) -> list[ScoreRecord]:
    preds = predictions_for(truth, predictor, k, external)
    recs = score_predictions(preds, truth, score_fn, weights)
    return [r if r.horizon is not None else ScoreRecord(r.frame_id, r.predictor_id, k, r.score) for r in recs]


def attach_sigma(records: Sequence[ScoreRecord], sigma: Mapping[int, float]) -> list[ScoreRecord]:
    """Records that have a sigma in ``sigma``, with it attached; others are dropped."""
    return [r.with_sigma(sigma[r.frame_id]) for r in records if r.frame_id in sigma]


def model_sigma(model: DifficultyModel, trajectories: Sequence[Trajectory]) -> dict[str, dict[int, float]]:
    return {t.participant_id: sigma_for_trajectory(model, t) for t in trajectories}


def calibrate(
    records: Sequence[ScoreRecord],
    alpha: float,
    adaptive: bool,
    score_fn: str,
    weights: ScoreWeights,
    provenance: str,
    model_hash: str | None = None,
) -> CalibrationResult:
    fn = calibrate_adaptive if adaptive else calibrate_standard
    return fn(
        records,
        alpha,
        score_fn=score_fn,
        weights=weights,
        provenance=provenance,
        model_hash=model_hash if adaptive else None,
    )


def evaluate(
    test: Sequence[ScoreRecord],
    result: CalibrationResult,
    participant: str = "",
    truth: Trajectory | None = None,
) -> CoverageReport:
    """Coverage report for one cell; quartiles come from the test scores only."""
    q = quartile_partition(test)
    report = coverage_by_quartile(test, result, q, participant=participant)
    if truth is not None:
        report.displacement = displacement_by_quartile(truth, q).means
    return report
