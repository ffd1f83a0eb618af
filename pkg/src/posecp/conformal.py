"""Split conformal calibration with fixed and difficulty-normalized thresholds."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from posecp.errors import ValidationError
from posecp.se3_geometry import ScoreWeights

STANDARD = "standard"
ADAPTIVE = "adaptive"


@dataclass(frozen=True)
class ScoreRecord:
    """Per-frame nonconformity score, optionally with a difficulty ``sigma``."""

    frame_id: int
    predictor_id: str
    horizon: int | None
    score: float
    sigma: float | None = None

    def __post_init__(self):
        s = float(self.score)
        if not (np.isfinite(s) and s >= 0):
            raise ValidationError(f"frame {self.frame_id}: score must be finite and >= 0, got {s}")
        object.__setattr__(self, "score", s)
        if self.sigma is not None:
            sg = float(self.sigma)
            if not (np.isfinite(sg) and sg > 0):
                raise ValidationError(f"frame {self.frame_id}: sigma must be finite and > 0, got {sg}")
            object.__setattr__(self, "sigma", sg)

    def with_sigma(self, sigma: float) -> "ScoreRecord":
        return replace(self, sigma=sigma)


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must be in (0, 1), got {alpha}")
    return alpha


def quantile_rank(n: int, alpha: float) -> int:
    """``ceil((1 - alpha)(n + 1))``, computed in exact rational arithmetic.

    ``alpha`` is read as the nearest fraction with denominator <= 10**9 so
    that e.g. ``alpha=0.1, n=9`` gives exactly 9 rather than a float-rounded 10.
    """
    a = Fraction(_check_alpha(alpha)).limit_denominator(10**9)
    return math.ceil((1 - a) * (n + 1))


def conformal_quantile(scores: Sequence[float], alpha: float) -> float:
    """Finite-sample conformal quantile of ``scores``.

    Returns the ``ceil((1 - alpha)(n + 1))``-th smallest score, or ``inf``
    when that rank exceeds ``n``. No interpolation; tied scores occupy
    consecutive ranks.
    """
    s = np.asarray(scores, dtype=float).reshape(-1)
    if s.size == 0:
        raise ValidationError("conformal_quantile needs at least one score")
    if np.any(np.isnan(s)):
        raise ValidationError("scores contain NaN")
    rank = quantile_rank(s.size, alpha)
    if rank > s.size:
        return math.inf
    return float(np.partition(s, rank - 1)[rank - 1])


@dataclass(frozen=True)
class CalibrationResult:
    """A calibrated threshold plus the provenance needed to reuse it.

    ``threshold`` is ``q_hat`` for standard CP (compare against raw scores)
    or ``q_tilde`` for adaptive CP (compare against ``score / sigma``).
    """

    kind: str
    threshold: float
    alpha: float
    n_cal: int
    score_fn: str = "geodesic"
    weights: ScoreWeights = field(default_factory=ScoreWeights)
    provenance: str = ""
    predictor_id: str | None = None
    horizon: int | None = None
    model_hash: str | None = None

    def __post_init__(self):
        if self.kind not in (STANDARD, ADAPTIVE):
            raise ValidationError(f"unknown calibration kind {self.kind!r}")
        if not (self.threshold >= 0):
            raise ValidationError(f"threshold must be >= 0, got {self.threshold}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["weights"] = self.weights.to_dict()
        # JSON has no infinity literal
        d["threshold"] = "inf" if math.isinf(self.threshold) else self.threshold
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationResult":
        d = dict(d)
        d["weights"] = ScoreWeights(**d.get("weights", {}))
        thr = d["threshold"]
        d["threshold"] = math.inf if thr == "inf" else float(thr)
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})

    @classmethod
    def from_json(cls, text: str) -> "CalibrationResult":
        return cls.from_dict(json.loads(text))


def _scores(records: Iterable[ScoreRecord]) -> np.ndarray:
    return np.array([r.score for r in records], dtype=float)


def _common(records: Sequence[ScoreRecord], attr: str):
    vals = {getattr(r, attr) for r in records}
    return vals.pop() if len(vals) == 1 else None


def calibrate_standard(cal: Sequence[ScoreRecord], alpha: float, **meta) -> CalibrationResult:
    """Single fixed threshold ``q_hat`` over the calibration scores."""
    cal = list(cal)
    if not cal:
        raise ValidationError("calibration set is empty")
    q = conformal_quantile(_scores(cal), alpha)
    meta.setdefault("predictor_id", _common(cal, "predictor_id"))
    meta.setdefault("horizon", _common(cal, "horizon"))
    return CalibrationResult(STANDARD, q, float(alpha), len(cal), **meta)


def normalized_scores(records: Sequence[ScoreRecord]) -> np.ndarray:
    """``score / sigma`` per record; every record must carry a sigma."""
    missing = [r.frame_id for r in records if r.sigma is None]
    if missing:
        raise ValidationError(f"sigma missing for frame_ids {missing[:10]}{'...' if len(missing) > 10 else ''}")
    return np.array([r.score / r.sigma for r in records], dtype=float)


def calibrate_adaptive(cal: Sequence[ScoreRecord], alpha: float, **meta) -> CalibrationResult:
    """Threshold ``q_tilde`` on difficulty-normalized scores ``s_i / sigma_i``."""
    cal = list(cal)
    if not cal:
        raise ValidationError("calibration set is empty")
    q = conformal_quantile(normalized_scores(cal), alpha)
    meta.setdefault("predictor_id", _common(cal, "predictor_id"))
    meta.setdefault("horizon", _common(cal, "horizon"))
    return CalibrationResult(ADAPTIVE, q, float(alpha), len(cal), **meta)


def region_radius(result: CalibrationResult, sigma: float | None = None) -> float:
    """Geodesic radius of the prediction region: ``q_hat`` or ``q_tilde * sigma``."""
    if result.kind == STANDARD:
        return result.threshold
    if sigma is None:
        raise ValidationError("adaptive calibration needs a sigma")
    if not (np.isfinite(sigma) and sigma > 0):
        raise ValidationError(f"sigma must be finite and > 0, got {sigma}")
    return result.threshold * float(sigma)


def covers(result: CalibrationResult, score: float, sigma: float | None = None) -> bool:
    """Whether a test score lies in the (closed) prediction region."""
    return bool(score <= region_radius(result, sigma))


def region_radii(result: CalibrationResult, records: Sequence[ScoreRecord]) -> np.ndarray:
    if result.kind == STANDARD:
        return np.full(len(records), result.threshold)
    sig = np.array([np.nan if r.sigma is None else r.sigma for r in records])
    if np.any(np.isnan(sig)):
        bad = [r.frame_id for r in records if r.sigma is None]
        raise ValidationError(f"adaptive calibration needs sigma; missing for frame_ids {bad[:10]}")
    return result.threshold * sig


def coverage_mask(result: CalibrationResult, records: Sequence[ScoreRecord]) -> np.ndarray:
    """Vectorized ``covers`` over test records."""
    return _scores(records) <= region_radii(result, records)
