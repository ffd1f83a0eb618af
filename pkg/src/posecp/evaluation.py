"""Conditional-coverage analytics: quartiles, coverage tables, overlap and reports."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field, fields
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from posecp.conformal import CalibrationResult, ScoreRecord, coverage_mask, region_radii
from posecp.errors import ValidationError
from posecp.se3_geometry import rodrigues
from posecp.rng import make_rng
from posecp.trajectory import Trajectory

QUARTILES = (1, 2, 3, 4)


@dataclass(frozen=True)
class QuartileAssignment:
    """frame_id -> quartile (1..4, 4 = largest scores).

    ``bounds`` are the scores at the first rank of Q2, Q3 and Q4.
    """

    quartile: Mapping[int, int]
    bounds: tuple[float, float, float]

    def members(self, q: int) -> list[int]:
        return sorted(fid for fid, v in self.quartile.items() if v == q)

    def sizes(self) -> tuple[int, int, int, int]:
        counts = np.bincount(np.fromiter(self.quartile.values(), dtype=np.int64), minlength=5)
        return tuple(int(c) for c in counts[1:5])

    def __getitem__(self, frame_id: int) -> int:
        return self.quartile[frame_id]

    def __contains__(self, frame_id) -> bool:
        return frame_id in self.quartile


def quartile_partition(scores: Sequence[ScoreRecord]) -> QuartileAssignment:
    """Split records into quartiles by score (ties broken by frame_id).

    Cuts fall at sorted ranks ``n//4``, ``n//2`` and ``3n//4``.
    """
    n = len(scores)
    if n < 4:
        raise ValidationError(f"quartile partition needs at least 4 records, got {n}")
    ids = np.array([r.frame_id for r in scores], dtype=np.int64)
    if np.unique(ids).size != n:
        raise ValidationError("duplicate frame_ids in score list")
    vals = np.array([r.score for r in scores], dtype=float)
    order = np.lexsort((ids, vals))
    cuts = (n // 4, n // 2, (3 * n) // 4)
    q = np.empty(n, dtype=np.int64)
    q[order] = np.searchsorted(np.array(cuts), np.arange(n), side="right") + 1
    bounds = tuple(float(vals[order[c]]) for c in cuts)
    return QuartileAssignment(dict(zip(ids.tolist(), q.tolist())), bounds)


@dataclass
class CoverageReport:
    """Overall and per-quartile empirical coverage for one evaluation cell."""

    participant: str
    predictor_id: str
    horizon: int | None
    score_fn: str
    kind: str
    split: str
    alpha: float
    threshold: float
    overall_coverage: float
    n_total: int
    coverage: tuple[float, float, float, float]
    n: tuple[int, int, int, int]
    mean_radius: tuple[float, float, float, float]
    quartile_bounds: tuple[float, float, float]
    displacement: tuple[float, float, float, float] | None = None
    model_hash: str | None = None

    @property
    def q4_coverage(self) -> float:
        return self.coverage[3]

    def to_dict(self) -> dict:
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            d[f.name] = list(v) if isinstance(v, tuple) else v
        if d["threshold"] == float("inf"):
            d["threshold"] = "inf"
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CoverageReport":
        d = dict(d)
        for k in ("coverage", "n", "mean_radius", "quartile_bounds", "displacement"):
            if d.get(k) is not None:
                d[k] = tuple(d[k])
        if d["threshold"] == "inf":
            d["threshold"] = float("inf")
        return cls(**{f.name: d.get(f.name) for f in fields(cls)})


def coverage_by_quartile(
    test: Sequence[ScoreRecord],
    result: CalibrationResult,
    q: QuartileAssignment,
    participant: str = "",
) -> CoverageReport:
    """Empirical coverage of ``result`` on ``test``, overall and per quartile."""
    test = list(test)
    if not test:
        raise ValidationError("empty test set")
    unassigned = [r.frame_id for r in test if r.frame_id not in q]
    if unassigned:
        raise ValidationError(f"frames without a quartile: {unassigned[:10]}")
    cov = coverage_mask(result, test)
    radii = region_radii(result, test)
    quart = np.array([q[r.frame_id] for r in test])
    covs, ns, rads = [], [], []
    for k in QUARTILES:
        sel = quart == k
        m = int(sel.sum())
        ns.append(m)
        covs.append(float(cov[sel].sum() / m) if m else float("nan"))
        rads.append(float(radii[sel].mean()) if m else float("nan"))
    preds = {r.predictor_id for r in test}
    horizons = {r.horizon for r in test}
    return CoverageReport(
        participant=participant,
        predictor_id=preds.pop() if len(preds) == 1 else "+".join(sorted(preds)),
        horizon=horizons.pop() if len(horizons) == 1 else None,
        score_fn=result.score_fn,
        kind=result.kind,
        split=result.provenance,
        alpha=result.alpha,
        threshold=result.threshold,
        overall_coverage=float(cov.sum() / len(test)),
        n_total=len(test),
        coverage=tuple(covs),
        n=tuple(ns),
        mean_radius=tuple(rads),
        quartile_bounds=q.bounds,
        model_hash=result.model_hash,
    )


def q4_overlap(scores_a: Sequence[ScoreRecord], scores_b: Sequence[ScoreRecord]) -> float:
    """Fraction of Q4 under scoring ``a`` that is also Q4 under scoring ``b``."""
    ids_a = {r.frame_id for r in scores_a}
    ids_b = {r.frame_id for r in scores_b}
    if ids_a != ids_b:
        diff = sorted(ids_a ^ ids_b)
        raise ValidationError(f"score lists cover different frames; symmetric difference {diff[:20]}")
    qa = set(quartile_partition(scores_a).members(4))
    qb = set(quartile_partition(scores_b).members(4))
    return len(qa & qb) / len(qa)


class QuartileDisplacement(NamedTuple):
    means: tuple[float, float, float, float]
    counts: tuple[int, int, int, int]
    skipped: int


def displacement_by_quartile(traj: Trajectory, q: QuartileAssignment) -> QuartileDisplacement:
    """Mean ground-truth displacement ``|t_i - t_{i-1}|`` of each quartile's frames.

    Frames with no predecessor in the same segment (or absent from ``traj``)
    are skipped and counted.
    """
    ids = np.fromiter(q.quartile.keys(), dtype=np.int64)
    quart = np.fromiter(q.quartile.values(), dtype=np.int64)
    pos = traj.indices_of(ids)
    ok = pos >= 1
    ok[ok] = traj.segments[pos[ok]] == traj.segments[pos[ok] - 1]
    d = np.zeros(ids.size)
    p = pos[ok]
    d[ok] = np.linalg.norm(traj.translations[p] - traj.translations[p - 1], axis=1)
    means, counts = [], []
    for k in QUARTILES:
        sel = ok & (quart == k)
        counts.append(int(sel.sum()))
        means.append(float(d[sel].mean()) if sel.any() else float("nan"))
    return QuartileDisplacement(tuple(means), tuple(counts), int((~ok).sum()))


def stratify_by_motion(
    scores_by_participant: Mapping[str, Sequence[float]], threshold: float = 50.0
) -> dict[str, list[str]]:
    """Group participants by median calibration score: ``> threshold`` is High."""
    groups: dict[str, list[str]] = {"High": [], "Low": []}
    for pid in sorted(scores_by_participant):
        s = np.asarray(scores_by_participant[pid], dtype=float)
        if s.size == 0:
            raise ValidationError(f"no calibration scores for participant {pid}")
        groups["High" if float(np.median(s)) > threshold else "Low"].append(pid)
    return groups


# ---------------------------------------------------------------------------
# synthetic generator


@dataclass(frozen=True)
class SegmentSpec:
    intensity: float
    noise_scale: float
    weight: float = 1.0


@dataclass(frozen=True)
class SyntheticConfig:
    """Generator settings for a heteroscedastic synthetic participant.

    Frames are laid out in blocks of ``segment_length``; each block takes one
    segment level, with block counts proportional to ``weight`` and (when
    ``shuffle``) block order permuted by the seed. Per-frame speed is
    ``intensity * base_speed`` and angular rate ``intensity * base_ang_rate``.
    The prediction is the truth perturbed by a random rotation of per-axis
    std ``noise_scale * rot_noise`` and a translation of per-axis std
    ``noise_scale * trans_noise``, so scores scale linearly with
    ``noise_scale``, which is the ground-truth sigma.
    """

    n_frames: int = 20000
    segments: tuple[SegmentSpec, ...] = (SegmentSpec(1.0, 1.0),)
    segment_length: int = 100
    shuffle: bool = True
    seed: int = 0
    participant_id: str = "SYN"
    base_speed: float = 0.01
    base_ang_rate: float = 0.004
    heading_jitter: float = 0.05
    rot_noise: float = 0.01
    trans_noise: float = 0.01

    def __post_init__(self):
        segs = tuple(s if isinstance(s, SegmentSpec) else SegmentSpec(**s) if isinstance(s, dict) else SegmentSpec(*s) for s in self.segments)
        object.__setattr__(self, "segments", segs)
        if self.n_frames < 2:
            raise ValidationError("n_frames must be at least 2")
        if not segs:
            raise ValidationError("at least one segment is required")
        for s in segs:
            if not (s.intensity >= 0 and s.noise_scale >= 0 and s.weight > 0):
                raise ValidationError(f"invalid segment {s}: intensity/noise must be >= 0, weight > 0")
            if not all(np.isfinite([s.intensity, s.noise_scale, s.weight])):
                raise ValidationError(f"invalid segment {s}: non-finite value")
        if self.segment_length < 1:
            raise ValidationError("segment_length must be >= 1")
        for name in ("base_speed", "base_ang_rate", "heading_jitter", "rot_noise", "trans_noise"):
            if not getattr(self, name) >= 0:
                raise ValidationError(f"{name} must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["segments"] = [asdict(s) for s in self.segments]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValidationError(f"unknown synthetic config keys {sorted(extra)}")
        d = dict(d)
        if "segments" in d:
            d["segments"] = tuple(SegmentSpec(**s) if isinstance(s, dict) else SegmentSpec(*s) for s in d["segments"])
        return cls(**d)


@dataclass(frozen=True, eq=False)
class SyntheticData:
    truth: Trajectory
    predicted: Trajectory
    sigma: np.ndarray  # ground-truth noise scale per frame
    level: np.ndarray  # segment level index per frame

    def sigma_by_frame(self) -> dict[int, float]:
        return dict(zip(self.truth.frame_ids.tolist(), self.sigma.tolist()))


def _block_levels(cfg: SyntheticConfig, rng: np.random.Generator) -> np.ndarray:
    n_blocks = -(-cfg.n_frames // cfg.segment_length)
    w = np.array([s.weight for s in cfg.segments], dtype=float)
    exact = w / w.sum() * n_blocks
    counts = np.floor(exact).astype(int)
    # largest remainder, ties to the earlier level
    rem = exact - counts
    for j in np.argsort(-rem, kind="stable")[: n_blocks - counts.sum()]:
        counts[j] += 1
    levels = np.repeat(np.arange(len(w)), counts)
    if cfg.shuffle:
        levels = rng.permutation(levels)
    return levels


def _random_walk_dirs(n: int, jitter: float, rng: np.random.Generator) -> np.ndarray:
    d = np.empty((n, 3))
    cur = rng.standard_normal(3)
    cur /= np.linalg.norm(cur)
    steps = rng.standard_normal((n, 3)) * jitter
    for i in range(n):
        cur = cur + steps[i]
        cur /= np.linalg.norm(cur)
        d[i] = cur
    return d


def generate_synthetic(config: SyntheticConfig) -> SyntheticData:
    """Smooth synthetic trajectory plus a heteroscedastically perturbed prediction."""
    cfg = config
    n = cfg.n_frames
    rng_layout = make_rng(cfg.seed, "synthetic", "layout")
    rng_motion = make_rng(cfg.seed, "synthetic", "motion")
    rng_noise = make_rng(cfg.seed, "synthetic", "noise")

    level = np.repeat(_block_levels(cfg, rng_layout), cfg.segment_length)[:n]
    intensity = np.array([s.intensity for s in cfg.segments])[level]
    sigma = np.array([s.noise_scale for s in cfg.segments], dtype=float)[level]

    heading = _random_walk_dirs(n, cfg.heading_jitter, rng_motion)
    axis = _random_walk_dirs(n, cfg.heading_jitter, rng_motion)
    steps = (intensity * cfg.base_speed)[:, None] * heading
    steps[0] = 0.0
    trans = np.cumsum(steps, axis=0)
    incr = rodrigues((intensity * cfg.base_ang_rate)[:, None] * axis)
    rots = np.empty((n, 3, 3))
    rots[0] = np.eye(3)
    for i in range(1, n):
        rots[i] = rots[i - 1] @ incr[i]

    d_rot = rng_noise.standard_normal((n, 3)) * (sigma * cfg.rot_noise)[:, None]
    d_trans = rng_noise.standard_normal((n, 3)) * (sigma * cfg.trans_noise)[:, None]
    pred_R = rots @ rodrigues(d_rot)
    pred_t = trans + d_trans

    ids = np.arange(n, dtype=np.int64)
    truth = Trajectory(cfg.participant_id, ids, rots, trans)
    predicted = Trajectory(cfg.participant_id, ids, pred_R, pred_t)
    return SyntheticData(truth, predicted, sigma, level)


# ---------------------------------------------------------------------------
# reports

_CSV_SCALARS = (
    "participant", "predictor_id", "horizon", "score_fn", "kind", "split",
    "alpha", "threshold", "overall_coverage", "n_total",
)
_CSV_VECTORS = {
    "coverage": ("q1_coverage", "q2_coverage", "q3_coverage", "q4_coverage"),
    "n": ("q1_n", "q2_n", "q3_n", "q4_n"),
    "mean_radius": ("q1_radius", "q2_radius", "q3_radius", "q4_radius"),
    "quartile_bounds": ("q2_bound", "q3_bound", "q4_bound"),
    "displacement": ("q1_displacement", "q2_displacement", "q3_displacement", "q4_displacement"),
}
CSV_COLUMNS = _CSV_SCALARS + tuple(c for cols in _CSV_VECTORS.values() for c in cols) + ("model_hash",)
_INT_FIELDS = {"n_total", "horizon", "q1_n", "q2_n", "q3_n", "q4_n"}
_STR_FIELDS = {"participant", "predictor_id", "score_fn", "kind", "split", "model_hash"}


def _fmt_num(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _as_list(reports) -> list[CoverageReport]:
    if isinstance(reports, CoverageReport):
        return [reports]
    return list(reports)


def _cell_key(r: CoverageReport):
    return (r.participant, r.predictor_id, r.horizon if r.horizon is not None else -1, r.score_fn, r.kind, r.split)


def sort_reports(reports: Iterable[CoverageReport]) -> list[CoverageReport]:
    return sorted(reports, key=_cell_key)


def reports_to_csv(reports) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in _as_list(reports):
        row = []
        for name in _CSV_SCALARS:
            v = getattr(r, name)
            row.append(v if name in _STR_FIELDS else _fmt_num(v))
        for name, cols in _CSV_VECTORS.items():
            vec = getattr(r, name)
            row.extend(_fmt_num(x) for x in (vec if vec is not None else [None] * len(cols)))
        row.append(r.model_hash or "")
        w.writerow(row)
    return out.getvalue()


def parse_csv_reports(text: str) -> list[CoverageReport]:
    """Inverse of the CSV emitter."""
    rows = list(csv.DictReader(io.StringIO(text)))
    out = []
    for row in rows:
        def conv(name):
            v = row[name]
            if name in _STR_FIELDS:
                return v or (None if name == "model_hash" else "")
            if v == "":
                return None
            return int(v) if name in _INT_FIELDS else float(v)

        d = {name: conv(name) for name in _CSV_SCALARS}
        for name, cols in _CSV_VECTORS.items():
            vals = [conv(c) for c in cols]
            d[name] = None if all(v is None for v in vals) else tuple(vals)
        d["model_hash"] = conv("model_hash")
        out.append(CoverageReport(**d))
    return out


def _sort_key(x):
    return (0, x, "") if isinstance(x, (int, float)) else (1, 0, str(x))


def render_grid(
    reports: Sequence,
    row_key,
    col_key,
    value,
    row_label: str = "",
    mean_row: bool = True,
    fmt: str = "{:.3f}",
) -> str:
    """Plain-text grid with one row per ``row_key(r)``.

    ``col_key(r)`` returns ``(band, column)``; the band is printed once
    above its first column.
    """
    reports = list(reports)
    rows = sorted({row_key(r) for r in reports}, key=_sort_key)
    cols = sorted({col_key(r) for r in reports}, key=lambda c: tuple(_sort_key(x) for x in c))
    cell = {(row_key(r), col_key(r)): value(r) for r in reports}
    width = max([7] + [len(str(c[1])) for c in cols])
    first = max([len(row_label), 4] + [len(str(x)) for x in rows])
    bands, prev = [], None
    for c in cols:
        bands.append(str(c[0]) if c[0] != prev else "")
        prev = c[0]
    lines = [
        " " * first + "".join(" " + b.ljust(width) for b in bands).rstrip(),
        row_label.ljust(first) + "".join(" " + str(c[1]).rjust(width) for c in cols),
    ]
    rule = "-" * len(lines[-1])
    lines.append(rule)

    def fmt_cell(v):
        return (fmt.format(v) if v is not None else "-").rjust(width)

    for rk in rows:
        lines.append(str(rk).ljust(first) + "".join(" " + fmt_cell(cell.get((rk, c))) for c in cols))
    if mean_row and len(rows) > 1:
        lines.append(rule)
        means = []
        for c in cols:
            vs = [cell[(rk, c)] for rk in rows if (rk, c) in cell]
            means.append(float(np.mean(vs)) if vs else None)
        lines.append("Mean".ljust(first) + "".join(" " + fmt_cell(m) for m in means))
    return "\n".join(lines) + "\n"


def _horizon_label(r: CoverageReport) -> str:
    return f"k={r.horizon}" if r.horizon is not None else "k=?"


def participant_table(reports: Sequence[CoverageReport]) -> str:
    """Q4 coverage, participants x (horizon, predictor)."""
    return render_grid(
        reports,
        row_key=lambda r: r.participant,
        col_key=lambda r: (_horizon_label(r), r.predictor_id),
        value=lambda r: r.q4_coverage,
        row_label="P",
    )


def method_table(reports: Sequence[CoverageReport]) -> str:
    """Overall and Q4 coverage, methods x (horizon, {Ovr, Q4})."""
    expanded = []
    for r in reports:
        expanded.append((r, "Ovr", r.overall_coverage))
        expanded.append((r, "Q4", r.q4_coverage))
    groups: dict[str, list] = {}
    for r, col, v in expanded:
        groups.setdefault(f"{r.split} [{r.participant}]" if r.participant else r.split, []).append((r, col, v))
    blocks = []
    for title in sorted(groups):
        items = groups[title]
        rows = sorted({(r.kind if r.score_fn == "geodesic" else f"{r.kind}/{r.score_fn}") for r, _, _ in items})
        cols = sorted({(r.horizon or 0, col) for r, col, _ in items}, key=lambda c: (c[0], c[1] != "Ovr"))
        cell = {((r.kind if r.score_fn == "geodesic" else f"{r.kind}/{r.score_fn}"), (r.horizon or 0, col)): v for r, col, v in items}
        first = max(8, *(len(x) for x in rows))
        hdr1 = " " * first + "".join(" " + (f"k={k}" if col == "Ovr" else "").rjust(7) for k, col in cols)
        hdr2 = "Method".ljust(first) + "".join(" " + col.rjust(7) for _, col in cols)
        lines = [title, hdr1, hdr2, "-" * len(hdr2)]
        for rk in rows:
            lines.append(rk.ljust(first) + "".join(
                " " + (f"{cell[(rk, c)]:.3f}" if (rk, c) in cell else "-").rjust(7) for c in cols))
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


@dataclass(frozen=True)
class OverlapSummary:
    """Geodesic-vs-Euclidean Q4 agreement for one cell."""

    participant: str
    predictor_id: str
    horizon: int | None
    overlap: float
    geodesic_q4_displacement: float | None = None
    euclidean_q4_displacement: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def overlap_table(rows: Sequence[OverlapSummary]) -> str:
    """Overlap row per predictor: Q4 overlap (percent) per (participant, horizon)."""
    return render_grid(
        rows,
        row_key=lambda r: r.predictor_id,
        col_key=lambda r: (r.participant, f"k={r.horizon}"),
        value=lambda r: 100.0 * r.overlap,
        row_label="Q4 overlap %",
        mean_row=False,
        fmt="{:.0f}%",
    )


def emit_report(reports, format: str = "json", extra: Mapping | None = None) -> str:
    """Serialize coverage report(s) as ``json``, ``csv``, or a plain-text ``table``.

    The table layout is the per-method (Ovr/Q4 by horizon) layout when the
    reports mix calibration kinds or score functions, otherwise the
    participant x (horizon, predictor) Q4 grid.
    """
    reports = _as_list(reports)
    if format == "json":
        doc = {"reports": [r.to_dict() for r in reports]}
        if extra:
            doc = {**dict(extra), **doc}
        return json.dumps(doc, indent=2) + "\n"
    if format == "csv":
        return reports_to_csv(reports)
    if format == "table":
        if len({r.kind for r in reports}) > 1 or len({r.score_fn for r in reports}) > 1:
            return method_table(reports)
        return participant_table(reports)
    raise ValidationError(f"unknown report format {format!r}; expected json, csv or table")


def load_reports_json(text: str) -> list[CoverageReport]:
    doc = json.loads(text)
    items = doc["reports"] if isinstance(doc, dict) else doc
    return [CoverageReport.from_dict(d) for d in items]


def pool_reports(reports: Sequence[CoverageReport], participant: str | None = None) -> CoverageReport:
    """n-weighted combination of per-participant reports of one cell.

    Quartiles stay per participant; pooled quartile coverage is the
    count-weighted mean. ``quartile_bounds`` are NaN because the pooled set
    has no single partition.
    """
    reports = list(reports)
    if not reports:
        raise ValidationError("nothing to pool")
    first = reports[0]
    n = np.array([r.n for r in reports], dtype=float)  # (m, 4)
    tot = n.sum(axis=0)

    def wmean(attr):
        vals = np.array([getattr(r, attr) for r in reports], dtype=float)
        return tuple(float(x) for x in (vals * n).sum(axis=0) / tot)

    n_total = int(sum(r.n_total for r in reports))
    overall = float(sum(r.overall_coverage * r.n_total for r in reports) / n_total)
    disp = None
    if all(r.displacement is not None for r in reports):
        disp = wmean("displacement")
    return CoverageReport(
        participant=participant or "+".join(r.participant for r in reports),
        predictor_id=first.predictor_id,
        horizon=first.horizon,
        score_fn=first.score_fn,
        kind=first.kind,
        split=first.split,
        alpha=first.alpha,
        threshold=first.threshold,
        overall_coverage=overall,
        n_total=n_total,
        coverage=wmean("coverage"),
        n=tuple(int(x) for x in tot),
        mean_radius=wmean("mean_radius"),
        quartile_bounds=(float("nan"),) * 3,
        displacement=disp,
        model_hash=first.model_hash,
    )


# desk-scale fixture: three moderate motion regimes and one fast regime
# holding a quarter of the frames, noise scales spanning 10x
HETERO_SEGMENTS = (
    SegmentSpec(0.5, 1.0),
    SegmentSpec(1.0, 1.5),
    SegmentSpec(2.0, 2.2),
    SegmentSpec(6.0, 10.0),
)


def heteroscedastic_config(n_frames: int = 20000, seed: int = 0, participant_id: str = "SYN",
                           weights: Sequence[float] | None = None) -> SyntheticConfig:
    segs = HETERO_SEGMENTS
    if weights is not None:
        if len(weights) != len(segs):
            raise ValidationError(f"expected {len(segs)} mixture weights")
        segs = tuple(SegmentSpec(s.intensity, s.noise_scale, float(w)) for s, w in zip(segs, weights))
    return SyntheticConfig(n_frames=n_frames, segments=segs, seed=seed, participant_id=participant_id)
