"""Command-line entry point: ``posecp {synth,train-bridge,calibrate,eval,report}``.

Exit codes: 0 success, 1 data/validation error, 2 usage/config error.

A JSON file given with ``--config`` supplies defaults for any flag (keys
are the flag names with dashes replaced by underscores); explicit flags
win. The effective configuration is echoed into every JSON output.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from posecp import pipeline
from posecp.conformal import CalibrationResult
from posecp.difficulty import (
    DifficultyModel,
    TeacherScore,
    TrainConfig,
    dump_teacher_scores,
    feature_matrix,
    fit_bridge,
    load_teacher_scores,
    predict_sigmas,
)
from posecp.errors import PoseCPError
from posecp.evaluation import (
    OverlapSummary,
    SyntheticConfig,
    displacement_by_quartile,
    emit_report,
    generate_synthetic,
    heteroscedastic_config,
    load_reports_json,
    method_table,
    overlap_table,
    participant_table,
    pool_reports,
    q4_overlap,
    quartile_partition,
    sort_reports,
)
from posecp.se3_geometry import ScoreWeights
from posecp.predictors import CONST_VEL, load_external_predictions
from posecp.rng import make_rng
from posecp.trajectory import SplitSpec, Trajectory, dump_trajectory, load_trajectory, split


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument helpers


def _labelled(spec: str) -> tuple[str | None, str]:
    if "=" in spec:
        label, path = spec.split("=", 1)
        return label, path
    return None, spec


def _participants(values) -> list[str]:
    out = []
    for v in values or []:
        out.extend(x for x in str(v).split(",") if x)
    return out


def parse_split(text: str, cal=None, test=None) -> SplitSpec:
    """``within[:fraction]`` or ``cross`` (participants from the other flags)."""
    if text.startswith("within"):
        frac = 0.5
        if ":" in text:
            try:
                frac = float(text.split(":", 1)[1])
            except ValueError:
                raise UsageError(f"bad split fraction in {text!r}") from None
        return SplitSpec.within(frac)
    if text.startswith("cross"):
        # provenance form: cross:cal=A+B;test=C+D
        if ":" in text and not cal and not test:
            body = dict(part.split("=", 1) for part in text.split(":", 1)[1].split(";"))
            cal = body.get("cal", "").split("+")
            test = body.get("test", "").split("+")
        cal, test = _participants(cal), _participants(test)
        if not cal or not test:
            raise UsageError("--split cross needs --cal-participants and --test-participants")
        return SplitSpec.cross(cal, test)
    raise UsageError(f"unknown split {text!r}; use within:<fraction> or cross")


def _weights(args) -> ScoreWeights:
    return ScoreWeights(
        args.w_rot if args.w_rot is not None else 1.0,
        args.w_trans if args.w_trans is not None else 1.0,
    )


def effective_config(args) -> dict:
    skip = {"func", "config"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _write(path: str | None, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _load_json(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# data loading


@dataclass
class ExternalSource:
    participant: str
    predictor_id: str
    k: int
    path: str


def load_trajectories(specs) -> dict[str, Trajectory]:
    trajs = {}
    for spec in specs or []:
        label, path = _labelled(spec)
        label = label or Path(path).stem
        if label in trajs:
            raise UsageError(f"trajectory for {label} given twice")
        trajs[label] = load_trajectory(path, label)
    return trajs


def external_id(name: str) -> str:
    return name if name.startswith("external:") else f"external:{name}"


def external_sources(args, trajs) -> list[ExternalSource]:
    out = []
    ks = args.k or [1]
    if args.predictions:
        if len(ks) != 1:
            raise UsageError("--predictions files carry one horizon; pass a single --k or use --manifest")
        for spec in args.predictions:
            label, path = _labelled(spec)
            if label is None:
                if len(trajs) != 1:
                    raise UsageError("label --predictions as PARTICIPANT=PATH when several trajectories are loaded")
                label = next(iter(trajs))
            out.append(ExternalSource(label, external_id(args.predictor_name), int(ks[0]), path))
    if getattr(args, "manifest", None):
        doc = _load_json(args.manifest)
        base = Path(args.manifest).parent
        for e in doc.get("predictions", []):
            path = e["path"] if os.path.isabs(e["path"]) else str(base / e["path"])
            out.append(ExternalSource(e["participant"], external_id(e["predictor"]), int(e["k"]), path))
    return out


def manifest_trajectories(args) -> dict[str, Trajectory]:
    trajs = load_trajectories(args.trajectory)
    if getattr(args, "manifest", None):
        doc = _load_json(args.manifest)
        base = Path(args.manifest).parent
        for label, path in doc.get("trajectories", {}).items():
            if label in trajs:
                continue
            p = path if os.path.isabs(path) else str(base / path)
            trajs[label] = load_trajectory(p, label)
    if not trajs:
        raise UsageError("no trajectories given (--trajectory or --manifest)")
    return trajs


def load_model(path: str | None) -> DifficultyModel | None:
    if path is None:
        return None
    with open(path, encoding="utf-8") as fh:
        return DifficultyModel.from_json(fh.read())


# ---------------------------------------------------------------------------
# cells


@dataclass(frozen=True)
class Cell:
    predictor_id: str
    k: int


def _side_records(trajs, cal_trajs, test_trajs, cell, sources, score_fn, w, sigma):
    """Score every participant once on its full trajectory, then route records by side."""
    def records_for(pid):
        ext = None
        if cell.predictor_id != CONST_VEL:
            match = [s for s in sources if s.participant == pid and s.predictor_id == cell.predictor_id and s.k == cell.k]
            if not match:
                raise UsageError(f"no {cell.predictor_id} predictions (k={cell.k}) for {pid}")
            ext = load_external_predictions(match[0].path, cell.predictor_id, cell.k)
        recs = pipeline.score_cell(trajs[pid], cell.predictor_id, cell.k, score_fn, w, ext)
        if sigma is not None:
            recs = pipeline.attach_sigma(recs, sigma[pid])
        return recs

    cache = {}

    def pick(side):
        out = {}
        for t in side:
            pid = t.participant_id
            if pid not in cache:
                cache[pid] = records_for(pid)
            ids = set(t.frame_ids.tolist())
            out[pid] = [r for r in cache[pid] if r.frame_id in ids]
        return out

    return pick(cal_trajs), pick(test_trajs)


def _cells(args, sources) -> list[Cell]:
    cells = []
    preds = args.predictor or ([] if sources else [CONST_VEL])
    if CONST_VEL in preds:
        cells += [Cell(CONST_VEL, int(k)) for k in (args.k or [10])]
    for s in sources:
        c = Cell(s.predictor_id, s.k)
        if c not in cells:
            cells.append(c)
    return cells


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args) -> int:
    if args.preset == "hetero":
        cfg = heteroscedastic_config(args.n_frames or 20000, args.seed, args.participant or "SYN")
        d = cfg.to_dict()
    else:
        d = SyntheticConfig().to_dict()
    if args.spec:
        d.update(_load_json(args.spec))
    if args.n_frames is not None:
        d["n_frames"] = args.n_frames
    if args.participant is not None:
        d["participant_id"] = args.participant
    d["seed"] = args.seed
    cfg = SyntheticConfig.from_dict(d)
    data = generate_synthetic(cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write(str(out / "truth.txt"), dump_trajectory(data.truth))
    _write(str(out / "pred.txt"), dump_trajectory(data.predicted))
    _write(str(out / "sigma.txt"), "".join(f"{i} {s!r}\n" for i, s in zip(data.truth.frame_ids.tolist(), data.sigma.tolist())))
    _write(str(out / "synth.json"), json.dumps({"config": effective_config(args), "generator": cfg.to_dict()}, indent=2) + "\n")
    print(f"wrote {len(data.truth)} frames to {out}")
    return 0


def cmd_train_bridge(args) -> int:
    trajs = load_trajectories(args.trajectory)
    if len(trajs) != 1:
        raise UsageError("train-bridge takes exactly one --trajectory")
    (pid, traj), = trajs.items()
    cfg = TrainConfig(
        hidden=tuple(args.hidden),
        batch_size=args.batch_size,
        learning_rate=args.lr,
        steps=args.steps,
        window=args.window,
    )
    ids, X = feature_matrix(traj, cfg.window)
    row = {fid: n for n, fid in enumerate(ids.tolist())}
    if args.targets == "teacher":
        if not args.teacher:
            raise UsageError("--targets teacher needs --teacher FILE")
        teacher = load_teacher_scores(args.teacher)
    else:
        sources = external_sources(args, trajs)
        pred = sources[0].predictor_id if sources else CONST_VEL
        k = sources[0].k if sources else int((args.k or [10])[0])
        ext = load_external_predictions(sources[0].path, pred, k) if sources else None
        recs = pipeline.score_cell(traj, pred, k, args.score or "geodesic", _weights(args), ext)
        pos = [r.score for r in recs if r.score > 0]
        if not pos:
            raise PoseCPError("all residuals are zero; nothing to learn")
        eps = 1e-6 * float(np.median(pos))
        teacher = [TeacherScore(r.frame_id, max(r.score, eps)) for r in recs]
    present = traj.indices_of([t.frame_id for t in teacher])
    if np.any(present < 0):
        first = teacher[int(np.flatnonzero(present < 0)[0])].frame_id
        raise PoseCPError(f"teacher frame_id {first} is not in trajectory {pid}")
    pairs = [(row[t.frame_id], t.value) for t in teacher if t.frame_id in row]
    if not pairs:
        raise PoseCPError("no teacher frames have a full feature window")
    rows = np.array([p[0] for p in pairs])
    y = np.array([p[1] for p in pairs])
    rng = make_rng(args.seed, "holdout")
    perm = rng.permutation(rows.size)
    n_hold = int(round(args.holdout * rows.size))
    hold, train = perm[:n_hold], perm[n_hold:]
    model = fit_bridge(X[rows[train]], y[train], cfg, seed=args.seed)
    rho = float("nan")
    if n_hold >= 3:
        rho = float(spearmanr(predict_sigmas(model, X[rows[hold]]), y[hold])[0])
    doc = model.to_dict()
    doc["training"] = {
        "participant": pid,
        "n_train": int(train.size),
        "n_holdout": int(n_hold),
        "heldout_spearman": rho,
        "train_config": cfg.to_dict(),
    }
    doc["config"] = effective_config(args)
    _write(args.out, json.dumps(doc, indent=1) + "\n")
    print(f"final_loss={model.final_loss:.6g} heldout_spearman={rho:.4f} hash={model.content_hash}")
    return 0


def _split_from(args, trajs, fallback: str | None = None) -> SplitSpec:
    text = args.split or fallback or "within:0.5"
    spec = parse_split(text, args.cal_participants, args.test_participants)
    return spec


def cmd_calibrate(args) -> int:
    if args.adaptive and not args.model:
        raise UsageError("--adaptive requires --model")
    trajs = manifest_trajectories(args)
    spec = _split_from(args, trajs)
    cal_trajs, test_trajs = split(list(trajs.values()), spec)
    sources = external_sources(args, trajs)
    cells = _cells(args, sources)
    if len(cells) != 1:
        raise UsageError("calibrate handles one predictor and one --k; use eval for grids")
    cell = cells[0]
    model = load_model(args.model) if args.adaptive else None
    sigma = pipeline.model_sigma(model, list(trajs.values())) if model else None
    w = _weights(args)
    score_fn = args.score or "geodesic"
    cal, _ = _side_records(trajs, cal_trajs, test_trajs, cell, sources, score_fn, w, sigma)
    records = [r for pid in sorted(cal) for r in cal[pid]]
    result = pipeline.calibrate(
        records, args.alpha, args.adaptive, score_fn, w, spec.describe(),
        model.content_hash if model else None,
    )
    doc = result.to_dict()
    doc["config"] = effective_config(args)
    _write(args.out, json.dumps(doc, indent=2) + "\n")
    return 0


def _eval_cell(cell, trajs, spec, sources, args, model, sigma, calibration=None):
    cal_trajs, test_trajs = split(list(trajs.values()), spec)
    w = _weights(args) if calibration is None else calibration.weights
    score_fn = (args.score or "geodesic") if calibration is None else calibration.score_fn
    cal, test = _side_records(trajs, cal_trajs, test_trajs, cell, sources, score_fn, w, sigma)
    reports, overlaps = [], []

    def result_for(records):
        if calibration is not None:
            return calibration
        return pipeline.calibrate(records, args.alpha, args.adaptive, score_fn, w, spec.describe(),
                                  model.content_hash if model else None)

    if spec.kind == "within_participant":
        for pid in sorted(test):
            res = result_for(cal[pid])
            reports.append(pipeline.evaluate(test[pid], res, pid, trajs[pid]))
    else:
        res = result_for([r for pid in sorted(cal) for r in cal[pid]])
        per = [pipeline.evaluate(test[pid], res, pid, trajs[pid]) for pid in sorted(test)]
        reports.extend(per)
        if len(per) > 1:
            reports.append(pool_reports(per))
    if args.compare_euclidean:
        other = "euclidean" if score_fn == "geodesic" else "geodesic"
        _, test_other = _side_records(trajs, cal_trajs, test_trajs, cell, sources, other, w, None)
        for pid in sorted(test):
            a, b = test[pid], test_other[pid]
            keep = {r.frame_id for r in a}
            b = [r for r in b if r.frame_id in keep]
            qa, qb = quartile_partition(a), quartile_partition(b)
            geo, euc = (qa, qb) if score_fn == "geodesic" else (qb, qa)
            overlaps.append(OverlapSummary(
                pid, cell.predictor_id, cell.k, q4_overlap(a, b),
                displacement_by_quartile(trajs[pid], geo).means[3],
                displacement_by_quartile(trajs[pid], euc).means[3],
            ))
    return reports, overlaps


def cmd_eval(args) -> int:
    if args.adaptive and not args.model and not args.calibration:
        raise UsageError("--adaptive requires --model")
    trajs = manifest_trajectories(args)
    sources = external_sources(args, trajs)
    jobs = []
    if args.calibration:
        for path in args.calibration:
            doc = _load_json(path)
            res = CalibrationResult.from_dict(doc)
            if args.score is not None and args.score != res.score_fn:
                raise PoseCPError(f"--score {args.score} does not match calibration score_fn {res.score_fn} ({path})")
            if (args.w_rot is not None and args.w_rot != res.weights.w_rot) or (
                args.w_trans is not None and args.w_trans != res.weights.w_trans
            ):
                raise PoseCPError(f"score weights do not match calibration {path}")
            model = None
            if res.kind == "adaptive":
                if not args.model:
                    raise UsageError(f"{path} is adaptive; pass --model")
                model = load_model(args.model)
                if model.content_hash != res.model_hash:
                    raise PoseCPError(f"model hash {model.content_hash[:12]} does not match calibration {path}")
            spec = _split_from(args, trajs, res.provenance)
            if res.predictor_id is None or res.horizon is None:
                raise PoseCPError(f"calibration {path} has no predictor/horizon recorded")
            jobs.append((Cell(res.predictor_id, int(res.horizon)), spec, model, res))
    else:
        model = load_model(args.model) if args.adaptive else None
        spec = _split_from(args, trajs)
        jobs = [(c, spec, model, None) for c in _cells(args, sources)]

    sigma_cache: dict[str, dict] = {}

    def sigma_for(model):
        if model is None:
            return None
        h = model.content_hash
        if h not in sigma_cache:
            sigma_cache[h] = pipeline.model_sigma(model, list(trajs.values()))
        return sigma_cache[h]

    def run(job):
        cell, spec, model, res = job
        return _eval_cell(cell, trajs, spec, sources, args, model, sigma_for(model), res)

    for job in jobs:
        sigma_for(job[2])
    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        results = list(pool.map(run, jobs))
    reports = sort_reports(r for reps, _ in results for r in reps)
    overlaps = sorted((o for _, ovs in results for o in ovs), key=lambda o: (o.participant, o.predictor_id, o.horizon))
    if args.format == "json":
        extra = {"config": effective_config(args)}
        if overlaps:
            extra["overlaps"] = [o.to_dict() for o in overlaps]
        text = emit_report(reports, "json", extra)
    elif args.format == "table" and overlaps:
        text = emit_report(reports, "table") + "\n" + overlap_table(overlaps)
    else:
        text = emit_report(reports, args.format)
    _write(args.out, text)
    return 0


def cmd_report(args) -> int:
    reports, overlaps = [], []
    for path in args.inputs:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        reports.extend(load_reports_json(text))
        doc = json.loads(text)
        if isinstance(doc, dict):
            overlaps.extend(OverlapSummary(**o) for o in doc.get("overlaps", []))
    reports = sort_reports(reports)
    if args.layout == "overlap":
        if not overlaps:
            raise PoseCPError("inputs carry no overlap rows (run eval with --compare-euclidean)")
        text = overlap_table(overlaps)
    elif args.format == "table" and args.layout == "participants":
        text = participant_table(reports)
    elif args.format == "table" and args.layout == "methods":
        text = method_table(reports)
    else:
        text = emit_report(reports, args.format)
    _write(args.out, text)
    return 0


# ---------------------------------------------------------------------------
# parser


def _common(p, *, data=True):
    p.add_argument("--config", help="JSON file of flag defaults")
    p.add_argument("--seed", type=int, default=0)
    if not data:
        return
    p.add_argument("--trajectory", action="append", metavar="[LABEL=]PATH",
                   help="ground-truth pose file; repeat for several participants")
    p.add_argument("--predictions", action="append", metavar="[LABEL=]PATH",
                   help="external predictions (pose or score lines) for one participant")
    p.add_argument("--predictor-name", default="ext", help="name for --predictions (id becomes external:NAME)")
    p.add_argument("--predictor", action="append", choices=[CONST_VEL],
                   help="built-in predictor to evaluate (default const_vel when no external predictions)")
    p.add_argument("--manifest", help="JSON listing trajectories and external prediction files")
    p.add_argument("--k", type=int, action="append", help="prediction horizon(s) in frames")
    p.add_argument("--score", choices=["geodesic", "euclidean"], default=None)
    p.add_argument("--w-rot", type=float, default=None)
    p.add_argument("--w-trans", type=float, default=None)


def _cp_flags(p):
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--adaptive", action="store_true", help="difficulty-normalized calibration")
    p.add_argument("--model", help="difficulty model JSON (required with --adaptive)")
    p.add_argument("--split", default=None, help="within:<fraction> (default within:0.5) or cross")
    p.add_argument("--cal-participants", action="append")
    p.add_argument("--test-participants", action="append")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="posecp", description="Geodesic and adaptive conformal prediction for camera poses.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic heteroscedastic participant")
    _common(p, data=False)
    p.add_argument("--spec", help="generator config JSON (overrides the preset)")
    p.add_argument("--preset", choices=["hetero", "default"], default="hetero")
    p.add_argument("--n-frames", type=int, default=None)
    p.add_argument("--participant", default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train-bridge", help="train the kinematic difficulty regressor")
    _common(p)
    p.add_argument("--teacher", help="teacher score file 'frame_id value'")
    p.add_argument("--targets", choices=["teacher", "residuals"], default="teacher")
    p.add_argument("--hidden", type=int, nargs="+", default=[64, 64])
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--steps", type=int, default=5000)
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--holdout", type=float, default=0.2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_bridge)

    p = sub.add_parser("calibrate", help="compute a conformal threshold")
    _common(p)
    _cp_flags(p)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("eval", help="evaluate overall and per-quartile coverage")
    _common(p)
    _cp_flags(p)
    p.add_argument("--calibration", action="append", help="CalibrationResult JSON; repeat for several cells")
    p.add_argument("--compare-euclidean", action="store_true", help="also report geodesic vs Euclidean Q4 overlap")
    p.add_argument("--format", choices=["json", "csv", "table"], default="json")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="re-render report JSON files")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--config", help="JSON file of flag defaults")
    p.add_argument("--format", choices=["json", "csv", "table"], default="table")
    p.add_argument("--layout", choices=["auto", "participants", "methods", "overlap"], default="auto")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_report)
    return parser


def _apply_config(parser, argv):
    """Re-parse with JSON config values as defaults so explicit flags win."""
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    try:
        cfg = _load_json(args.config)
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"cannot read --config {args.config}: {exc}")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in sub._actions}
    unknown = set(cfg) - known
    if unknown:
        parser.error(f"unknown keys in {args.config}: {sorted(unknown)}")
    sub.set_defaults(**cfg)
    return parser.parse_args(argv)


_PATH_FLAGS = ("trajectory", "predictions", "manifest", "model", "teacher", "calibration", "spec", "inputs")


def _check_paths(parser, args) -> None:
    for name in _PATH_FLAGS:
        val = getattr(args, name, None)
        if val is None:
            continue
        for spec in val if isinstance(val, list) else [val]:
            path = _labelled(spec)[1] if name in ("trajectory", "predictions") else spec
            if not os.path.exists(path):
                parser.error(f"--{name.replace('_', '-')}: no such file {path}")


def main(argv=None) -> int:
    parser = build_parser()
    args = _apply_config(parser, argv)
    _check_paths(parser, args)
    try:
        if not 0.0 < getattr(args, "alpha", 0.5) < 1.0:
            raise UsageError("--alpha must be in (0, 1)")
        for k in getattr(args, "k", None) or []:
            if k < 1:
                raise UsageError("--k must be >= 1")
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (PoseCPError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"posecp: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
