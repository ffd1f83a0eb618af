"""The ``posecp`` command: exit codes, artifacts and determinism."""
import json
import os
from pathlib import Path

import numpy as np
import pytest

from posecp.cli import main
from posecp.conformal import CalibrationResult
from posecp.difficulty import DifficultyModel
from posecp.evaluation import generate_synthetic, heteroscedastic_config, load_reports_json, parse_csv_reports
from posecp.trajectory import dump_trajectory, load_trajectory

N = 3000
STEPS = "400"


def run(*argv):
    try:
        return main([str(a) for a in argv])
    except SystemExit as exc:
        return exc.code


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Two synthetic participants and a bridge trained on the first."""
    d = tmp_path_factory.mktemp("cli")
    cwd = os.getcwd()
    os.chdir(d)
    try:
        assert run("synth", "--out-dir", "A", "--participant", "A", "--n-frames", N, "--seed", 0) == 0
        assert run("synth", "--out-dir", "B", "--participant", "B", "--n-frames", N, "--seed", 1) == 0
        assert run("train-bridge", "--trajectory", "A=A/truth.txt", "--teacher", "A/sigma.txt",
                   "--steps", STEPS, "--out", "model.json") == 0
    finally:
        os.chdir(cwd)
    return d


@pytest.fixture
def in_workdir(workdir, monkeypatch):
    monkeypatch.chdir(workdir)
    return workdir


B_DATA = ("--trajectory", "B=B/truth.txt", "--predictions", "B=B/pred.txt", "--predictor-name", "synth", "--k", 1)


class TestExitCodes:
    def test_adaptive_without_model_is_usage_error(self, in_workdir, capsys):
        assert run("calibrate", *B_DATA, "--adaptive") == 2
        assert "--model" in capsys.readouterr().err
        assert run("eval", *B_DATA, "--adaptive") == 2

    def test_missing_file_is_usage_error(self, in_workdir):
        assert run("calibrate", "--trajectory", "nope.txt") == 2

    def test_bad_alpha_is_usage_error(self, in_workdir):
        assert run("calibrate", *B_DATA, "--alpha", 1.5) == 2

    def test_unknown_split_is_usage_error(self, in_workdir):
        assert run("calibrate", *B_DATA, "--split", "sideways") == 2

    def test_data_error_exits_one(self, in_workdir, tmp_path, capsys):
        bad = tmp_path / "bad.txt"
        bad.write_text("5 0 0 0 1 0 0 0\n3 0 0 0 1 0 0 0\n")
        assert run("calibrate", "--trajectory", f"X={bad}") == 1
        assert "line 2" in capsys.readouterr().err

    def test_unknown_config_key(self, in_workdir, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"alpah": 0.2}))
        assert run("calibrate", *B_DATA, "--config", cfg) == 2


class TestSynth:
    def test_files_and_byte_identity(self, tmp_path, monkeypatch):
        outputs = []
        for run_dir in ("x", "y"):
            (tmp_path / run_dir).mkdir()
            monkeypatch.chdir(tmp_path / run_dir)
            assert run("synth", "--out-dir", "s", "--n-frames", 500, "--seed", 3) == 0
            outputs.append({p.name: p.read_bytes() for p in (tmp_path / run_dir / "s").iterdir()})
        assert sorted(outputs[0]) == ["pred.txt", "sigma.txt", "synth.json", "truth.txt"]
        assert outputs[0] == outputs[1]

    def test_zero_noise_prediction_equals_truth(self, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"segments": [{"intensity": 1.0, "noise_scale": 0.0}]}))
        assert run("synth", "--spec", spec, "--n-frames", 300, "--out-dir", tmp_path / "z") == 0
        assert (tmp_path / "z" / "pred.txt").read_text() == (tmp_path / "z" / "truth.txt").read_text()

    def test_two_segment_law(self, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"segments": [[1.0, 1.0], [1.0, 10.0]], "n_frames": 5000}))
        assert run("synth", "--spec", spec, "--out-dir", tmp_path / "s", "--seed", 2) == 0
        truth = load_trajectory(tmp_path / "s" / "truth.txt", "S")
        pred = load_trajectory(tmp_path / "s" / "pred.txt", "S")
        sigma = np.loadtxt(tmp_path / "s" / "sigma.txt")[:, 1]
        from posecp.se3_geometry import geodesic_score_batch
        s = geodesic_score_batch(pred.rotations, pred.translations, truth.rotations, truth.translations)
        ratio = s[sigma == 10].mean() / s[sigma == 1].mean()
        assert abs(ratio - 10) <= 2

    def test_invalid_spec(self, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"segments": [[1.0, -1.0]]}))
        assert run("synth", "--spec", spec, "--out-dir", tmp_path / "bad") == 1


class TestTrainBridge:
    def test_output_and_hash(self, in_workdir, capsys, tmp_path):
        model = DifficultyModel.from_json((in_workdir / "model.json").read_text())
        doc = json.loads((in_workdir / "model.json").read_text())
        assert doc["content_hash"] == model.content_hash
        assert doc["training"]["heldout_spearman"] >= 0.8
        assert run("train-bridge", "--trajectory", "A=A/truth.txt", "--teacher", "A/sigma.txt",
                   "--steps", STEPS, "--out", tmp_path / "again.json") == 0
        out = capsys.readouterr().out
        assert f"hash={model.content_hash}" in out and "heldout_spearman=" in out

    def test_misaligned_teacher(self, in_workdir, tmp_path, capsys):
        teacher = tmp_path / "teacher.txt"
        teacher.write_text("10 1.0\n11 2.0\n999999 1.0\n")
        assert run("train-bridge", "--trajectory", "A=A/truth.txt", "--teacher", teacher, "--out", tmp_path / "m.json") == 1
        assert "999999" in capsys.readouterr().err

    def test_residual_targets(self, in_workdir, tmp_path, capsys):
        assert run("train-bridge", "--trajectory", "A=A/truth.txt", "--predictions", "A=A/pred.txt",
                   "--predictor-name", "synth", "--k", 1, "--targets", "residuals",
                   "--steps", 200, "--out", tmp_path / "r.json") == 0
        assert "final_loss=" in capsys.readouterr().out


class TestCalibrateEval:
    def test_standard_kind(self, in_workdir, tmp_path):
        out = tmp_path / "std.json"
        assert run("calibrate", *B_DATA, "--out", out) == 0
        res = CalibrationResult.from_json(out.read_text())
        assert res.kind == "standard" and res.alpha == 0.1 and res.provenance == "within:0.5"
        assert res.predictor_id == "external:synth" and res.horizon == 1
        assert json.loads(out.read_text())["config"]["command"] == "calibrate"

    def test_adaptive_records_hash(self, in_workdir, tmp_path):
        out = tmp_path / "ad.json"
        assert run("calibrate", *B_DATA, "--adaptive", "--model", "model.json", "--out", out) == 0
        res = CalibrationResult.from_json(out.read_text())
        model = DifficultyModel.from_json((in_workdir / "model.json").read_text())
        assert res.kind == "adaptive" and res.model_hash == model.content_hash

    def test_standard_q4_below_overall(self, in_workdir, tmp_path):
        cal = tmp_path / "std.json"
        run("calibrate", *B_DATA, "--out", cal)
        out = tmp_path / "rep.json"
        assert run("eval", *B_DATA, "--calibration", cal, "--out", out) == 0
        (rep,) = load_reports_json(out.read_text())
        assert rep.q4_coverage < rep.overall_coverage
        assert rep.n_total == N // 2

    def test_adaptive_improves_q4(self, in_workdir, tmp_path):
        out = tmp_path / "rep.json"
        assert run("eval", *B_DATA, "--out", out) == 0
        (std,) = load_reports_json(out.read_text())
        assert run("eval", *B_DATA, "--adaptive", "--model", "model.json", "--out", out) == 0
        (ada,) = load_reports_json(out.read_text())
        assert ada.q4_coverage > std.q4_coverage + 0.1

    def test_score_mismatch_rejected(self, in_workdir, tmp_path, capsys):
        cal = tmp_path / "std.json"
        run("calibrate", *B_DATA, "--out", cal)
        assert run("eval", *B_DATA, "--calibration", cal, "--score", "euclidean") == 1
        assert run("eval", *B_DATA, "--calibration", cal, "--w-rot", 3) == 1
        assert "does not match" in capsys.readouterr().err

    def test_model_hash_mismatch_rejected(self, in_workdir, tmp_path, capsys):
        cal = tmp_path / "ad.json"
        run("calibrate", *B_DATA, "--adaptive", "--model", "model.json", "--out", cal)
        other = tmp_path / "other.json"
        run("train-bridge", "--trajectory", "B=B/truth.txt", "--teacher", "B/sigma.txt", "--steps", 50, "--out", other)
        assert run("eval", *B_DATA, "--calibration", cal, "--model", other) == 1
        assert "hash" in capsys.readouterr().err

    def test_cross_split_and_overlap(self, in_workdir, tmp_path):
        out = tmp_path / "cross.json"
        assert run("eval", "--trajectory", "A=A/truth.txt", "--trajectory", "B=B/truth.txt",
                   "--k", 10, "--split", "cross", "--cal-participants", "A", "--test-participants", "B",
                   "--compare-euclidean", "--out", out) == 0
        doc = json.loads(out.read_text())
        (rep,) = load_reports_json(out.read_text())
        assert rep.split == "cross:cal=A;test=B" and rep.predictor_id == "const_vel"
        assert 0.0 <= doc["overlaps"][0]["overlap"] <= 1.0
        assert run("report", out, "--layout", "overlap", "--out", tmp_path / "o.txt") == 0
        assert "Q4 overlap %" in (tmp_path / "o.txt").read_text()

    def test_config_file_defaults_and_override(self, in_workdir, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"alpha": 0.2}))
        out = tmp_path / "c.json"
        assert run("calibrate", *B_DATA, "--config", cfg, "--out", out) == 0
        assert CalibrationResult.from_json(out.read_text()).alpha == 0.2
        assert run("calibrate", *B_DATA, "--config", cfg, "--alpha", 0.05, "--out", out) == 0
        assert CalibrationResult.from_json(out.read_text()).alpha == 0.05


def test_csv_grid_108_rows(tmp_path):
    rng = np.random.default_rng(0)
    manifest = {"trajectories": {}, "predictions": []}
    for p in range(1, 13):
        pid = f"P{p:02d}"
        data = generate_synthetic(heteroscedastic_config(400, seed=p, participant_id=pid))
        (tmp_path / f"{pid}.txt").write_text(dump_trajectory(data.truth))
        manifest["trajectories"][pid] = f"{pid}.txt"
        for pred in ("lightglue", "monodepth2"):
            for k in (10, 20, 30):
                name = f"{pid}_{pred}_{k}.txt"
                (tmp_path / name).write_text("".join(f"{i} {rng.exponential():.6f}\n" for i in range(400)))
                manifest["predictions"].append({"participant": pid, "predictor": pred, "k": k, "path": name})
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))
    out = tmp_path / "grid.csv"
    assert run("eval", "--manifest", tmp_path / "manifest.json", "--predictor", "const_vel",
               "--k", 10, "--k", 20, "--k", 30, "--format", "csv", "--jobs", 4, "--out", out) == 0
    reports = parse_csv_reports(out.read_text())
    assert len(reports) == 108
    assert len({(r.participant, r.predictor_id, r.horizon) for r in reports}) == 108
    assert run("report", out.with_suffix(".json"), "--layout", "participants") == 2


def test_report_renders_saved_json(tmp_path, capsys):
    from test_evaluation import make_report
    from posecp.evaluation import emit_report
    path = tmp_path / "r.json"
    path.write_text(emit_report([make_report()], "json"))
    assert run("report", path, "--layout", "participants") == 0
    assert "0.628" in capsys.readouterr().out


def pipeline_once(root: Path):
    root.mkdir()
    cwd = os.getcwd()
    os.chdir(root)
    try:
        assert run("synth", "--out-dir", "A", "--participant", "A", "--n-frames", 2000, "--seed", 7) == 0
        assert run("synth", "--out-dir", "B", "--participant", "B", "--n-frames", 2000, "--seed", 8) == 0
        assert run("train-bridge", "--trajectory", "A=A/truth.txt", "--teacher", "A/sigma.txt",
                   "--steps", 300, "--seed", 7, "--out", "model.json") == 0
        data = ("--trajectory", "B=B/truth.txt", "--predictions", "B=B/pred.txt", "--predictor-name", "synth", "--k", 1)
        assert run("calibrate", *data, "--adaptive", "--model", "model.json", "--seed", 7, "--out", "cal.json") == 0
        assert run("eval", *data, "--calibration", "cal.json", "--model", "model.json", "--seed", 7,
                   "--out", "report.json") == 0
        assert run("eval", *data, "--calibration", "cal.json", "--model", "model.json", "--seed", 7,
                   "--format", "csv", "--out", "report.csv") == 0
    finally:
        os.chdir(cwd)
    return {p.name: p.read_bytes() for p in root.rglob("*") if p.is_file()}


def test_end_to_end_byte_identical(tmp_path):
    a = pipeline_once(tmp_path / "run1")
    b = pipeline_once(tmp_path / "run2")
    assert sorted(a) == sorted(b)
    for name in a:
        assert a[name] == b[name], name
