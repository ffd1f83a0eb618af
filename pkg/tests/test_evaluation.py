"""Quartile analytics, reports and the synthetic generator."""
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from posecp.conformal import CalibrationResult, ScoreRecord, calibrate_standard
from posecp.errors import ValidationError
from posecp.evaluation import (
    CSV_COLUMNS,
    CoverageReport,
    OverlapSummary,
    SegmentSpec,
    SyntheticConfig,
    coverage_by_quartile,
    displacement_by_quartile,
    emit_report,
    generate_synthetic,
    heteroscedastic_config,
    load_reports_json,
    overlap_table,
    parse_csv_reports,
    participant_table,
    method_table,
    pool_reports,
    q4_overlap,
    quartile_partition,
    stratify_by_motion,
)
from posecp.rng import make_rng
from posecp.se3_geometry import geodesic_score_batch
from posecp.trajectory import Trajectory


def recs(scores, ids=None, pid="p", k=10):
    ids = range(len(scores)) if ids is None else ids
    return [ScoreRecord(int(i), pid, k, float(s)) for i, s in zip(ids, scores)]


def make_report(participant="P01", predictor="external:lightglue", k=10, q4=0.628, kind="standard",
                score_fn="geodesic", split="within:0.5", overall=0.9):
    return CoverageReport(
        participant=participant, predictor_id=predictor, horizon=k, score_fn=score_fn, kind=kind,
        split=split, alpha=0.1, threshold=1.25, overall_coverage=overall, n_total=400,
        coverage=(0.99, 0.98, 0.97, q4), n=(100, 100, 100, 100), mean_radius=(1.25,) * 4,
        quartile_bounds=(0.5, 0.8, 1.1),
    )


def direct_scores(data):
    t, p = data.truth, data.predicted
    return geodesic_score_batch(p.rotations, p.translations, t.rotations, t.translations)


class TestQuartiles:
    def test_one_to_eight(self):
        q = quartile_partition(recs(range(1, 9), ids=range(1, 9)))
        assert [q.members(k) for k in (1, 2, 3, 4)] == [[1, 2], [3, 4], [5, 6], [7, 8]]

    def test_ties_by_frame_id(self):
        q = quartile_partition(recs([1.0] * 9, ids=[40, 10, 30, 20, 90, 50, 70, 60, 80]))
        assert q.members(1) == [10, 20]
        assert q.members(4) == [70, 80, 90]
        assert q.sizes() == (2, 2, 2, 3)

    def test_ten_random(self, rng):
        s = rng.exponential(size=10)
        q = quartile_partition(recs(s))
        assert q.sizes() == (2, 3, 2, 3)
        order = np.argsort(s)
        assert q.members(4) == sorted(order[7:].tolist())

    def test_too_few(self):
        with pytest.raises(ValidationError, match="at least 4"):
            quartile_partition(recs([1, 2, 3]))

    @settings(max_examples=100, deadline=None)
    @given(st.integers(4, 1000), st.integers(0, 2**31), st.booleans())
    def test_matches_full_sort(self, n, seed, ties):
        r = make_rng(seed, "quartile")
        s = r.integers(0, 5, n).astype(float) if ties else r.exponential(size=n)
        ids = r.permutation(10 * n)[:n]
        q = quartile_partition(recs(s, ids))
        ranked = sorted(zip(s.tolist(), ids.tolist()))
        cuts = [0, n // 4, n // 2, 3 * n // 4, n]
        for k in range(4):
            assert q.members(k + 1) == sorted(fid for _, fid in ranked[cuts[k]:cuts[k + 1]])
        assert max(q.sizes()) - min(q.sizes()) <= 3
        lo_q4 = min(v for v, fid in ranked if q[fid] == 4)
        assert all(v <= lo_q4 for v, fid in ranked if q[fid] == 3)


class TestCoverage:
    def test_all_covered(self, rng):
        test = recs(rng.uniform(0, 1, 40))
        rep = coverage_by_quartile(test, CalibrationResult("standard", 2.0, 0.1, 9), quartile_partition(test))
        assert rep.coverage == (1.0, 1.0, 1.0, 1.0) and rep.overall_coverage == 1.0

    def test_singleton_quartiles(self):
        test = recs([1, 2, 3, 4])
        rep = coverage_by_quartile(test, CalibrationResult("standard", 2.5, 0.1, 9), quartile_partition(test))
        assert rep.coverage == (1.0, 1.0, 0.0, 0.0)
        assert rep.overall_coverage == 0.5

    def test_unassigned_frame(self):
        test = recs([1, 2, 3, 4])
        q = quartile_partition(test)
        with pytest.raises(ValidationError, match="quartile"):
            coverage_by_quartile(test + recs([5], ids=[99]), CalibrationResult("standard", 2.5, 0.1, 9), q)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(4, 500), st.integers(0, 2**31))
    def test_overall_is_weighted_quartile_mean(self, n, seed):
        r = make_rng(seed, "weighted")
        cal, test = recs(r.exponential(size=50)), recs(r.exponential(size=n))
        rep = coverage_by_quartile(test, calibrate_standard(cal, 0.1), quartile_partition(test))
        pooled = sum(c * m for c, m in zip(rep.coverage, rep.n)) / sum(rep.n)
        assert abs(pooled - rep.overall_coverage) <= 1e-12

    def test_table_one_cell_fixture(self):
        text = participant_table([make_report()])
        lines = text.splitlines()
        assert "k=10" in lines[0]
        assert "external:lightglue" in lines[1]
        assert lines[3].split() == ["P01", "0.628"]


class TestOverlap:
    def test_identical(self, rng):
        s = rng.exponential(size=40)
        assert q4_overlap(recs(s), recs(s)) == 1.0

    def test_reversed_eight(self):
        assert q4_overlap(recs(range(8)), recs(range(8, 0, -1))) == 0.0

    @pytest.mark.parametrize("fn", [np.exp, lambda x: 3 * x + 7, lambda x: np.log1p(x) ** 3])
    def test_monotone_invariance(self, rng, fn):
        a, b = rng.exponential(size=103), rng.exponential(size=103)
        base = q4_overlap(recs(a), recs(b))
        assert q4_overlap(recs(fn(a)), recs(fn(b))) == base

    def test_frame_set_mismatch(self):
        with pytest.raises(ValidationError, match=r"\[4, 5\]"):
            q4_overlap(recs([1, 2, 3, 4, 5], ids=[0, 1, 2, 3, 4]), recs([1, 2, 3, 4, 5], ids=[0, 1, 2, 3, 5]))

    def test_overlap_row_format(self):
        rows = [OverlapSummary(p, "external:lightglue", k, v) for p, k, v in
                [("P01", 10, 0.15), ("P01", 20, 0.26), ("P02", 10, 0.2)]]
        text = overlap_table(rows)
        row = [l for l in text.splitlines() if l.startswith("external:lightglue")][0]
        assert row.split()[1:] == ["15%", "26%", "20%"]
        assert text.splitlines()[1].startswith("Q4 overlap %")


class TestDisplacement:
    def test_uniform_speed_all_equal(self):
        data = generate_synthetic(SyntheticConfig(n_frames=4000, segments=((1.0, 1.0), (1.0, 5.0)), seed=2))
        s = direct_scores(data)
        q = quartile_partition(recs(s[1:], ids=range(1, 4000)))
        means = displacement_by_quartile(data.truth, q).means
        assert max(means) - min(means) <= 1e-12

    def test_planted_fast_segments(self):
        cfg = SyntheticConfig(n_frames=4000, segments=((1.0, 1.0), (3.0, 2.0), (8.0, 10.0, 0.5)), seed=4)
        data = generate_synthetic(cfg)
        q = quartile_partition(recs(direct_scores(data)[1:], ids=range(1, 4000)))
        d = displacement_by_quartile(data.truth, q)
        low = np.average(d.means[:3], weights=d.counts[:3])
        assert d.means[3] > low
        assert d.means[3] == max(d.means)

    def test_skipped_frames_counted(self):
        traj = Trajectory("P", np.arange(6), np.stack([np.eye(3)] * 6), np.outer(np.arange(6), [1, 0, 0]), [0, 0, 0, 1, 1, 1])
        q = quartile_partition(recs([1, 2, 3, 4, 5, 6]))
        d = displacement_by_quartile(traj, q)
        assert d.skipped == 2 and sum(d.counts) == 4


class TestStratify:
    MEDIANS = {"P01": 141.1, "P02": 8.0, "P03": 12.3, "P04": 20.1, "P05": 34.5, "P06": 70.9,
               "P07": 95.0, "P08": 120.4, "P09": 15.0, "P10": 88.8, "P11": 25.2, "P12": 77.7}

    def scores(self):
        return {p: [m - 1.0, m, m + 1.0] for p, m in self.MEDIANS.items()}

    def test_two_cluster_grouping(self):
        g = stratify_by_motion(self.scores(), 50)
        assert g["High"] == ["P01", "P06", "P07", "P08", "P10", "P12"]
        assert set(g["Low"]) == set(self.MEDIANS) - set(g["High"])

    def test_straddling_threshold_flips(self):
        s = {"A": [10.0, 20.0, 30.0]}
        assert stratify_by_motion(s, 19.9)["High"] == ["A"]
        assert stratify_by_motion(s, 20.1)["Low"] == ["A"]

    def test_missing_scores(self):
        with pytest.raises(ValidationError, match="P03"):
            stratify_by_motion({"P03": []})


class TestGenerator:
    def test_zero_noise(self):
        data = generate_synthetic(SyntheticConfig(n_frames=300, segments=((1.0, 0.0),), seed=1))
        assert np.all(direct_scores(data) == 0.0)

    def test_noise_law(self):
        cfg = SyntheticConfig(n_frames=5000, segments=((1.0, 1.0), (1.0, 10.0)), seed=9)
        data = generate_synthetic(cfg)
        s = direct_scores(data)
        ratio = s[data.level == 1].mean() / s[data.level == 0].mean()
        assert abs(ratio - 10) <= 2.0

    def test_deterministic(self):
        cfg = heteroscedastic_config(2000, seed=5)
        a, b = generate_synthetic(cfg), generate_synthetic(cfg)
        for x, y in ((a.truth, b.truth), (a.predicted, b.predicted)):
            assert np.array_equal(x.rotations, y.rotations) and np.array_equal(x.translations, y.translations)
        assert np.array_equal(a.sigma, b.sigma)
        c = generate_synthetic(heteroscedastic_config(2000, seed=6))
        assert not np.array_equal(a.truth.translations, c.truth.translations)

    def test_hetero_fixture_spread(self):
        data = generate_synthetic(heteroscedastic_config(20000, seed=0))
        assert data.sigma.max() / data.sigma.min() == pytest.approx(10.0)
        assert len(data.truth) == 20000

    @pytest.mark.parametrize("segments", [(), ((1.0, -1.0),), ((1.0, 1.0, 0.0),), ((math.nan, 1.0),)])
    def test_invalid_spec(self, segments):
        with pytest.raises(ValidationError):
            SyntheticConfig(segments=segments)

    def test_config_json_roundtrip(self):
        cfg = heteroscedastic_config(1000, seed=3, weights=(1, 2, 3, 4))
        assert SyntheticConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
        with pytest.raises(ValidationError, match="unknown"):
            SyntheticConfig.from_dict({"n_frame": 10})


class TestEmit:
    def grid(self):
        r = make_rng(1, "grid")
        out = []
        for p in range(1, 13):
            for pred in ("const_vel", "external:lightglue", "external:monodepth2"):
                for k in (10, 20, 30):
                    out.append(make_report(f"P{p:02d}", pred, k, float(r.uniform(0.5, 1.0))))
        return out

    def test_json_has_all_fields(self):
        doc = json.loads(emit_report(make_report(), "json"))
        (d,) = doc["reports"]
        assert list(d) == [f for f in CoverageReport.__dataclass_fields__]
        assert load_reports_json(json.dumps(doc)) == [make_report()]

    def test_108_cell_table(self):
        text = participant_table(self.grid())
        lines = text.splitlines()
        body = [l for l in lines if l.startswith("P") and l[1:3].isdigit()]
        assert len(body) == 12
        assert all(len(l.split()) == 10 for l in body)
        assert lines[0].split() == ["k=10", "k=20", "k=30"]
        assert lines[-1].startswith("Mean")

    def test_csv_roundtrip(self):
        reports = self.grid()
        reports[0].displacement = (0.1, 0.2, 0.3, 1 / 3)
        reports[1].threshold = math.inf
        text = emit_report(reports, "csv")
        assert text.splitlines()[0].split(",") == list(CSV_COLUMNS)
        assert len(text.splitlines()) == 109
        assert parse_csv_reports(text) == reports

    def test_method_layout(self):
        reports = [make_report(kind="standard", q4=0.751, overall=0.938),
                   make_report(kind="adaptive", q4=0.929, overall=0.93)]
        text = emit_report(reports, "table")
        assert text == method_table(reports)
        assert "0.751" in text and "0.929" in text and "Ovr" in text

    def test_unknown_format(self):
        with pytest.raises(ValidationError, match="unknown report format"):
            emit_report(make_report(), "xml")

    def test_pool_is_count_weighted(self):
        a = make_report("A", q4=0.5)
        b = make_report("B", q4=1.0)
        b.n = (300, 300, 300, 300)
        b.n_total = 1200
        pooled = pool_reports([a, b])
        assert pooled.q4_coverage == pytest.approx((0.5 * 100 + 1.0 * 300) / 400)
        assert pooled.n_total == 1600 and pooled.participant == "A+B"
