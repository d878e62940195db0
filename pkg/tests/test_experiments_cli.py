import csv
import json
import math

import numpy as np
import pytest

from loopkahler import __version__
from loopkahler.cli import build_parser, main
from loopkahler.errors import DomainError
from loopkahler.experiments import (ExperimentReport, RunConfig, SuiteError, dform_identity,
                                    experiment_rng, levi_civita, lp1, lp1_loops, lp1_lower_bound,
                                    lp1_upper_bound, pl2_cauchy, pl2_distance, run_all)
from loopkahler.io import loop_to_json, read_json, write_json


class TestReport:
    def test_roundtrip_bitwise(self):
        rep = lp1(2)
        text = json.dumps(rep.to_dict(include_tables=True))
        back = ExperimentReport.from_dict(json.loads(text))
        assert back.payload() == rep.payload()
        assert back.results["upper_bound"] == rep.results["upper_bound"]
        assert back.version == __version__

    def test_passed_and_summary(self):
        rep = ExperimentReport("x", {"a": 1}, {}, {"ok": True, "bad": False})
        assert not rep.passed
        assert "FAIL" in rep.summary() and "bad" in rep.summary()

    def test_seed_splitting(self):
        a = experiment_rng(3, "one").random(4)
        assert np.array_equal(a, experiment_rng(3, "one").random(4))
        assert not np.array_equal(a, experiment_rng(3, "two").random(4))
        assert not np.array_equal(a, experiment_rng(4, "one").random(4))


class TestLP1:
    @pytest.mark.parametrize("n", [1, 2, 3, 8])
    def test_lower_bound_is_pi_over_4(self, n):
        assert lp1_lower_bound(n) == pytest.approx(math.pi / 4, abs=1e-12)

    def test_lower_bound_brute_force(self):
        # dense sampling of the same profile, independent of the offset grid
        s = (np.arange(10**6) + 0.5) * 2 * np.pi / 10**6
        dense = np.mean(np.arctan(np.abs(np.tan(3 * s))))
        assert dense == pytest.approx(math.pi / 4, abs=1e-6)
        assert lp1_lower_bound(3) == pytest.approx(dense, abs=1e-6)

    def test_n_independent(self):
        assert lp1_lower_bound(1) == pytest.approx(lp1_lower_bound(8), abs=1e-6)

    def test_n_zero(self):
        assert lp1_lower_bound(0) == 0
        assert lp1_upper_bound(0) == 0

    def test_under_resolved_refused(self):
        with pytest.raises(DomainError, match="lp1"):
            lp1_lower_bound(2, 64)
        with pytest.raises(DomainError, match="lp1"):
            lp1_upper_bound(2, 100)

    def test_upper_bound_bracket(self):
        up = lp1_upper_bound(1, 256, 64)
        assert math.pi / 4 - 1e-2 <= up <= math.pi / 2 + 1e-3

    def test_upper_bound_large_n(self):
        assert lp1_upper_bound(16, 1024) <= math.pi / 2 + 1e-3

    def test_claim_is_informational(self):
        rep = lp1(4)
        assert rep.results["paper_claim_n"] == 4.0
        assert rep.results["claim_reproduced"] is False
        assert rep.passed

    def test_raw_measure_rescales(self):
        a, b = lp1(2), lp1(2, measure="raw")
        assert b.results["lower_bound"] == pytest.approx(2 * math.pi * a.results["lower_bound"], rel=1e-14)
        assert b.results["upper_bound"] == pytest.approx(math.sqrt(2 * math.pi) * a.results["upper_bound"],
                                                         rel=1e-12)
        assert b.flags == a.flags

    def test_loops_avoid_antipode(self):
        f, g = lp1_loops(3, 192)
        w = f.model.homogeneous(g.chart_ids, g.coords)
        w = w / np.linalg.norm(w, axis=-1, keepdims=True)
        assert np.min(np.abs(w[:, 0])) > 1e-3


class TestIdentitySweeps:
    def test_perturbed(self):
        rep = dform_identity("perturbed-hermitian")
        assert rep.passed and rep.flags["nonzero"]
        assert len(rep.results["per_trial"]) == 10
        assert rep.results["max_err"] == max(t[2] for t in rep.results["per_trial"])

    @pytest.mark.parametrize("model,dim", [("flat-cn", 2), ("fubini-study-p1", None)])
    def test_kahler(self, model, dim):
        rep = dform_identity(model, trials=4, dim=dim)
        assert rep.passed and "closed" in rep.flags

    def test_raw_measure_scales_both_sides(self):
        a = dform_identity("perturbed-hermitian", trials=3)
        b = dform_identity("perturbed-hermitian", trials=3, measure="raw")
        for (la, ra, _), (lb, rb, _) in zip(a.results["per_trial"], b.results["per_trial"]):
            assert rb == pytest.approx(2 * math.pi * ra, rel=1e-12)
            assert lb == pytest.approx(2 * math.pi * la, rel=1e-6)
        assert a.flags == b.flags

    def test_levi_civita(self):
        rep = levi_civita(trials=5)
        assert rep.passed


class TestPL2:
    def test_distance_flags(self):
        rep = pl2_distance(8)
        assert rep.passed
        assert rep.results["diameter_estimate"] <= math.pi / 2

    def test_cauchy(self):
        rep = pl2_cauchy(8)
        assert rep.passed and rep.results["lipschitz_constant"] <= math.sqrt(2)

    def test_needs_N_two(self):
        with pytest.raises(DomainError):
            pl2_distance(1)


class TestRunAll:
    small = RunConfig(trials=2, lc_trials=2, lp1_ns=(1, 2), geodesic_M=64, geodesic_n=1, P=64,
                      N_sweep=(2,), N=4)

    def test_writes_report(self, tmp_path):
        reports = run_all(self.small, tmp_path)
        doc = read_json(tmp_path / "report.json")
        assert doc["passed"] and all(r.passed for r in reports)
        assert [r["name"] for r in doc["reports"]] == [r.name for r in reports]
        with open(tmp_path / "05_geodesic_residuals.csv") as fh:
            assert next(csv.reader(fh)) == ["node", "time", "residual"]

    def test_deterministic(self):
        a = [r.payload() for r in run_all(self.small)]
        b = [r.payload() for r in run_all(self.small)]
        assert a == b

    def test_under_resolved_config(self):
        cfg = RunConfig(lp1_ns=(1, 4), lp1_M=128)
        with pytest.raises(DomainError, match=r"lp1\(n=4\)"):
            run_all(cfg)

    def test_partial_report_on_error(self, tmp_path):
        cfg = RunConfig(trials=2, lc_trials=2, geodesic_M=64, P=16, N_sweep=(1,), N=4, lp1_ns=(1,))
        with pytest.raises(SuiteError) as info:
            run_all(cfg, tmp_path)
        doc = read_json(tmp_path / "report.json")
        assert "error" in doc and not doc["passed"]
        assert len(doc["reports"]) == len(info.value.reports) > 0


class TestCLI:
    def test_parser_subcommands(self):
        p = build_parser()
        for cmd in ("dform-identity", "levi-civita", "geodesic", "lp1", "pl2", "all"):
            assert p.parse_args([cmd]).command == cmd

    def test_lp1(self, capsys, tmp_path):
        assert main(["lp1", "--n", "1", "2", "--out", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert "lower_bound" in out and "all flags passed" in out
        assert len(read_json(tmp_path / "report.json")["reports"]) == 2

    def test_lp1_refusal(self, capsys):
        assert main(["lp1", "--n", "4", "--M", "64"]) == 2
        assert "lp1(n=4)" in capsys.readouterr().err

    def test_dform(self, capsys):
        assert main(["dform-identity", "--model", "perturbed-hermitian", "--trials", "2", "--seed", "7"]) == 0

    def test_unknown_model(self, capsys):
        assert main(["dform-identity", "--model", "torus"]) == 2

    def test_pl2(self, capsys):
        assert main(["pl2", "--N", "2", "4"]) == 0

    def test_geodesic_from_files(self, tmp_path, capsys):
        f, g = lp1_loops(1, 64)
        write_json(tmp_path / "f.json", loop_to_json(f))
        write_json(tmp_path / "g.json", loop_to_json(g))
        code = main(["geodesic", "--model", "p1", "--f", str(tmp_path / "f.json"), "--g",
                     str(tmp_path / "g.json"), "--P", "64", "--out", str(tmp_path / "path.json")])
        assert code == 0
        path = read_json(tmp_path / "path.json")
        assert len(path["times"]) == 65 and len(path["loops"]) == 65
        with open(tmp_path / "path_residuals.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 64 * 63 and set(rows[0]) == {"node", "time", "residual"}

    def test_geodesic_default_pair(self, tmp_path, capsys):
        assert main(["geodesic", "--n", "1", "--M", "64", "--P", "64", "--out", str(tmp_path)]) == 0
        assert (tmp_path / "path.json").exists() and (tmp_path / "path_residuals.csv").exists()

    def test_geodesic_needs_both_files(self, tmp_path, capsys):
        assert main(["geodesic", "--f", str(tmp_path / "f.json")]) == 2
