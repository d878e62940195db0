"""Acceptance criteria, each at its stated tolerance.

Every test prints one ``CRITERION <k> PASS|FAIL`` line (output capture is
bypassed for that line) and then asserts the same verdict.
"""

import math
import time

import numpy as np
import pytest

from loopkahler.calculus import integrand_chart_derivative, directional_derivative, random_field
from loopkahler.connection import (assemble_loop_geodesic, check_metric_compatibility,
                                   check_torsion_free, geodesic_residual)
from loopkahler.experiments import (corrupt_leaf, dform_identity, experiment_rng, lp1,
                                    lp1_loops, lp1_lower_bound, lp1_upper_bound, pl2_cauchy,
                                    pl2_distance, random_loop)
from loopkahler.kahler import ChartPoint, fs_distance, kahler_form, make_model
from loopkahler.loops import LoopGrid

LP1_NS = (1, 2, 4, 8, 16)


@pytest.fixture
def verdict(capsys):
    def emit(k, title, checks):
        ok = all(passed for _, passed in checks)
        with capsys.disabled():
            print(f"\nCRITERION {k} {'PASS' if ok else 'FAIL'}: {title}")
            for label, passed in checks:
                print(f"    [{'ok' if passed else 'FAIL'}] {label}")
        assert ok, f"criterion {k}: " + "; ".join(label for label, p in checks if not p)
    return emit


def test_criterion_1_main_identity(verdict):
    t0 = time.perf_counter()
    rep = dform_identity("perturbed-hermitian", M=64, trials=10, seed=0)
    runtime = time.perf_counter() - t0
    trials = rep.results["per_trial"]
    within = all(err <= 1e-4 * (1 + abs(rhs)) for _, rhs, err in trials)
    nonzero = sum(abs(l) > 0 and abs(r) > 0 for l, r, _ in trials)
    verdict(1, "d Omega six-term formula equals the loop integral of d omega (perturbed model)", [
        (f"max |lhs - rhs| = {rep.results['max_err']:.3e} <= 1e-4 (1 + |rhs|)", within),
        (f"both sides nonzero in {nonzero}/10 trials (need >= 8)", nonzero >= 8),
        (f"runtime {runtime:.2f} s <= 30 s", runtime <= 30),
    ])


def test_criterion_2_closed_on_kahler(verdict):
    t0 = time.perf_counter()
    checks = []
    for model, dim in (("flat-cn", 2), ("fubini-study-p1", None), ("fubini-study-pn", 16)):
        rep = dform_identity(model, M=64, trials=10, seed=0, dim=dim)
        worst = max(abs(lhs) for lhs, _, _ in rep.results["per_trial"])
        checks.append((f"{model} (dim {rep.parameters['dim']}): max |d Omega| = {worst:.3e} <= 1e-6",
                       worst <= 1e-6))
    runtime = time.perf_counter() - t0
    checks.append((f"runtime {runtime:.2f} s <= 60 s", runtime <= 60))
    verdict(2, "d Omega vanishes on Kahler models", checks)


def test_criterion_3_chart_derivative(verdict):
    rng = experiment_rng(0, "acceptance-3")
    models = [make_model("flat-cn", 2), make_model("fubini-study-p1"), make_model("fubini-study-pn", 4),
              make_model("perturbed-hermitian")]
    worst = 0.0
    for k in range(20):
        m = models[k % 4]
        grid = LoopGrid(32)
        g = random_loop(rng, m, grid)
        xi, eta, nu = (random_field(rng, 32, m.n, 0.5) for _ in range(3))
        ng = nu(g)
        analytic = integrand_chart_derivative(m, g, xi, eta, ng)
        fd = directional_derivative(lambda h: kahler_form(m, h.coords, xi(h).vectors, eta(h).vectors), g, ng)
        worst = max(worst, float(np.max(np.abs(analytic - fd))))
    verdict(3, "analytic A + B - C matches the finite-difference derivative node-wise", [
        (f"max node-wise error over 20 instances = {worst:.3e} <= 1e-6", worst <= 1e-6)])


def test_criterion_4_levi_civita(verdict):
    p1 = make_model("fubini-study-p1")
    rng = experiment_rng(0, "acceptance-4")
    grid = LoopGrid(64)
    mc = tor = 0.0
    for _ in range(20):
        g = random_loop(rng, p1, grid)
        xi, eta, nu = (random_field(rng, 64, 1, 0.5) for _ in range(3))
        mc = max(mc, check_metric_compatibility(p1, g, xi, eta, nu))
        tor = max(tor, check_torsion_free(p1, g, xi, eta))
    verdict(4, "loop connection is metric compatible and torsion free (P^1, M=64)", [
        (f"metric compatibility residual {mc:.3e} <= 1e-5", mc <= 1e-5),
        (f"torsion residual {tor:.3e} <= 1e-5", tor <= 1e-5)])


def test_criterion_5_geodesic(verdict):
    f, g = lp1_loops(2, 256)
    path = assemble_loop_geodesic(f.model, f, g, 64)
    res = geodesic_residual(f.model, path)
    bad = corrupt_leaf(path, 48)
    res_bad = geodesic_residual(f.model, bad)
    verdict(5, "leaf-wise geodesics assemble to a loop geodesic (n=2, M=256, P=64)", [
        (f"geodesic residual {res:.3e} <= 1e-5", res <= 1e-5),
        (f"single-leaf corruption residual {res_bad:.3e} > 1e-2", res_bad > 1e-2)])


def test_criterion_6_fs_distance(verdict):
    p1 = make_model("fubini-study-p1")
    quarter = fs_distance(p1, ChartPoint(0, [0]), ChartPoint(0, [1]))
    rep = pl2_distance(16, seed=0)
    rows = rep.tables["pl2_distance"]
    worst = max(r["abs_err"] for r in rows)
    dmax = max(r["fs_distance"] for r in rows)
    verdict(6, "Fubini-Study distance is arctan R and bounded by pi/2", [
        (f"dist([1:0],[1:1]) - pi/4 = {quarter - math.pi / 4:.1e}", abs(quarter - math.pi / 4) <= 1e-10),
        (f"chart-path integral vs fs_distance on {len(rows)} P^16 pairs: max err {worst:.1e} <= 1e-8",
         len(rows) == 100 and worst <= 1e-8),
        (f"max distance {dmax:.6f} <= pi/2 + 1e-12", dmax <= math.pi / 2 + 1e-12)])


def test_criterion_7_completeness(verdict):
    rep = pl2_cauchy(16, seed=0, samples=100)
    r = rep.results
    verdict(7, "completeness ingredients on P^16", [
        (f"norm bound lhs <= rhs at {r['norm_bound_holds']}/100 samples", r["norm_bound_holds"] == 100),
        (f"Cauchy distances decrease to {r['final_distance']:.2e}", rep.flags["distances_to_zero"]),
        (f"uniform measured constant C = {r['lipschitz_constant']:.4f}", rep.flags["uniform_constant"])])


def test_criterion_8_lp1_audit(verdict):
    checks = []
    for n in LP1_NS:
        rep = lp1(n, 64 * n, 64)
        lo, up = rep.results["lower_bound"], rep.results["upper_bound"]
        checks.append((f"n={n:2d}: lower {lo:.10f} = pi/4 +- 1e-2", abs(lo - math.pi / 4) <= 1e-2))
        checks.append((f"n={n:2d}: upper {up:.10f} <= pi/2 + 1e-3", up <= math.pi / 2 + 1e-3))
        checks.append((f"n={n:2d}: lower <= upper + 5e-3 (claimed >= {n}: "
                       f"{'reproduced' if rep.results['claim_reproduced'] else 'not reproduced'})",
                       lo <= up + 5e-3))
    verdict(8, "LP^1 distance audit: bounded by pi/2, claimed growth in n not observed", checks)


def test_criterion_9_determinism_and_refinement(verdict):
    checks = []
    a = [dform_identity("perturbed-hermitian", trials=3, seed=5).payload(), pl2_distance(16, 5).payload(),
         lp1(2).payload()]
    b = [dform_identity("perturbed-hermitian", trials=3, seed=5).payload(), pl2_distance(16, 5).payload(),
         lp1(2).payload()]
    checks.append(("rerun with the same seed is bitwise identical", a == b))

    # criterion-6 scalars do not depend on M or P; recomputation must agree exactly
    p1 = make_model("fubini-study-p1")
    q1 = fs_distance(p1, ChartPoint(0, [0]), ChartPoint(0, [1]))
    q2 = fs_distance(p1, ChartPoint(0, [0]), ChartPoint(0, [1]))
    checks.append(("fs_distance scalars unchanged under refinement", q1 == q2))

    for n in LP1_NS:
        lo1, lo2 = lp1_lower_bound(n, 64 * n), lp1_lower_bound(n, 128 * n)
        rel = abs(lo2 - lo1) / abs(lo1)
        checks.append((f"n={n:2d}: lower bound moves {rel:.1e} relative under M, P doubling", rel <= 1e-6))
    for n in LP1_NS:
        up1, up2 = lp1_upper_bound(n, 64 * n, 64), lp1_upper_bound(n, 128 * n, 128)
        rel = abs(up2 - up1) / abs(up1)
        checks.append((f"n={n:2d}: upper bound moves {rel:.1e} relative under M, P doubling", rel <= 1e-6))
    verdict(9, "determinism and refinement stability", checks)
