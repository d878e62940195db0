"""Desk-scale experiments: identity sweeps, connection checks, loop geodesics,
the loop-space distance bounds on LP^1 and the projective-space estimates.

Every experiment returns an :class:`ExperimentReport`.  Pass/fail flags are
tolerance checks; values that are only informational (the claimed lower
bound ``n`` on LP^1) live in ``results`` and never gate.
"""

from __future__ import annotations

import math
import time
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import integrate

from . import __version__
from .calculus import dOmega_six_term, directional_derivative, integral_of_domega, random_field
from .connection import (assemble_loop_geodesic, check_metric_compatibility, check_torsion_free,
                         curve_geodesic_residual, geodesic_residual, leaf_residuals, path_energy,
                         path_length)
from .errors import DomainError, LoopKahlerError
from .io import write_csv, write_json
from .kahler import (ChartPoint, FubiniStudyModel, KahlerModel, fs_distance,
                     fs_distance_homogeneous, gram_schmidt_reduction, hermitian_product,
                     make_model, pl2_norm_bound_check)
from .loops import Loop, LoopGrid

# tolerances gating the flags
IDENTITY_RTOL = 1e-4
CLOSED_TOL = 1e-6
NONZERO_TOL = 1e-8
LEVI_CIVITA_TOL = 1e-5
GEODESIC_TOL = 1e-5
CORRUPTION_MIN = 1e-2
LP1_LOWER_TOL = 1e-2
LP1_UPPER_SLACK = 1e-3
LP1_ORDER_SLACK = 5e-3
FS_BOUND_SLACK = 1e-12
CHART_PATH_TOL = 1e-8


@dataclass
class ExperimentReport:
    name: str
    parameters: dict
    results: dict = field(default_factory=dict)
    flags: Dict[str, bool] = field(default_factory=dict)
    runtime: float = 0.0
    version: str = __version__
    tables: Dict[str, list] = field(default_factory=dict, repr=False)

    @property
    def passed(self) -> bool:
        return all(self.flags.values())

    def to_dict(self, include_tables: bool = False) -> dict:
        d = asdict(self)
        if not include_tables:
            d.pop("tables")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        return cls(**{k: d[k] for k in ("name", "parameters", "results", "flags", "runtime", "version")
                      if k in d}, tables=d.get("tables", {}))

    def payload(self) -> dict:
        """Everything except the wall-clock runtime (the deterministic part)."""
        d = self.to_dict(include_tables=True)
        d.pop("runtime")
        return d

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        bad = [k for k, v in self.flags.items() if not v]
        tail = f" (failed: {', '.join(bad)})" if bad else ""
        return f"[{status}] {self.name} {self.parameters}{tail}"


def experiment_rng(seed: int, name: str) -> np.random.Generator:
    """Independent stream per experiment name, derived from a single seed."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]))


def random_loop(rng: np.random.Generator, model: KahlerModel, grid: LoopGrid,
                amplitude: float = 0.3, modes: int = 3) -> Loop:
    """A smooth random loop in chart 0 (a few Fourier modes)."""
    s = 2 * np.pi * np.arange(grid.M) / grid.M
    z = np.zeros((grid.M, model.n), dtype=complex)
    for k in range(-modes, modes + 1):
        c = rng.standard_normal(model.n) + 1j * rng.standard_normal(model.n)
        z += np.exp(1j * k * s)[:, None] * c / (1 + abs(k))
    z *= amplitude / math.sqrt(2 * modes + 1)
    return Loop(model, grid, np.zeros(grid.M, dtype=int), z)


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        rep = fn(*args, **kwargs)
        rep.runtime = time.perf_counter() - t0
        return rep
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# ---------------------------------------------------------------------------
# d Omega identity
# ---------------------------------------------------------------------------

@_timed
def dform_identity(model: str = "perturbed-hermitian", M: int = 64, trials: int = 10, seed: int = 0,
                   dim: Optional[int] = None, measure: str = "normalized") -> ExperimentReport:
    """Compare the six-term ``d Omega`` with the loop integral of ``d omega``."""
    m = make_model(model, dim)
    grid = LoopGrid(M, measure)
    rng = experiment_rng(seed, f"dform-identity/{m.name}/{m.n}")
    rows, per_trial = [], []
    for trial in range(trials):
        g = random_loop(rng, m, grid)
        xi, eta, nu = (random_field(rng, M, m.n, 0.5) for _ in range(3))
        lhs = dOmega_six_term(xi, eta, nu, g)
        rhs = integral_of_domega(xi, eta, nu, g)
        err = abs(lhs - rhs)
        per_trial.append([lhs, rhs, err])
        rows.append({"trial": trial, "lhs": lhs, "rhs": rhs, "abs_err": err})
    errs = [t[2] for t in per_trial]
    mass = grid.mass
    flags = {"identity": all(e <= IDENTITY_RTOL * (mass + abs(r)) for (_, r, e) in per_trial)}
    if m.is_kahler_expected:
        flags["closed"] = all(abs(lhs) <= CLOSED_TOL * mass for lhs, _, _ in per_trial)
    else:
        nonzero = sum(abs(l) > NONZERO_TOL and abs(r) > NONZERO_TOL for l, r, _ in per_trial)
        flags["nonzero"] = nonzero >= math.ceil(0.8 * trials)
    return ExperimentReport(
        "dform-identity",
        {"model": m.name, "dim": m.n, "M": M, "trials": trials, "seed": seed, "measure": measure},
        {"per_trial": per_trial, "max_err": max(errs) if errs else 0.0},
        flags, tables={"dform_identity": rows})


# ---------------------------------------------------------------------------
# Levi-Civita checks
# ---------------------------------------------------------------------------

@_timed
def levi_civita(M: int = 64, trials: int = 20, seed: int = 0, model: str = "fubini-study-p1",
                dim: Optional[int] = None, measure: str = "normalized") -> ExperimentReport:
    """Metric compatibility and torsion residuals of the leaf-wise connection."""
    m = make_model(model, dim)
    grid = LoopGrid(M, measure)
    rng = experiment_rng(seed, f"levi-civita/{m.name}/{m.n}")
    rows = []
    for trial in range(trials):
        g = random_loop(rng, m, grid)
        xi, eta, nu = (random_field(rng, M, m.n, 0.5) for _ in range(3))
        rows.append({"trial": trial,
                     "metric_compatibility": check_metric_compatibility(m, g, xi, eta, nu),
                     "torsion": check_torsion_free(m, g, xi, eta)})
    mc = max(r["metric_compatibility"] for r in rows)
    tor = max(r["torsion"] for r in rows)
    return ExperimentReport(
        "levi-civita",
        {"model": m.name, "dim": m.n, "M": M, "trials": trials, "seed": seed, "measure": measure},
        {"max_metric_compatibility": mc, "max_torsion": tor},
        {"metric_compatibility": mc <= LEVI_CIVITA_TOL * grid.mass, "torsion_free": tor <= LEVI_CIVITA_TOL},
        tables={"levi_civita": rows})


# ---------------------------------------------------------------------------
# Loops on P^1 used by the unboundedness audit
# ---------------------------------------------------------------------------

def lp1_grid(n: int, M: int, measure: str = "normalized") -> LoopGrid:
    """Grid offset by ``pi / (2 M n)`` so no node maps to the antipode of ``[1:0]``."""
    return LoopGrid(M, measure, math.pi / (2 * M * n) if n else 0.0)


def lp1_loops(n: int, M: int, measure: str = "normalized"):
    """``f = [1:0]`` and ``g(s) = [cos ns : sin ns]`` on the offset grid."""
    m = make_model("fubini-study-p1")
    grid = lp1_grid(n, M, measure)
    s = grid.nodes
    f = Loop(m, grid, np.zeros(M, dtype=int), np.zeros((M, 1)))
    charts, z = m.from_homogeneous(np.stack([np.cos(n * s), np.sin(n * s)], axis=1))
    return f, Loop(m, grid, charts, z)


def _check_lp1_resolution(n: int, M: int):
    if M < 64 * n:
        raise DomainError(f"experiment lp1(n={n}): grid M={M} is under-resolved, need M >= {64 * n}")


def lp1_lower_bound(n: int, M: Optional[int] = None, measure: str = "normalized") -> float:
    """Loop integral of ``dist([1:0], [1:tan ns]) = arctan|tan ns|`` on the offset grid."""
    M = max(64, 64 * n) if M is None else M
    _check_lp1_resolution(n, M)
    grid = lp1_grid(n, M, measure)
    return grid.integrate(np.arctan(np.abs(np.tan(n * grid.nodes))))


def lp1_upper_bound(n: int, M: Optional[int] = None, P: int = 64, measure: str = "normalized") -> float:
    """Length of the leaf-wise geodesic path from ``f`` to ``g_n`` (an admissible path)."""
    M = max(64, 64 * n) if M is None else M
    _check_lp1_resolution(n, M)
    f, g = lp1_loops(n, M, measure)
    return path_length(f.model, assemble_loop_geodesic(f.model, f, g, P))


@_timed
def lp1(n: int, M: Optional[int] = None, P: int = 64, measure: str = "normalized") -> ExperimentReport:
    """Audit of the loop-space distance between ``[1:0]`` and ``[cos ns : sin ns]``.

    Reports the loop integral of pointwise distances (lower bound for any
    path), the length of the leaf-wise geodesic path (upper bound for the
    distance), and the value ``n`` claimed as a lower bound, side by side.
    """
    M = max(64, 64 * n) if M is None else M
    _check_lp1_resolution(n, M)
    lower = lp1_lower_bound(n, M, measure)
    f, g = lp1_loops(n, M, measure)
    path = assemble_loop_geodesic(f.model, f, g, P)
    upper = path_length(f.model, path)
    energy = path_energy(f.model, path)
    mass = f.grid.mass
    target = math.pi / 4 if n else 0.0
    flags = {
        "lower_bound_pi_over_4": abs(lower / mass - target) <= LP1_LOWER_TOL,
        "upper_bound_le_pi_over_2": upper / math.sqrt(mass) <= math.pi / 2 + LP1_UPPER_SLACK,
        "bound_ordering": lower / mass <= upper / math.sqrt(mass) + LP1_ORDER_SLACK,
    }
    return ExperimentReport(
        "lp1", {"n": n, "M": M, "P": P, "measure": measure},
        {"lower_bound": lower, "upper_bound": upper, "energy": energy,
         "paper_claim_n": float(n), "claim_reproduced": bool(lower / mass >= n)},
        flags)


# ---------------------------------------------------------------------------
# Loop geodesics
# ---------------------------------------------------------------------------

def corrupt_leaf(path, j: int, amplitude: float = 0.1):
    """Replace leaf ``j`` by the same leaf plus a bump ``i a sin(pi t)`` in chart coordinates."""
    charts, coords = path.leaf(j)
    bump = 1j * amplitude * np.sin(np.pi * path.times)[:, None]
    return path.replace_leaf(j, charts, coords + bump)


@_timed
def geodesic_assembly(n: int = 2, M: int = 256, P: int = 64, measure: str = "normalized") -> ExperimentReport:
    """Assemble the leaf-wise geodesic between the LP^1 loops and check its residual."""
    f, g = lp1_loops(n, M, measure)
    m = f.model
    path = assemble_loop_geodesic(m, f, g, P)
    table = leaf_residuals(m, path)
    residual = float(np.max(table))
    # a leaf checked on its own must give the same residual as inside the path
    probe = range(0, M, max(1, M // 16))
    leaf_gap = max(abs(curve_geodesic_residual(m, path.times, *path.leaf(j)) - float(np.max(table[:, j])))
                   for j in probe)
    # a leaf that stays in one chart, so the bump is smooth
    j_bad = next(j for j in range(M // (8 * max(n, 1)), M) if np.all(path.chart_ids[:, j] == path.chart_ids[0, j]))
    corrupted = geodesic_residual(m, corrupt_leaf(path, j_bad))
    rows = [{"node": j, "time": float(path.times[i + 1]), "residual": float(table[i, j])}
            for j in range(M) for i in range(table.shape[0])]
    return ExperimentReport(
        "geodesic", {"n": n, "M": M, "P": P, "measure": measure},
        {"residual": residual, "leaf_gap": leaf_gap, "corrupted_residual": corrupted, "corrupted_node": j_bad,
         "length": path_length(m, path), "energy": path_energy(m, path)},
        {"geodesic_residual": residual <= GEODESIC_TOL,
         "corruption_detected": corrupted > CORRUPTION_MIN,
         "per_leaf_equivalence": leaf_gap <= 1e-9},
        tables={"geodesic_residuals": rows})


# ---------------------------------------------------------------------------
# Projective space P^N standing in for P(l^2)
# ---------------------------------------------------------------------------

def random_homogeneous(rng: np.random.Generator, N: int, size=None):
    shape = (N + 1,) if size is None else (size, N + 1)
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def chart_path_distance(m: FubiniStudyModel, R: float) -> float:
    """Length of ``t -> [1 : t : 0 ...]``, ``0 <= t <= R``, integrated with the model metric."""
    e1 = np.zeros(m.n, dtype=complex)
    e1[0] = 1.0

    def speed(t):
        z = t * e1
        return math.sqrt(hermitian_product(m, z, e1, e1).real)

    val, _ = integrate.quad(speed, 0.0, R, epsabs=1e-13, epsrel=1e-13, limit=200)
    return val


@_timed
def pl2_distance(N: int = 16, seed: int = 0, pairs: int = 100) -> ExperimentReport:
    """Fubini-Study distances in P^N: boundedness and the reduction to ``arctan R``."""
    if N < 2:
        raise DomainError("pl2 experiments need N >= 2")
    m = make_model("fubini-study-pn", N)
    rng = experiment_rng(seed, f"pl2-distance/{N}")
    rows = []
    for k in range(pairs):
        p, q = random_homogeneous(rng, N), random_homogeneous(rng, N)
        d = float(fs_distance_homogeneous(p, q))
        R, _, _ = gram_schmidt_reduction(p, q)
        dc = chart_path_distance(m, R)
        rows.append({"pair": k, "R": R, "fs_distance": d, "chart_path": dc, "abs_err": abs(d - dc)})

    e = np.eye(N + 1)
    pi4 = fs_distance(m, m.point_from_homogeneous(e[0], 0), m.point_from_homogeneous(e[0] + e[1], 0))
    orth = float(fs_distance_homogeneous(e[0], e[1]))
    # orthogonal pair as the limit of non-orthogonal q_k -> q
    approach = [float(fs_distance_homogeneous(e[0], e[1] + 10.0**-k * e[0])) for k in range(1, 9)]
    same = float(fs_distance_homogeneous(e[0] + 2j * e[2], 3 * (e[0] + 2j * e[2])))
    dists = [r["fs_distance"] for r in rows]
    max_err = max(r["abs_err"] for r in rows)
    return ExperimentReport(
        "pl2-distance", {"N": N, "seed": seed, "pairs": pairs},
        {"diameter_estimate": max(dists), "max_chart_path_err": max_err, "pi_over_4_pair": pi4,
         "orthogonal_pair": orth, "orthogonal_limit": approach, "equal_pair": same},
        {"bounded": max(dists) <= math.pi / 2 + FS_BOUND_SLACK,
         "chart_path_matches": max_err <= CHART_PATH_TOL,
         "pi_over_4": abs(pi4 - math.pi / 4) <= 1e-10,
         "orthogonal_is_pi_over_2": orth == math.pi / 2 and abs(approach[-1] - orth) < 1e-7,
         "equal_is_zero": same <= 1e-12},
        tables={"pl2_distance": rows})


@_timed
def pl2_cauchy(N: int = 16, seed: int = 0, terms: int = 30, samples: int = 100) -> ExperimentReport:
    """A contracting sequence ``w + e_2 / 2^k`` in chart 0 and the Lipschitz bound on distances."""
    if N < 2:
        raise DomainError("pl2 experiments need N >= 2")
    m = make_model("fubini-study-pn", N)
    rng = experiment_rng(seed, f"pl2-cauchy/{N}")
    w = 0.5 * (rng.standard_normal(N) + 1j * rng.standard_normal(N))
    e2 = np.zeros(N, dtype=complex)
    e2[1] = 1.0
    limit = ChartPoint(0, w)
    rows = []
    for k in range(1, terms + 1):
        wk = w + e2 / 2.0**k
        d = fs_distance(m, ChartPoint(0, wk), limit)
        gap = float(np.linalg.norm(wk - w))
        rows.append({"k": k, "distance": d, "chart_gap": gap, "ratio": d / gap})
    C = max(r["ratio"] for r in rows)

    # the speed bound along the straight chart segments joining w_k to w
    ks = rng.integers(1, terms + 1, size=samples)
    ts = rng.random(samples)
    gam = np.array([np.concatenate([[1.0], t * w + (1 - t) * (w + e2 / 2.0**k)]) for k, t in zip(ks, ts)])
    dgam = np.array([np.concatenate([[0.0], e2 / 2.0**k]) for k in ks])
    lhs, rhs = pl2_norm_bound_check(m, gam, dgam)
    holds = int(np.sum(lhs <= rhs))
    dists = [r["distance"] for r in rows]
    return ExperimentReport(
        "pl2-cauchy", {"N": N, "seed": seed, "terms": terms, "samples": samples},
        {"lipschitz_constant": C, "final_distance": dists[-1], "norm_bound_holds": holds},
        {"distances_to_zero": dists[-1] < 1e-8 and all(a > b for a, b in zip(dists, dists[1:])),
         "uniform_constant": C <= math.sqrt(2),
         "norm_bound": holds == samples},
        tables={"pl2_cauchy": rows})


# ---------------------------------------------------------------------------
# Whole suite
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    seed: int = 0
    M: int = 64
    P: int = 64
    N: int = 16
    trials: int = 10
    lc_trials: int = 20
    lp1_ns: Sequence[int] = (1, 2, 4, 8, 16)
    lp1_M: Optional[int] = None
    geodesic_n: int = 2
    geodesic_M: int = 256
    N_sweep: Sequence[int] = (2, 4, 16, 64)
    measure: str = "normalized"


class SuiteError(LoopKahlerError):
    """A sub-experiment failed; ``reports`` holds everything finished before it."""

    def __init__(self, message, reports):
        super().__init__(message)
        self.reports = reports


def run_all(config: RunConfig = RunConfig(), out: Optional[Path] = None) -> List[ExperimentReport]:
    """Run every experiment; write ``report.json`` and CSV tables to ``out`` if given."""
    for n in config.lp1_ns:
        if config.lp1_M is not None and config.lp1_M < 64 * n:
            raise DomainError(f"experiment lp1(n={n}): grid M={config.lp1_M} is under-resolved, "
                              f"need M >= {64 * n}")
    jobs = []
    for model, dim in (("flat-cn", 2), ("fubini-study-p1", None), ("fubini-study-pn", config.N),
                       ("perturbed-hermitian", None)):
        jobs.append(lambda model=model, dim=dim: dform_identity(
            model, config.M, config.trials, config.seed, dim, config.measure))
    jobs.append(lambda: levi_civita(config.M, config.lc_trials, config.seed, measure=config.measure))
    jobs.append(lambda: geodesic_assembly(config.geodesic_n, config.geodesic_M, config.P, config.measure))
    for n in config.lp1_ns:
        jobs.append(lambda n=n: lp1(n, config.lp1_M, config.P, config.measure))
    for N in config.N_sweep:
        jobs.append(lambda N=N: pl2_distance(N, config.seed))
    jobs.append(lambda: pl2_cauchy(config.N, config.seed))

    reports: List[ExperimentReport] = []
    try:
        for job in jobs:
            reports.append(job())
    except Exception as exc:
        if out is not None:
            write_reports(reports, out, error=f"{type(exc).__name__}: {exc}")
        raise SuiteError(f"suite aborted: {exc}", reports) from exc
    if out is not None:
        write_reports(reports, out)
    return reports


def write_reports(reports: List[ExperimentReport], out, error: Optional[str] = None):
    out = Path(out)
    doc = {"version": __version__, "passed": error is None and all(r.passed for r in reports),
           "reports": [r.to_dict() for r in reports]}
    if error is not None:
        doc["error"] = error
    write_json(out / "report.json", doc)
    for k, r in enumerate(reports):
        for table, rows in r.tables.items():
            write_csv(out / f"{k:02d}_{table}.csv", rows)
