"""Leaf-wise Levi-Civita connection on the loop space, loop geodesics and path length.

The connection acts node by node: ``(nabla_nu xi)(s_j) = d xi [nu](s_j) +
G(g_j)(nu_j, xi_j)``.  A path of loops is a geodesic exactly when every leaf
``t -> gamma(t)(s_j)`` is a geodesic of the underlying manifold, so loop
geodesics are assembled leaf by leaf.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Union

import numpy as np

from .calculus import LoopVectorField, field_derivative, lie_bracket, directional_derivative
from .errors import AmbiguousGeodesicError, DomainError, GridMismatchError, NotKahlerError, NumericError
from .fd import stencil_weights, stencil_window
from .geodesic_ode import geodesic_ode_step
from .kahler import (ChartPoint, FlatModel, FubiniStudyModel, KahlerModel, TangentVec,
                     hdot, hermitian_product)
from .loops import Loop, LoopGrid, LoopTangent, _check_aligned, loop_metric_H

#: width of the finite-difference stencils in time
STENCIL_WIDTH = 11
#: |<p, q>| below which two unit representatives count as antipodal
ANTIPODAL_TOL = 1e-12


def _require_kahler(m: KahlerModel):
    if not m.is_kahler_expected:
        raise NotKahlerError(f"the Levi-Civita connection is not available on {m.name!r}")


def _tangent_at(field, g: Loop) -> LoopTangent:
    return field(g) if isinstance(field, LoopVectorField) else field


# ---------------------------------------------------------------------------
# Connection and its Levi-Civita checks
# ---------------------------------------------------------------------------

def covariant_derivative_loop(m: KahlerModel, g: Loop, nu: LoopTangent, xi: LoopVectorField,
                              analytic: bool = False) -> LoopTangent:
    """``nabla_nu xi`` at ``g``: field derivative plus node-wise Christoffel term."""
    _require_kahler(m)
    _check_aligned(g, nu)
    xg = xi(g)
    d = xi.derivative(g, nu) if analytic else field_derivative(xi, g, nu)
    gamma = m.christoffel(g.coords)
    return LoopTangent(g, d + np.einsum("mkij,mi,mj->mk", gamma, nu.vectors, xg.vectors))


def check_metric_compatibility(m: KahlerModel, g: Loop, xi: LoopVectorField, eta: LoopVectorField,
                               nu: Union[LoopVectorField, LoopTangent]) -> float:
    """``|nu(H(xi, eta)) - H(nabla_nu xi, eta) - H(xi, nabla_nu eta)|`` at ``g``."""
    _require_kahler(m)
    ng = _tangent_at(nu, g)
    lhs = directional_derivative(lambda h: loop_metric_H(m, h, xi(h), eta(h)), g, ng)
    rhs = (loop_metric_H(m, g, covariant_derivative_loop(m, g, ng, xi), eta(g))
           + loop_metric_H(m, g, xi(g), covariant_derivative_loop(m, g, ng, eta)))
    return float(abs(lhs - rhs))


def check_torsion_free(m: KahlerModel, g: Loop, xi: LoopVectorField, eta: LoopVectorField) -> float:
    """Node-wise max norm of ``nabla_xi eta - nabla_eta xi - [xi, eta]``."""
    _require_kahler(m)
    t = (covariant_derivative_loop(m, g, xi(g), eta)
         - covariant_derivative_loop(m, g, eta(g), xi)
         - lie_bracket(xi, eta, g))
    return float(np.max(np.linalg.norm(t.vectors, axis=-1)))


# ---------------------------------------------------------------------------
# Paths of loops
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LoopPath:
    """A path ``t -> gamma(t)`` of loops on a shared grid, sampled at ``times``.

    ``chart_ids`` has shape ``(P + 1, M)`` and ``coords`` ``(P + 1, M, n)``.
    """

    model: KahlerModel
    grid: LoopGrid
    times: np.ndarray
    chart_ids: np.ndarray
    coords: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        charts = np.asarray(self.chart_ids, dtype=int)
        coords = np.asarray(self.coords, dtype=complex)
        if times.ndim != 1 or times.size < 2:
            raise DomainError("a loop path needs at least two times (P >= 1)")
        if np.any(np.diff(times) <= 0):
            raise DomainError("path times must be increasing")
        if charts.shape != (times.size, self.grid.M) or coords.shape[:2] != charts.shape:
            raise GridMismatchError("path arrays do not match times x grid")
        self.model.check_chart(charts)
        self.model.check_coords(coords)
        for name, arr in (("times", times), ("chart_ids", charts), ("coords", coords)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def P(self) -> int:
        return self.times.size - 1

    def loop(self, i: int) -> Loop:
        return Loop(self.model, self.grid, self.chart_ids[i], self.coords[i])

    @property
    def loops(self) -> List[Loop]:
        return [self.loop(i) for i in range(self.times.size)]

    def leaf(self, j: int):
        """``(chart_ids, coords)`` of the leaf through node ``j``."""
        return self.chart_ids[:, j], self.coords[:, j]

    def replace_leaf(self, j: int, chart_ids, coords) -> "LoopPath":
        charts = self.chart_ids.copy()
        z = self.coords.copy()
        charts[:, j] = chart_ids
        z[:, j] = coords
        return LoopPath(self.model, self.grid, self.times, charts, z)

    @classmethod
    def from_loops(cls, times, loops: List[Loop]) -> "LoopPath":
        first = loops[0]
        for lp in loops[1:]:
            if lp.grid != first.grid or lp.model is not first.model:
                raise GridMismatchError("loops of a path must share model and grid")
        return cls(first.model, first.grid, times,
                   np.stack([lp.chart_ids for lp in loops]), np.stack([lp.coords for lp in loops]))


def _express(m: KahlerModel, charts, coords, target):
    """Coordinates of points ``(charts, coords)`` in the charts ``target`` (broadcast)."""
    if m.n_charts == 1:
        return np.asarray(coords)
    if isinstance(m, FubiniStudyModel):
        w = m.homogeneous(charts, coords)
        return m.from_homogeneous(w, np.broadcast_to(target, w.shape[:-1]))[1]
    out = np.empty_like(coords)
    target = np.broadcast_to(target, charts.shape)
    for src in np.unique(charts):
        for dst in np.unique(target):
            mask = (charts == src) & (target == dst)
            if np.any(mask):
                out[mask] = m.transition(int(src), int(dst), coords[mask])
    return out


def _time_derivatives(m: KahlerModel, times, charts, coords, i: int, deriv: int):
    """Stencil derivative at time index ``i`` of curves (leading time axis), in their chart at ``i``."""
    npts = times.size
    offs = stencil_window(i, npts, STENCIL_WIDTH)
    dt = (times[-1] - times[0]) / (npts - 1)
    w = stencil_weights(offs, deriv)
    idx = [i + o for o in offs]
    z = _express(m, charts[idx], coords[idx], charts[i])
    return np.tensordot(w, z, axes=(0, 0)) / dt**deriv


def _check_uniform(times):
    d = np.diff(times)
    if not np.allclose(d, d[0], rtol=1e-12, atol=0):
        raise DomainError("time sampling must be uniform")


def velocities(m: KahlerModel, path: LoopPath) -> np.ndarray:
    """``d gamma / dt`` at every sample, each in the chart of its base point."""
    _check_uniform(path.times)
    return np.stack([_time_derivatives(m, path.times, path.chart_ids, path.coords, i, 1)
                     for i in range(path.times.size)])


def _curve_residuals(m: KahlerModel, times, charts, coords):
    """``|D^2 c + G(c)(Dc, Dc)|`` at interior times for curves stacked on axis 1."""
    _require_kahler(m)
    _check_uniform(times)
    if times.size < 3:
        raise DomainError("the geodesic residual needs P >= 2")
    out = []
    for i in range(1, times.size - 1):
        d1 = _time_derivatives(m, times, charts, coords, i, 1)
        d2 = _time_derivatives(m, times, charts, coords, i, 2)
        acc = d2 + np.einsum("...kij,...i,...j->...k", m.christoffel(coords[i]), d1, d1)
        out.append(np.linalg.norm(acc, axis=-1))
    return np.array(out)


def curve_geodesic_residual(m: KahlerModel, times, chart_ids, coords) -> float:
    """Geodesic residual of a single curve in the manifold (max over interior times)."""
    charts = np.asarray(chart_ids, dtype=int)[:, None]
    z = np.asarray(coords, dtype=complex)[:, None, :]
    return float(np.max(_curve_residuals(m, np.asarray(times, dtype=float), charts, z)))


def leaf_residuals(m: KahlerModel, path: LoopPath) -> np.ndarray:
    """Residual table of shape ``(P - 1, M)`` (interior times x nodes)."""
    return _curve_residuals(m, path.times, path.chart_ids, path.coords)


def geodesic_residual(m: KahlerModel, path: LoopPath) -> float:
    """``max_j max_i |D_t^2 gamma_j + G(D_t gamma_j, D_t gamma_j)|`` over nodes and interior times."""
    return float(np.max(leaf_residuals(m, path)))


def _speed2(m: KahlerModel, path: LoopPath) -> np.ndarray:
    v = velocities(m, path)
    return np.array([path.grid.integrate(hermitian_product(m, path.coords[i], v[i], v[i])).real
                     for i in range(path.times.size)])


def _trapezoid(times, values) -> float:
    dt = np.diff(times)
    return math.fsum(0.5 * dt * (values[1:] + values[:-1]))


def path_length(m: KahlerModel, path: LoopPath) -> float:
    """``L = integral_0^1 sqrt(H(gamma', gamma')) dt`` (trapezoid in t)."""
    return _trapezoid(path.times, np.sqrt(np.maximum(_speed2(m, path), 0.0)))


def path_energy(m: KahlerModel, path: LoopPath) -> float:
    """``E = integral_0^1 H(gamma', gamma') dt``."""
    return _trapezoid(path.times, _speed2(m, path))


# ---------------------------------------------------------------------------
# Geodesic boundary-value problems
# ---------------------------------------------------------------------------

def _great_circles(m: FubiniStudyModel, p_charts, p_coords, q_charts, q_coords, times):
    """Fubini-Study geodesics between pairs of points, vectorized over pairs.

    Unit representatives are phase-aligned so ``<q, p>`` is real and
    non-negative; the horizontal great circle ``cos(t d) p + sin(t d) u`` then
    projects to the constant-speed minimizing geodesic of length ``d``.
    """
    P = m.homogeneous(p_charts, p_coords)
    Q = m.homogeneous(q_charts, q_coords)
    P = P / np.linalg.norm(P, axis=-1, keepdims=True)
    Q = Q / np.linalg.norm(Q, axis=-1, keepdims=True)
    c = hdot(Q, P)
    bad = np.abs(c) <= ANTIPODAL_TOL
    if np.any(bad):
        raise AmbiguousGeodesicError(
            "antipodal endpoints: the minimizing geodesic is not unique; perturb the endpoint",
            nodes=np.flatnonzero(np.atleast_1d(bad)).tolist())
    Q = Q * (np.conj(c) / np.abs(c))[..., None]
    cr = np.real(hdot(Q, P))
    perp = Q - cr[..., None] * P
    r = np.linalg.norm(perp, axis=-1)
    d = np.arctan2(r, cr)
    U = np.where(r[..., None] > 0, perp / np.where(r > 0, r, 1.0)[..., None], 0.0)
    t = np.asarray(times)[(slice(None),) + (None,) * (P.ndim)]
    W = np.cos(t * d[..., None]) * P + np.sin(t * d[..., None]) * U

    charts = np.empty(W.shape[:-1], dtype=int)
    coords = np.empty(W.shape[:-1] + (m.n,), dtype=complex)
    cur = np.broadcast_to(np.asarray(p_charts), W.shape[1:-1]).copy()
    for i in range(W.shape[0]):
        _, z = m.from_homogeneous(W[i], cur)
        cur, z = m.settle(cur, z)
        charts[i], coords[i] = cur, z
    # endpoints exactly as prescribed
    charts[0], coords[0] = p_charts, p_coords
    charts[-1], coords[-1] = q_charts, q_coords
    return charts, coords, d


def _flow(m: KahlerModel, charts, z, v, steps: int, sub: int):
    """RK4 geodesic flow over unit time for a batch of initial data.

    Returns the chart ids and coordinates at every ``sub``-th step
    (``steps + 1`` samples, leading axis time).
    """
    dt = 1.0 / (steps * sub)
    out_c, out_z = [charts.copy()], [z.copy()]
    for k in range(steps * sub):
        z, v = geodesic_ode_step(m, z, v, dt)
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(v))):
            raise DomainError("geodesic left every chart of the model")
        charts, z, v = m.settle(charts, z, v)
        if (k + 1) % sub == 0:
            out_c.append(charts.copy())
            out_z.append(z.copy())
    return np.stack(out_c), np.stack(out_z)


def _shoot(m: KahlerModel, p_charts, p_coords, q_charts, q_coords, steps: int,
           max_iter: int = 50, tol: float = 1e-10):
    """Newton shooting on the initial velocities of a batch of boundary-value problems.

    Each Newton step integrates the current guesses and their ``2 n`` real
    finite-difference perturbations in one vectorized RK4 pass.
    """
    p_charts = np.asarray(p_charts, dtype=int)
    p_coords = np.asarray(p_coords, dtype=complex)
    K, n = p_coords.shape
    sub = max(1, math.ceil(1000 / steps))
    qz = _express(m, np.asarray(q_charts, dtype=int), np.asarray(q_coords, dtype=complex), p_charts)
    v = qz - p_coords
    dirs = np.concatenate([np.eye(n), 1j * np.eye(n)]).astype(complex)  # (2n, n)
    for _ in range(max_iter):
        h = 1e-7 * (1.0 + np.max(np.abs(v), axis=-1))
        trial = np.concatenate([v[:, None, :], v[:, None, :] + h[:, None, None] * dirs[None]], axis=1)
        c0 = np.repeat(p_charts, 2 * n + 1)
        z0 = np.repeat(p_coords, 2 * n + 1, axis=0)
        ch, zz = _flow(m, c0, z0, trial.reshape(-1, n), 1, steps * sub)
        end = _express(m, ch[-1], zz[-1], c0).reshape(K, 2 * n + 1, n)
        r = end[:, 0] - qz
        if np.max(np.abs(r)) < tol:
            charts, coords = _flow(m, p_charts.copy(), p_coords.copy(), v, steps, sub)
            return charts, coords
        cols = (end[:, 1:] - end[:, :1]) / h[:, None, None]  # (K, 2n, n)
        J = np.concatenate([cols.real, cols.imag], axis=-1).transpose(0, 2, 1)  # (K, 2n, 2n)
        rhs = -np.concatenate([r.real, r.imag], axis=-1)
        step = np.linalg.solve(J, rhs[..., None])[..., 0]
        v = v + step[:, :n] + 1j * step[:, n:]
    raise NumericError(f"shooting did not converge in {max_iter} iterations")


def leaf_geodesic(m: KahlerModel, p: ChartPoint, q: ChartPoint, steps: int = 64,
                  method: str = "auto") -> List[ChartPoint]:
    """Constant-speed geodesic from ``p`` to ``q`` sampled at ``steps + 1`` equal times.

    Closed form on Fubini-Study and flat models; Newton shooting otherwise (or
    when ``method="shooting"``).
    """
    _require_kahler(m)
    if steps < 1:
        raise DomainError("steps must be >= 1")
    for x in (p, q):
        m.check_chart(x.chart_id)
        m.check_coords(x.coords)
    times = np.linspace(0.0, 1.0, steps + 1)
    if method == "auto":
        method = ("great-circle" if isinstance(m, FubiniStudyModel)
                  else "line" if isinstance(m, FlatModel) else "shooting")
    if p.same_as(q):
        return [p] * (steps + 1)
    if method == "great-circle":
        charts, coords, _ = _great_circles(m, p.chart_id, p.coords, q.chart_id, q.coords, times)
    elif method == "line":
        charts = np.zeros(times.size, dtype=int)
        coords = p.coords + times[:, None] * (q.coords - p.coords)
    elif method == "shooting":
        charts, coords = _shoot(m, [p.chart_id], p.coords[None], [q.chart_id], q.coords[None], steps)
        charts, coords = charts[:, 0], coords[:, 0]
        charts[-1], coords[-1] = q.chart_id, q.coords
    else:
        raise DomainError(f"unknown leaf geodesic method {method!r}")
    return [ChartPoint(c, z) for c, z in zip(charts, coords)]


def assemble_loop_geodesic(m: KahlerModel, f: Loop, g: Loop, P: int = 64) -> LoopPath:
    """The path of loops whose every leaf is the leaf geodesic from ``f(s_j)`` to ``g(s_j)``."""
    _require_kahler(m)
    if f.grid != g.grid:
        raise GridMismatchError("endpoint loops live on different grids")
    if P < 1:
        raise DomainError("P must be >= 1")
    times = np.linspace(0.0, 1.0, P + 1)
    if isinstance(m, FubiniStudyModel):
        charts, coords, _ = _great_circles(m, f.chart_ids, f.coords, g.chart_ids, g.coords, times)
    elif isinstance(m, FlatModel):
        charts = np.zeros((P + 1, f.grid.M), dtype=int)
        coords = f.coords[None] + times[:, None, None] * (g.coords - f.coords)[None]
    else:
        charts, coords = _shoot(m, f.chart_ids, f.coords, g.chart_ids, g.coords, P)
        charts[0], coords[0] = f.chart_ids, f.coords
        charts[-1], coords[-1] = g.chart_ids, g.coords
    return LoopPath(m, f.grid, times, charts, coords)
