"""Discretized loops, tangent fields along loops and the loop-space metric.

A loop is sampled on a uniform periodic grid ``s_j = 2 pi j / M (+ offset)``.
Integrals over the circle use the trapezoid rule, which for periodic data is
exact on trigonometric polynomials of degree below ``M/2``.  The default
measure has total mass 1 (``ds / 2 pi``); ``measure="raw"`` gives mass ``2 pi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .errors import DomainError, GridMismatchError, NotKahlerError
from .kahler import ChartPoint, KahlerModel, TangentVec, hermitian_product, kahler_form

MEASURES = ("normalized", "raw")


@dataclass(frozen=True)
class LoopGrid:
    M: int
    measure: str = "normalized"
    offset: float = 0.0

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 4:
            raise DomainError("a loop grid needs M >= 4 nodes")
        if self.measure not in MEASURES:
            raise DomainError(f"measure must be one of {MEASURES}")

    @property
    def nodes(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.M) / self.M + self.offset

    @property
    def mass(self) -> float:
        return 1.0 if self.measure == "normalized" else 2 * np.pi

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.M, self.mass / self.M)

    def integrate(self, values) -> complex | float:
        """Trapezoid rule with compensated summation (deterministic in node order)."""
        values = np.asarray(values)
        if values.shape[0] != self.M:
            raise GridMismatchError(f"expected {self.M} node values, got {values.shape[0]}")
        w = self.mass / self.M
        if np.iscomplexobj(values):
            return complex(math.fsum(np.real(values) * w), math.fsum(np.imag(values) * w))
        return math.fsum(values * w)


@dataclass(frozen=True, eq=False)
class Loop:
    """A point ``g`` of the loop space: one chart point per grid node."""

    model: KahlerModel
    grid: LoopGrid
    chart_ids: np.ndarray
    coords: np.ndarray

    def __post_init__(self):
        charts = np.array(self.chart_ids, dtype=int).reshape(-1)
        coords = np.array(self.coords, dtype=complex)
        if charts.shape[0] != self.grid.M or coords.shape[0] != self.grid.M:
            raise GridMismatchError(f"loop data do not match the grid size {self.grid.M}")
        coords = coords.reshape(self.grid.M, -1)
        self.model.check_chart(charts)
        self.model.check_coords(coords)
        charts.setflags(write=False)
        coords.setflags(write=False)
        object.__setattr__(self, "chart_ids", charts)
        object.__setattr__(self, "coords", coords)

    @classmethod
    def constant(cls, model, grid, point: ChartPoint):
        return cls(model, grid, np.full(grid.M, point.chart_id),
                   np.tile(point.coords, (grid.M, 1)))

    @property
    def points(self) -> List[ChartPoint]:
        return [ChartPoint(c, z) for c, z in zip(self.chart_ids, self.coords)]

    def same_as(self, other: "Loop") -> bool:
        return (self is other) or (
            self.model is other.model and self.grid == other.grid
            and np.array_equal(self.chart_ids, other.chart_ids)
            and np.array_equal(self.coords, other.coords))


@dataclass(frozen=True, eq=False)
class LoopTangent:
    """A tangent vector ``xi`` to the loop space at ``loop``: one vector per node."""

    loop: Loop
    vectors: np.ndarray = field(repr=False)

    def __post_init__(self):
        vec = np.array(self.vectors, dtype=complex)
        if vec.shape != self.loop.coords.shape:
            raise GridMismatchError(
                f"tangent data of shape {vec.shape} does not match loop {self.loop.coords.shape}")
        if not np.all(np.isfinite(vec)):
            raise DomainError("tangent data must be finite")
        vec.setflags(write=False)
        object.__setattr__(self, "vectors", vec)

    @property
    def grid(self) -> LoopGrid:
        return self.loop.grid

    def node_vectors(self) -> List[TangentVec]:
        return [TangentVec(p, v) for p, v in zip(self.loop.points, self.vectors)]

    def __add__(self, other):
        _check_aligned(self.loop, other)
        return LoopTangent(self.loop, self.vectors + other.vectors)

    def __sub__(self, other):
        _check_aligned(self.loop, other)
        return LoopTangent(self.loop, self.vectors - other.vectors)

    def __mul__(self, a):
        return LoopTangent(self.loop, a * self.vectors)

    __rmul__ = __mul__

    def __neg__(self):
        return LoopTangent(self.loop, -self.vectors)


def _check_aligned(g: Loop, *tangents: LoopTangent):
    for t in tangents:
        if not t.loop.same_as(g):
            raise GridMismatchError("tangent field is not based at this loop")


def loop_metric_H(m: KahlerModel, g: Loop, xi: LoopTangent, eta: LoopTangent) -> complex:
    """``H_g(xi, eta) = integral over the circle of h_{g(s)}(xi(s), eta(s))``."""
    _check_aligned(g, xi, eta)
    return g.grid.integrate(hermitian_product(m, g.coords, xi.vectors, eta.vectors))


def loop_form_Omega(m: KahlerModel, g: Loop, xi: LoopTangent, eta: LoopTangent) -> float:
    """``Omega_g(xi, eta) = integral of omega_{g(s)}(xi(s), eta(s))``; equals ``-Im H``."""
    _check_aligned(g, xi, eta)
    return g.grid.integrate(kahler_form(m, g.coords, xi.vectors, eta.vectors))


def spectral_derivative(values: np.ndarray) -> np.ndarray:
    """d/ds of periodic samples along axis 0 (Nyquist mode dropped for even M)."""
    M = values.shape[0]
    k = np.fft.fftfreq(M, d=1.0 / M)
    if M % 2 == 0:
        k[M // 2] = 0.0
    shape = (M,) + (1,) * (values.ndim - 1)
    return np.fft.ifft(1j * k.reshape(shape) * np.fft.fft(values, axis=0), axis=0)


def _single_chart(m: KahlerModel, g: Loop, xi: LoopTangent):
    """Loop and field re-expressed in the chart of node 0."""
    c0 = int(g.chart_ids[0])
    if np.all(g.chart_ids == c0):
        return g.coords, xi.vectors
    z = np.empty_like(g.coords)
    v = np.empty_like(xi.vectors)
    for c in np.unique(g.chart_ids):
        mask = g.chart_ids == c
        z[mask], v[mask] = m.transition(int(c), c0, g.coords[mask], xi.vectors[mask])
    return z, v


def sobolev_norm(m: KahlerModel, g: Loop, xi: LoopTangent, k: int = 0) -> float:
    """Discrete ``W^{k,2}`` norm of a tangent field, ``k`` in {0, 1}.

    ``k = 1`` adds the squared norm of the covariant s-derivative
    ``d xi/ds + G(g)(dg/ds, xi)`` (spectral differentiation of chart components).
    Diagnostic only; the loop-space metric itself uses point values.
    """
    _check_aligned(g, xi)
    if k not in (0, 1):
        raise DomainError("only k = 0 and k = 1 are supported")
    total = loop_metric_H(m, g, xi, xi).real
    if k == 1:
        if not m.is_kahler_expected:
            raise NotKahlerError("the covariant derivative needs a Kahler model")
        z, v = _single_chart(m, g, xi)
        # d/ds in the grid parameter s in [0, 2 pi)
        dz = spectral_derivative(z)
        dv = spectral_derivative(v)
        cov = dv + np.einsum("mkij,mi,mj->mk", m.christoffel(z), dz, v)
        total += g.grid.integrate(hermitian_product(m, z, cov, cov)).real
    return math.sqrt(max(total, 0.0))


def integrand_table(m: KahlerModel, g: Loop, xi: LoopTangent, eta: LoopTangent):
    """Per-node integrand values of ``H`` and ``Omega`` (rows for CSV export)."""
    _check_aligned(g, xi, eta)
    hv = hermitian_product(m, g.coords, xi.vectors, eta.vectors)
    om = kahler_form(m, g.coords, xi.vectors, eta.vectors)
    return [
        {"node": j, "s": float(s), "chart_id": int(c), "h_re": float(h.real),
         "h_im": float(h.imag), "omega": float(o), "weight": float(w)}
        for j, (s, c, h, o, w) in enumerate(zip(g.grid.nodes, g.chart_ids, hv, om, g.grid.weights))
    ]
