"""Vector fields on the loop space and the exterior derivative of the loop Kahler form.

Vector fields are rules ``Loop -> LoopTangent`` expressed in chart
coordinates.  Loops are perturbed affinely in chart coordinates, so the second
derivatives of the chart maps never enter any formula here.
"""

from __future__ import annotations

import math
from typing import Callable, Optional

import numpy as np

from .errors import DomainError
from .fd import fd_step, richardson_derivative
from .kahler import ChartPoint, KahlerModel, TangentVec, domega
from .loops import Loop, LoopGrid, LoopTangent, _check_aligned, loop_form_Omega


class LoopVectorField:
    """A vector field on (a neighbourhood in) the loop space.

    ``rule(g)`` returns the chart components at every node as an ``(M, n)``
    array (or a :class:`LoopTangent`).  ``derivative(g, nu)``, when given,
    returns the exact directional derivative of those components along the
    tangent ``nu``; fields built from it can be checked against finite
    differences.
    """

    def __init__(self, rule: Callable, derivative: Optional[Callable] = None, name: str = "field"):
        self._rule = rule
        self._derivative = derivative
        self.name = name

    def __call__(self, g: Loop) -> LoopTangent:
        out = self._rule(g)
        if isinstance(out, LoopTangent):
            _check_aligned(g, out)
            return out
        return LoopTangent(g, out)

    @property
    def has_derivative(self) -> bool:
        return self._derivative is not None

    def derivative(self, g: Loop, nu: LoopTangent) -> np.ndarray:
        """Exact ``d xi [nu]`` as an ``(M, n)`` array of chart components."""
        if self._derivative is None:
            raise DomainError(f"field {self.name!r} has no analytic derivative callback")
        _check_aligned(g, nu)
        return np.asarray(self._derivative(g, nu), dtype=complex)

    def __repr__(self):
        return f"LoopVectorField({self.name})"


def _per_node(arr, M, tail):
    arr = np.asarray(arr, dtype=complex)
    if arr.shape == tail:
        arr = np.broadcast_to(arr, (M,) + tail)
    if arr.shape != (M,) + tail:
        raise DomainError(f"coefficient of shape {arr.shape} does not fit {(M,) + tail}")
    return arr


class PolynomialField(LoopVectorField):
    """Fields with closed-form derivatives, used as test data.

    At node ``j``::

        xi_j = c_j + A_j g_j + B_j conj(g_j) + D_j * g_j**2 + E_j * mean_m(a . g_m)

    All coefficients are optional and may be given per node (leading axis
    ``M``) or shared.  The ``E``/``a`` term couples nodes, so the field is not
    a pointwise lift of a field on the manifold.
    """

    def __init__(self, M: int, n: int, c=None, A=None, B=None, D=None, E=None, a=None,
                 name: str = "polynomial"):
        self.M, self.n = M, n
        self.c = None if c is None else _per_node(c, M, (n,))
        self.A = None if A is None else _per_node(A, M, (n, n))
        self.B = None if B is None else _per_node(B, M, (n, n))
        self.D = None if D is None else _per_node(D, M, (n,))
        if (E is None) != (a is None):
            raise DomainError("coupling needs both E and a")
        self.E = None if E is None else _per_node(E, M, (n,))
        self.a = None if a is None else np.asarray(a, dtype=complex).reshape(n)
        super().__init__(self._evaluate, self._differentiate, name)

    def _evaluate(self, g: Loop):
        z = g.coords
        if z.shape != (self.M, self.n):
            raise DomainError("field was built for a different grid or dimension")
        out = np.zeros_like(z)
        if self.c is not None:
            out = out + self.c
        if self.A is not None:
            out = out + np.einsum("mij,mj->mi", self.A, z)
        if self.B is not None:
            out = out + np.einsum("mij,mj->mi", self.B, np.conj(z))
        if self.D is not None:
            out = out + self.D * z * z
        if self.E is not None:
            out = out + self.E * np.mean(z @ self.a)
        return out

    def _differentiate(self, g: Loop, nu: LoopTangent):
        z, v = g.coords, nu.vectors
        out = np.zeros_like(z)
        if self.A is not None:
            out = out + np.einsum("mij,mj->mi", self.A, v)
        if self.B is not None:
            out = out + np.einsum("mij,mj->mi", self.B, np.conj(v))
        if self.D is not None:
            out = out + 2 * self.D * z * v
        if self.E is not None:
            out = out + self.E * np.mean(v @ self.a)
        return out


def constant_field(M: int, n: int, c) -> PolynomialField:
    """Field whose chart components do not depend on the loop."""
    return PolynomialField(M, n, c=c, name="constant")


def coordinate_field(M: int, n: int, scale: complex = 1.0) -> PolynomialField:
    """``xi(g) = scale * g`` in chart coordinates."""
    return PolynomialField(M, n, A=scale * np.eye(n), name="coordinate")


def harmonic_field(grid: LoopGrid, n: int, k: int, A=None) -> PolynomialField:
    """``xi(g)_j = exp(i k s_j) A g_j`` (identity ``A`` by default)."""
    A = np.eye(n) if A is None else np.asarray(A, dtype=complex)
    phase = np.exp(1j * k * grid.nodes)
    return PolynomialField(grid.M, n, A=phase[:, None, None] * A[None], name=f"harmonic-{k}")


def random_field(rng: np.random.Generator, M: int, n: int, scale: float = 1.0,
                 smooth_modes: int = 3) -> PolynomialField:
    """A random polynomial field whose coefficients are low-order trigonometric in s."""
    s = 2 * np.pi * np.arange(M) / M

    def trig(shape):
        out = np.zeros((M,) + shape, dtype=complex)
        for k in range(-smooth_modes, smooth_modes + 1):
            coef = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / (1 + abs(k))
            out += np.exp(1j * k * s).reshape((M,) + (1,) * len(shape)) * coef
        return scale * out / math.sqrt(2 * smooth_modes + 1)

    return PolynomialField(M, n, c=trig((n,)), A=trig((n, n)), B=0.5 * trig((n, n)),
                           D=0.5 * trig((n,)), E=0.5 * trig((n,)),
                           a=rng.standard_normal(n) + 1j * rng.standard_normal(n),
                           name="random")


# ---------------------------------------------------------------------------
# Perturbations and derivatives
# ---------------------------------------------------------------------------

def perturb_loop(g: Loop, nu: LoopTangent, t: float, rechart: bool = True) -> Loop:
    """The loop with node coordinates ``g_j + t nu_j`` (chart-affine translation).

    With ``rechart`` the result is moved to better charts where the model asks
    for it; finite differences use ``rechart=False`` so chart components stay
    comparable.
    """
    _check_aligned(g, nu)
    z = g.coords + t * nu.vectors
    charts = g.chart_ids
    if rechart:
        charts, z = g.model.settle(charts, z)
    return Loop(g.model, g.grid, charts, z)


def _fd_along(g: Loop, nu: LoopTangent, evaluate: Callable, step: Optional[float]):
    scale = float(np.max(np.abs(nu.vectors))) if nu.vectors.size else 0.0
    if scale == 0.0:
        return np.zeros_like(np.asarray(evaluate(g)))
    unit = LoopTangent(g, nu.vectors / scale)
    h = fd_step(g.coords) if step is None else step
    return scale * richardson_derivative(lambda t: evaluate(perturb_loop(g, unit, t, rechart=False)), h)


def directional_derivative(F: Callable, g: Loop, nu: LoopTangent, step: Optional[float] = None):
    """``nu(F)(g) = d_g F [nu]`` by Richardson-extrapolated central differences.

    ``F`` maps a loop to a scalar or an array (node-wise functionals are
    differentiated component by component).
    """
    return _fd_along(g, nu, F, step)


def field_derivative(xi: LoopVectorField, g: Loop, nu: LoopTangent,
                     step: Optional[float] = None) -> np.ndarray:
    """Finite-difference ``d xi [nu]`` of the chart components of a field."""
    return _fd_along(g, nu, lambda h: xi(h).vectors, step)


def lie_bracket(xi: LoopVectorField, eta: LoopVectorField, g: Loop,
                analytic: bool = False) -> LoopTangent:
    """``[xi, eta](g) = d eta [xi_g] - d xi [eta_g]`` node-wise in chart coordinates."""
    xg, eg = xi(g), eta(g)
    if analytic:
        return LoopTangent(g, eta.derivative(g, xg) - xi.derivative(g, eg))
    return LoopTangent(g, field_derivative(eta, g, xg) - field_derivative(xi, g, eg))


def omega_functional(a: LoopVectorField, b: LoopVectorField) -> Callable:
    """The function ``g -> Omega_g(a_g, b_g)`` on the loop space."""
    return lambda g: loop_form_Omega(g.model, g, a(g), b(g))


def dOmega_terms(xi, eta, nu, g: Loop):
    """The six summands of the invariant formula for ``d Omega``, already signed."""
    m = g.model
    xg, eg, ng = xi(g), eta(g), nu(g)
    return [
        directional_derivative(omega_functional(eta, nu), g, xg),
        -directional_derivative(omega_functional(xi, nu), g, eg),
        directional_derivative(omega_functional(xi, eta), g, ng),
        -loop_form_Omega(m, g, lie_bracket(xi, eta, g), ng),
        -loop_form_Omega(m, g, lie_bracket(eta, nu, g), xg),
        loop_form_Omega(m, g, lie_bracket(xi, nu, g), eg),
    ]


def dOmega_six_term(xi: LoopVectorField, eta: LoopVectorField, nu: LoopVectorField,
                    g: Loop) -> float:
    """``d Omega(xi, eta, nu)`` at ``g`` from derivatives and brackets of the fields."""
    return math.fsum(float(t) for t in dOmega_terms(xi, eta, nu, g))


def integral_of_domega(xi: LoopVectorField, eta: LoopVectorField, nu: LoopVectorField,
                       g: Loop) -> float:
    """Quadrature over the circle of ``d omega_{g(s)}(xi(s), eta(s), nu(s))``."""
    xg, eg, ng = xi(g), eta(g), nu(g)
    _check_aligned(g, xg, eg, ng)
    return g.grid.integrate(domega(g.model, g.coords, xg.vectors, eg.vectors, ng.vectors))


# ---------------------------------------------------------------------------
# Analytic chart expansion of d_g omega_{g(s)}(xi, eta)[nu]
# ---------------------------------------------------------------------------

def chart_derivative_terms(m: KahlerModel, g: Loop, xi: LoopVectorField, eta: LoopVectorField,
                           nu_g: LoopTangent):
    """The metric-derivative group ``A`` and the field-derivative groups ``B``, ``C``.

    Returned as per-node complex arrays; ``A + B - C`` is the derivative of
    ``omega_{g(s)}(xi, eta)`` along ``nu`` in linear charts.
    """
    _check_aligned(g, nu_g)
    x, e, v = xi(g).vectors, eta(g).vectors, nu_g.vectors
    dx, de = xi.derivative(g, nu_g), eta.derivative(g, nu_g)
    h = m.metric(g.coords)
    dz, dzbar = m.metric_derivatives(g.coords)
    xb, eb, vb = np.conj(x), np.conj(e), np.conj(v)

    A = 0.5j * (np.einsum("mijk,mk,mi,mj->m", dz, v, x, eb)
                + np.einsum("mijk,mk,mi,mj->m", dzbar, vb, x, eb)
                - np.einsum("mijk,mk,mi,mj->m", dz, v, e, xb)
                - np.einsum("mijk,mk,mi,mj->m", dzbar, vb, e, xb))
    B = 0.5j * (np.einsum("mij,mi,mj->m", h, dx, eb)
                + np.einsum("mij,mi,mj->m", h, x, np.conj(de)))
    C = 0.5j * (np.einsum("mij,mj,mi->m", h, np.conj(dx), e)
                + np.einsum("mij,mj,mi->m", h, xb, de))
    return A, B, C


def integrand_chart_derivative(m: KahlerModel, g: Loop, xi: LoopVectorField,
                               eta: LoopVectorField, nu_g: LoopTangent, j=None):
    """``A + B - C`` at node ``j`` (all nodes when ``j`` is None)."""
    A, B, C = chart_derivative_terms(m, g, xi, eta, nu_g)
    total = A + B - C
    return total if j is None else complex(total[_node_index(g.grid, j)])


# ---------------------------------------------------------------------------
# Evaluation map
# ---------------------------------------------------------------------------

def _node_index(grid: LoopGrid, s) -> int:
    if isinstance(s, (int, np.integer)):
        if not 0 <= s < grid.M:
            raise DomainError(f"node index {s} outside 0..{grid.M - 1}")
        return int(s)
    nodes = grid.nodes
    j = int(np.argmin(np.abs(np.angle(np.exp(1j * (nodes - float(s)))))))
    if abs(np.angle(np.exp(1j * (nodes[j] - float(s))))) > 1e-12:
        raise DomainError(f"s = {s} is not a grid node; interpolation is not supported")
    return j


def evaluation_map(g: Loop, s) -> ChartPoint:
    """``ev_s(g) = g(s)`` for a grid node ``s`` (index or parameter value)."""
    j = _node_index(g.grid, s)
    return ChartPoint(g.chart_ids[j], g.coords[j])


def evaluation_differential(nu: LoopTangent, s) -> TangentVec:
    """``d ev_s [nu] = nu(s)``."""
    j = _node_index(nu.grid, s)
    return TangentVec(evaluation_map(nu.loop, j), nu.vectors[j])


def evaluation_second_difference(g: Loop, xi: LoopTangent, nu: LoopTangent, s,
                                 a: float = 1e-3, b: float = 1e-3) -> np.ndarray:
    """Mixed second difference of ``ev_s`` along ``xi`` and ``nu`` (zero for affine charts)."""
    j = _node_index(g.grid, s)

    _check_aligned(g, xi, nu)

    def ev(ta, tb):
        h = perturb_loop(g, xi, ta, rechart=False)
        h = perturb_loop(h, LoopTangent(h, nu.vectors), tb, rechart=False)
        return evaluation_map(h, j).coords

    return (ev(a, b) - ev(a, 0) - ev(0, b) + ev(0, 0)) / (a * b)
