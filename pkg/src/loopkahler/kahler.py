"""Chart-based Hermitian manifold models and their pointwise geometry.

A model exposes its metric ``h_ij(z)`` in chart coordinates together with the
Wirtinger derivatives ``dh_ij/dz_k`` and ``dh_ij/dzbar_k``.  Everything else in
the package (loop metric, exterior derivative, connection, geodesics) is
assembled from those two callables.

Conventions used throughout:

* ``h(u, v) = sum_ij h_ij u_i conj(v_j)``: linear in the first slot,
  conjugate-linear in the second.
* ``omega = -Im h``, so ``omega(u, i u) = h(u, u) > 0``.
* Three-forms are evaluated with the determinant convention
  ``(a ^ b ^ c)(u, v, w) = det[[a(u), a(v), a(w)], ...]``.
* Metric derivative arrays are indexed ``[..., i, j, k]`` for ``d h_ij / d z_k``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, NotKahlerError, NumericError

#: projective models leave a chart once a coordinate exceeds this radius; the
#: chart switched to has all |z| <= 1 (on P^1, |z'| < 1/2), which is the hysteresis
SWITCH_RADIUS = 2.0

MODEL_NAMES = ("flat-cn", "fubini-study-p1", "fubini-study-pn", "perturbed-hermitian")
_ALIASES = {
    "flat": "flat-cn",
    "cn": "flat-cn",
    "p1": "fubini-study-p1",
    "pn": "fubini-study-pn",
    "perturbed": "perturbed-hermitian",
}


@dataclass(frozen=True, eq=False)
class ChartPoint:
    """A point of a model given by a chart index and complex coordinates."""

    chart_id: int
    coords: np.ndarray

    def __post_init__(self):
        coords = np.array(self.coords, dtype=complex).reshape(-1)
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "chart_id", int(self.chart_id))
        if not np.all(np.isfinite(coords)):
            raise DomainError("chart coordinates must be finite")

    def same_as(self, other: "ChartPoint") -> bool:
        return self.chart_id == other.chart_id and np.array_equal(self.coords, other.coords)

    def __repr__(self):
        return f"ChartPoint(chart_id={self.chart_id}, coords={self.coords.tolist()})"


@dataclass(frozen=True, eq=False)
class TangentVec:
    """Components of a tangent vector on the coordinate fields d/dz_i of the base chart."""

    base: ChartPoint
    components: np.ndarray

    def __post_init__(self):
        comps = np.array(self.components, dtype=complex).reshape(-1)
        comps.setflags(write=False)
        object.__setattr__(self, "components", comps)
        if comps.shape != self.base.coords.shape:
            raise DomainError(
                f"tangent vector has {comps.size} components, base point has dimension "
                f"{self.base.coords.size}")
        if not np.all(np.isfinite(comps)):
            raise DomainError("tangent components must be finite")


def _wirtinger_fd(func, z, step=1e-5):
    """Central-difference Wirtinger derivatives of a matrix-valued ``func(z)``.

    Returns ``(d/dz_k, d/dzbar_k)`` stacked on a trailing axis ``k``.
    """
    z = np.asarray(z, dtype=complex)
    n = z.shape[-1]
    h = step * (1.0 + np.max(np.abs(z), axis=-1, keepdims=True))
    dz, dzbar = [], []
    for k in range(n):
        e = np.zeros(n, dtype=complex)
        e[k] = 1.0
        hk = h[..., None] if z.ndim > 1 else h
        dx = (func(z + h * e) - func(z - h * e)) / (2 * hk)
        dy = (func(z + 1j * h * e) - func(z - 1j * h * e)) / (2 * hk)
        dz.append(0.5 * (dx - 1j * dy))
        dzbar.append(0.5 * (dx + 1j * dy))
    return np.stack(dz, axis=-1), np.stack(dzbar, axis=-1)


class KahlerModel:
    """Base class for a Hermitian manifold described in holomorphic charts.

    Subclasses implement :meth:`metric` and usually :meth:`metric_derivatives`;
    the default derivative is a central finite difference of the metric with a
    step of ``1e-5`` relative to the coordinate magnitude.
    """

    name = "hermitian"
    n_charts = 1
    is_kahler_expected = True

    def __init__(self, n: int):
        if n < 1:
            raise DomainError("complex dimension must be positive")
        self.n = int(n)

    # -- geometry callbacks -------------------------------------------------
    def metric(self, z):
        raise NotImplementedError

    def metric_derivatives(self, z):
        return _wirtinger_fd(self.metric, z)

    def check_coords(self, z):
        """Raise :class:`DomainError` if any coordinate tuple is outside the model's domain."""
        z = np.asarray(z)
        if z.shape[-1] != self.n:
            raise DomainError(f"expected {self.n} coordinates, got {z.shape[-1]}")
        if not np.all(np.isfinite(z)):
            raise DomainError("non-finite chart coordinates")

    def christoffel(self, z):
        """Christoffel symbols ``G[..., k, i, j] = sum_l h^{k lbar} d_i h_{j lbar}``."""
        if not self.is_kahler_expected:
            raise NotKahlerError(f"model {self.name!r} is not Kahler; Christoffel symbols "
                                 "of the Levi-Civita connection are not defined here")
        z = np.asarray(z, dtype=complex)
        h = self.metric(z)
        dz, _ = self.metric_derivatives(z)
        try:
            # inverse with sum_l inv[k, l] h[m, l] = delta_km
            inv = np.linalg.inv(np.swapaxes(h, -1, -2))
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"singular metric at {z}") from exc
        # dz[..., j, l, i] = d h_{j l} / d z_i
        return np.einsum("...kl,...jli->...kij", inv, dz)

    # -- atlas --------------------------------------------------------------
    def check_chart(self, chart_id):
        chart_id = np.asarray(chart_id)
        if np.any(chart_id < 0) or np.any(chart_id >= self.n_charts):
            raise DomainError(f"chart id out of range for {self.name!r} "
                              f"({self.n_charts} chart(s))")

    def transition(self, src, dst, z, v=None):
        """Re-express coordinates (and optionally a tangent vector) from chart ``src`` to ``dst``."""
        self.check_chart(src)
        self.check_chart(dst)
        z = np.asarray(z, dtype=complex)
        if v is None:
            return z.copy()
        return z.copy(), np.asarray(v, dtype=complex).copy()

    def settle(self, chart, z, v=None):
        """Apply the chart-switching rule; single-chart models never switch."""
        chart = np.asarray(chart)
        if v is None:
            return chart.copy(), np.asarray(z, dtype=complex).copy()
        return chart.copy(), np.asarray(z, dtype=complex).copy(), np.asarray(v, dtype=complex).copy()

    def point(self, coords, chart_id=0) -> ChartPoint:
        """Validated :class:`ChartPoint` constructor."""
        p = ChartPoint(chart_id, coords)
        self.check_chart(p.chart_id)
        self.check_coords(p.coords)
        return p

    def __repr__(self):
        return f"{type(self).__name__}(n={self.n})"


class FlatModel(KahlerModel):
    """Flat C^n with the identity metric."""

    name = "flat-cn"

    def metric(self, z):
        z = np.asarray(z)
        return np.broadcast_to(np.eye(self.n, dtype=complex), z.shape[:-1] + (self.n, self.n)).copy()

    def metric_derivatives(self, z):
        z = np.asarray(z)
        shape = z.shape[:-1] + (self.n,) * 3
        return np.zeros(shape, dtype=complex), np.zeros(shape, dtype=complex)


class PerturbedHermitianModel(KahlerModel):
    """Non-Kahler test metric on C^2: ``h11 = 1 + eps Re z2``, ``h22 = 1``, ``h12 = 0``.

    Hermitian and positive-definite on ``Re z2 > -1/eps``; its Kahler form is not
    closed, which makes the exterior-derivative identity non-trivial.
    """

    name = "perturbed-hermitian"
    is_kahler_expected = False

    def __init__(self, eps: float = 0.1):
        super().__init__(2)
        self.eps = float(eps)

    def check_coords(self, z):
        super().check_coords(z)
        if np.any(1.0 + self.eps * np.real(np.asarray(z)[..., 1]) <= 0):
            raise DomainError("perturbed metric is not positive-definite at this point")

    def metric(self, z):
        z = np.asarray(z, dtype=complex)
        h = np.zeros(z.shape[:-1] + (2, 2), dtype=complex)
        h[..., 0, 0] = 1.0 + self.eps * z[..., 1].real
        h[..., 1, 1] = 1.0
        return h

    def metric_derivatives(self, z):
        z = np.asarray(z)
        dz = np.zeros(z.shape[:-1] + (2, 2, 2), dtype=complex)
        # Re z2 = (z2 + conj z2) / 2
        dz[..., 0, 0, 1] = 0.5 * self.eps
        return dz, dz.copy()

    def __repr__(self):
        return f"PerturbedHermitianModel(eps={self.eps})"


class FubiniStudyModel(KahlerModel):
    """Complex projective space P^N with the Fubini-Study metric.

    Chart ``k`` is ``w_k != 0`` with coordinates ``w_i / w_k`` (``i != k`` in
    increasing order).  In every chart ``h_ij = delta_ij / S - conj(z_i) z_j / S^2``
    with ``S = 1 + |z|^2``, i.e. ``h = d dbar log S``; with this normalization the
    distance of ``[1:0]`` to ``[1:R]`` is ``arctan R`` and the diameter is ``pi/2``.
    """

    def __init__(self, N: int = 1):
        super().__init__(N)
        self.n_charts = N + 1
        self.name = "fubini-study-p1" if N == 1 else "fubini-study-pn"

    def metric(self, z):
        z = np.asarray(z, dtype=complex)
        S = 1.0 + np.sum(np.abs(z) ** 2, axis=-1)[..., None, None]
        eye = np.eye(self.n, dtype=complex)
        return eye / S - np.conj(z)[..., :, None] * z[..., None, :] / S**2

    def metric_derivatives(self, z):
        z = np.asarray(z, dtype=complex)
        zb = np.conj(z)
        S = 1.0 + np.sum(np.abs(z) ** 2, axis=-1)[..., None, None, None]
        eye = np.eye(self.n)
        # d_k h_ij = -d_ij zb_k/S^2 - zb_i d_jk/S^2 + 2 zb_i z_j zb_k/S^3
        dz = (-eye[:, :, None] * zb[..., None, None, :]
              - zb[..., :, None, None] * eye[None, :, :]) / S**2 \
            + 2 * zb[..., :, None, None] * z[..., None, :, None] * zb[..., None, None, :] / S**3
        # dbar_k h_ij = -d_ij z_k/S^2 - d_ik z_j/S^2 + 2 zb_i z_j z_k/S^3
        dzbar = (-eye[:, :, None] * z[..., None, None, :]
                 - eye[:, None, :] * z[..., None, :, None]) / S**2 \
            + 2 * zb[..., :, None, None] * z[..., None, :, None] * z[..., None, None, :] / S**3
        return dz, dzbar

    # -- homogeneous coordinates ------------------------------------------
    def _slots(self, chart):
        chart = np.asarray(chart)
        ar = np.arange(self.n)
        return ar + (ar >= chart[..., None])

    def homogeneous(self, chart, z):
        """Homogeneous representative with a 1 in slot ``chart``."""
        chart = np.asarray(chart, dtype=int)
        z = np.asarray(z, dtype=complex)
        chart_b = np.broadcast_to(chart, z.shape[:-1])
        w = np.empty(z.shape[:-1] + (self.n + 1,), dtype=complex)
        np.put_along_axis(w, self._slots(chart_b), z, axis=-1)
        np.put_along_axis(w, chart_b[..., None], 1.0 + 0j, axis=-1)
        return w

    def homogeneous_tangent(self, chart, v):
        """Homogeneous lift of chart components (a 0 in slot ``chart``)."""
        chart = np.asarray(chart, dtype=int)
        v = np.asarray(v, dtype=complex)
        chart_b = np.broadcast_to(chart, v.shape[:-1])
        dw = np.zeros(v.shape[:-1] + (self.n + 1,), dtype=complex)
        np.put_along_axis(dw, self._slots(chart_b), v, axis=-1)
        return dw

    def from_homogeneous(self, w, chart=None, dw=None):
        """Chart coordinates of ``[w]`` (default chart: largest |w_k|)."""
        w = np.asarray(w, dtype=complex)
        if not np.all(np.isfinite(w)) or np.any(np.all(w == 0, axis=-1)):
            raise DomainError("zero or non-finite homogeneous vector")
        if chart is None:
            chart = np.argmax(np.abs(w), axis=-1)
        chart = np.broadcast_to(np.asarray(chart, dtype=int), w.shape[:-1])
        wc = np.take_along_axis(w, chart[..., None], axis=-1)
        if np.any(wc == 0):
            raise DomainError("point lies outside the requested chart")
        slots = self._slots(chart)
        z = np.take_along_axis(w, slots, axis=-1) / wc
        if dw is None:
            return chart.copy(), z
        dw = np.asarray(dw, dtype=complex)
        dwc = np.take_along_axis(dw, chart[..., None], axis=-1)
        v = np.take_along_axis(dw, slots, axis=-1) / wc - z * dwc / wc
        return chart.copy(), z, v

    def transition(self, src, dst, z, v=None):
        self.check_chart(src)
        self.check_chart(dst)
        w = self.homogeneous(src, z)
        if v is None:
            return self.from_homogeneous(w, dst)[1]
        _, z2, v2 = self.from_homogeneous(w, dst, self.homogeneous_tangent(src, v))
        return z2, v2

    def settle(self, chart, z, v=None):
        """Move to the chart of the largest homogeneous component once any |z_i| > 2."""
        chart = np.array(chart, dtype=int)
        z = np.array(z, dtype=complex)
        v = None if v is None else np.array(v, dtype=complex)
        far = np.max(np.abs(z), axis=-1) > SWITCH_RADIUS
        if np.any(far):
            w = self.homogeneous(chart, z)
            new = np.where(far, np.argmax(np.abs(w), axis=-1), chart)
            if v is None:
                _, z2 = self.from_homogeneous(w, new)
            else:
                _, z2, v2 = self.from_homogeneous(w, new, self.homogeneous_tangent(chart, v))
                v = np.where(far[..., None], v2, v)
            z = np.where(far[..., None], z2, z)
            chart = new
        return (chart, z) if v is None else (chart, z, v)

    def point_from_homogeneous(self, w, chart=None) -> ChartPoint:
        c, z = self.from_homogeneous(np.asarray(w, dtype=complex), chart)
        return ChartPoint(int(c), z)

    def __repr__(self):
        return f"FubiniStudyModel(N={self.n})"


class CallbackModel(KahlerModel):
    """Single-chart model from a user-supplied metric callback ``h(z) -> (..., n, n)``."""

    name = "callback"

    def __init__(self, n: int, metric: Callable, derivatives: Optional[Callable] = None,
                 is_kahler_expected: bool = True, name: str = "callback"):
        super().__init__(n)
        self._metric = metric
        self._derivatives = derivatives
        self.is_kahler_expected = is_kahler_expected
        self.name = name

    def metric(self, z):
        return np.asarray(self._metric(np.asarray(z, dtype=complex)), dtype=complex)

    def metric_derivatives(self, z):
        if self._derivatives is None:
            return super().metric_derivatives(z)
        dz, dzbar = self._derivatives(np.asarray(z, dtype=complex))
        return np.asarray(dz, dtype=complex), np.asarray(dzbar, dtype=complex)


def make_model(name: str, dim: Optional[int] = None, **kwargs) -> KahlerModel:
    """Build one of the built-in models by name.

    ``dim`` is the complex dimension for ``flat-cn`` (default 1) and the
    projective dimension ``N`` for ``fubini-study-pn`` (default 16).
    """
    key = _ALIASES.get(name, name)
    if key == "flat-cn":
        return FlatModel(dim or 1)
    if key == "fubini-study-p1":
        if dim not in (None, 1):
            raise DomainError("fubini-study-p1 has dimension 1")
        return FubiniStudyModel(1)
    if key == "fubini-study-pn":
        return FubiniStudyModel(16 if dim is None else dim)
    if key == "perturbed-hermitian":
        if dim not in (None, 2):
            raise DomainError("perturbed-hermitian lives on C^2")
        return PerturbedHermitianModel(**kwargs)
    raise DomainError(f"unknown model {name!r}; choose from {', '.join(MODEL_NAMES)}")


# ---------------------------------------------------------------------------
# Array-level pointwise geometry (vectorized over leading axes)
# ---------------------------------------------------------------------------

def hermitian_product(model: KahlerModel, z, u, v):
    """``sum_ij h_ij(z) u_i conj(v_j)``."""
    h = model.metric(z)
    return np.einsum("...i,...ij,...j->...", u, h, np.conj(v))


def kahler_form(model: KahlerModel, z, u, v):
    """``-Im h(u, v)``."""
    return -np.imag(hermitian_product(model, z, u, v))


_PERMS = [(p, 1 if sum(p[a] > p[b] for a in range(3) for b in range(a + 1, 3)) % 2 == 0 else -1)
          for p in itertools.permutations(range(3))]


def domega(model: KahlerModel, z, u, v, w):
    """The three-form ``d omega`` at ``z`` evaluated on ``(u, v, w)``.

    Uses ``d omega = (i/2) sum (d_k h_ij dz_k + dbar_k h_ij dzbar_k) ^ dz_i ^ dzbar_j``.
    """
    dz, dzbar = model.metric_derivatives(z)
    X = (np.asarray(u, dtype=complex), np.asarray(v, dtype=complex), np.asarray(w, dtype=complex))
    total = 0.0
    for perm, sign in _PERMS:
        a, b, c = (X[p] for p in perm)
        total = total + sign * (
            np.einsum("...ijk,...k,...i,...j->...", dz, a, b, np.conj(c))
            + np.einsum("...ijk,...k,...i,...j->...", dzbar, np.conj(a), b, np.conj(c)))
    return np.real(0.5j * total)


# ---------------------------------------------------------------------------
# Point-level operations
# ---------------------------------------------------------------------------

def _common_base(m: KahlerModel, *vecs: TangentVec) -> ChartPoint:
    base = vecs[0].base
    for v in vecs[1:]:
        if not v.base.same_as(base):
            raise DomainError("tangent vectors live at different base points")
    m.check_chart(base.chart_id)
    m.check_coords(base.coords)
    return base


def h_inner(m: KahlerModel, u: TangentVec, v: TangentVec) -> complex:
    """Pointwise Hermitian product of two tangent vectors at the same point."""
    base = _common_base(m, u, v)
    return complex(hermitian_product(m, base.coords, u.components, v.components))


def omega_eval(m: KahlerModel, u: TangentVec, v: TangentVec) -> float:
    base = _common_base(m, u, v)
    return float(kahler_form(m, base.coords, u.components, v.components))


def d_omega_eval(m: KahlerModel, u: TangentVec, v: TangentVec, w: TangentVec) -> float:
    base = _common_base(m, u, v, w)
    return float(domega(m, base.coords, u.components, v.components, w.components))


def christoffels(m: KahlerModel, z: ChartPoint) -> np.ndarray:
    """Christoffel symbols ``G[k, i, j]`` of the Levi-Civita connection at ``z``."""
    m.check_chart(z.chart_id)
    m.check_coords(z.coords)
    return m.christoffel(z.coords)


def push_vector(m: KahlerModel, v: TangentVec, chart_id: int) -> TangentVec:
    """The same tangent vector expressed in another chart."""
    z2, c2 = m.transition(v.base.chart_id, chart_id, v.base.coords, v.components)
    return TangentVec(ChartPoint(chart_id, z2), c2)


# ---------------------------------------------------------------------------
# Fubini-Study distance and the projective-space estimates
# ---------------------------------------------------------------------------

def _require_fs(m):
    if not isinstance(m, FubiniStudyModel):
        raise DomainError(f"Fubini-Study operation requested on model {m.name!r}")


def hdot(a, b):
    """Hermitian inner product ``<a, b> = sum a_i conj(b_i)`` over the last axis."""
    return np.sum(np.asarray(a) * np.conj(b), axis=-1)


def gram_schmidt_reduction(p, q):
    """Reduce a pair of homogeneous vectors to an effective P^1.

    Returns ``(R, v1, v2)`` where ``v1 = p/|p|`` and ``v2`` is the unit vector
    of ``q - <q, v1> v1``; in the frame ``(v1, v2)`` the points become
    ``[1:0]`` and ``[1:R]`` (``R = inf`` for orthogonal representatives, and
    ``v2`` is zero when ``[p] = [q]``).
    """
    p = np.asarray(p, dtype=complex)
    q = np.asarray(q, dtype=complex)
    np_, nq = np.linalg.norm(p), np.linalg.norm(q)
    if np_ == 0 or nq == 0:
        raise DomainError("zero homogeneous vector")
    v1 = p / np_
    q = q / nq
    c = hdot(q, v1)
    perp = q - c * v1
    r = np.linalg.norm(perp)
    v2 = perp / r if r > 0 else np.zeros_like(perp)
    R = np.inf if c == 0 else r / abs(c)
    return float(R), v1, v2


def fs_distance_homogeneous(p, q):
    """Fubini-Study distance ``arctan R`` between ``[p]`` and ``[q]`` (vectorized)."""
    p = np.asarray(p, dtype=complex)
    q = np.asarray(q, dtype=complex)
    np_ = np.linalg.norm(p, axis=-1)
    nq = np.linalg.norm(q, axis=-1)
    if np.any(np_ == 0) or np.any(nq == 0):
        raise DomainError("zero homogeneous vector")
    p = p / np_[..., None]
    q = q / nq[..., None]
    c = hdot(q, p)
    perp = np.linalg.norm(q - c[..., None] * p, axis=-1)
    # arctan(perp / |c|); the orthogonal case c = 0 gives pi/2 directly
    return np.arctan2(perp, np.abs(c))


def fs_distance(m: KahlerModel, p: ChartPoint, q: ChartPoint) -> float:
    """Geodesic distance between two points of a Fubini-Study model."""
    _require_fs(m)
    for x in (p, q):
        m.check_chart(x.chart_id)
        m.check_coords(x.coords)
    wp = m.homogeneous(p.chart_id, p.coords)
    wq = m.homogeneous(q.chart_id, q.coords)
    return float(fs_distance_homogeneous(wp, wq))


def fs_homogeneous_speed2(w, dw):
    """Fubini-Study ``h(w', w')`` of a curve written in homogeneous coordinates."""
    w = np.asarray(w, dtype=complex)
    dw = np.asarray(dw, dtype=complex)
    nw2 = np.real(hdot(w, w))
    if np.any(nw2 == 0):
        raise DomainError("zero homogeneous base vector")
    return (nw2 * np.real(hdot(dw, dw)) - np.abs(hdot(w, dw)) ** 2) / nw2**2


def pl2_norm_bound_check(m: KahlerModel, gamma, dgamma):
    """Compare the Fubini-Study speed of a homogeneous curve sample with ``2 |g'|^2 / |g|^2``.

    Returns ``(lhs, rhs)``; the completeness argument needs ``lhs <= rhs``.
    """
    _require_fs(m)
    gamma = np.asarray(gamma, dtype=complex)
    dgamma = np.asarray(dgamma, dtype=complex)
    if gamma.shape[-1] != m.n + 1 or dgamma.shape != gamma.shape:
        raise DomainError(f"expected homogeneous vectors of length {m.n + 1}")
    lhs = fs_homogeneous_speed2(gamma, dgamma)
    rhs = 2.0 * np.real(hdot(dgamma, dgamma)) / np.real(hdot(gamma, gamma))
    if lhs.ndim == 0:
        return float(lhs), float(rhs)
    return lhs, rhs
