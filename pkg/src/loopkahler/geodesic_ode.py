"""Fixed-step RK4 integration of the geodesic equation in holomorphic charts."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import DomainError, NotKahlerError
from .kahler import ChartPoint, KahlerModel, TangentVec, hermitian_product

#: default number of RK4 steps per unit time
STEPS_PER_UNIT_TIME = 1000


@dataclass
class GeodesicTrajectory:
    times: np.ndarray
    points: List[ChartPoint] = field(default_factory=list)
    velocities: List[TangentVec] = field(default_factory=list)

    @property
    def end(self) -> ChartPoint:
        return self.points[-1]

    def speeds(self, m: KahlerModel) -> np.ndarray:
        """``h(v, v)`` at every sample."""
        return np.array([hermitian_product(m, v.base.coords, v.components, v.components).real
                         for v in self.velocities])


def geodesic_acceleration(m: KahlerModel, z, v):
    """``-G^k_ij v^i v^j``: the coordinate acceleration of a geodesic."""
    return -np.einsum("...kij,...i,...j->...k", m.christoffel(z), v, v)


def geodesic_ode_step(m: KahlerModel, z, v, dt):
    """One classical RK4 step for ``z'' + G(z')(z', z') = 0``."""
    k1z, k1v = v, geodesic_acceleration(m, z, v)
    k2z = v + 0.5 * dt * k1v
    k2v = geodesic_acceleration(m, z + 0.5 * dt * k1z, k2z)
    k3z = v + 0.5 * dt * k2v
    k3v = geodesic_acceleration(m, z + 0.5 * dt * k2z, k3z)
    k4z = v + dt * k3v
    k4v = geodesic_acceleration(m, z + dt * k3z, k4z)
    z_new = z + dt / 6.0 * (k1z + 2 * k2z + 2 * k3z + k4z)
    v_new = v + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
    return z_new, v_new


def integrate_geodesic(m: KahlerModel, z0: ChartPoint, v0: TangentVec, T: float,
                       steps: Optional[int] = None) -> GeodesicTrajectory:
    """Integrate the geodesic through ``z0`` with initial velocity ``v0`` up to time ``T``.

    The state is moved to a better chart whenever the model's switching rule
    asks for it (projective models: some ``|z_i| > 2``).  ``steps`` defaults to
    1000 per unit time.
    """
    if not m.is_kahler_expected:
        raise NotKahlerError(f"geodesics need a Kahler model, got {m.name!r}")
    if not v0.base.same_as(z0):
        raise DomainError("initial velocity is not based at the initial point")
    if steps is None:
        steps = max(1, math.ceil(STEPS_PER_UNIT_TIME * abs(T)))
    if steps < 1:
        raise DomainError("steps must be >= 1")
    m.check_chart(z0.chart_id)
    m.check_coords(z0.coords)

    dt = T / steps
    chart = z0.chart_id
    z = np.array(z0.coords, dtype=complex)
    v = np.array(v0.components, dtype=complex)
    traj = GeodesicTrajectory(times=np.linspace(0.0, T, steps + 1))
    traj.points.append(z0)
    traj.velocities.append(v0)
    for _ in range(steps):
        z, v = geodesic_ode_step(m, z, v, dt)
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(v))):
            raise DomainError("geodesic left every chart of the model")
        c, z, v = m.settle(chart, z, v)
        chart = int(c)
        m.check_coords(z)
        p = ChartPoint(chart, z)
        traj.points.append(p)
        traj.velocities.append(TangentVec(p, v))
    return traj
