"""Finite-difference machinery shared by the loop calculus and the path tools."""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Callable

import numpy as np

from .errors import FDConvergenceError

#: relative size of the difference between successive central estimates below
#: which an estimate is accepted without an order check
CONVERGED_RTOL = 1e-8
MIN_ORDER = 1.9


def fd_step(coords: np.ndarray, base: float = 1e-4) -> float:
    """Default step ``base * (1 + max |coordinate|)``."""
    coords = np.asarray(coords)
    scale = float(np.max(np.abs(coords))) if coords.size else 0.0
    return base * (1.0 + scale)


def richardson_derivative(func: Callable[[float], np.ndarray], step: float,
                          check_order: bool = True):
    """Derivative at 0 of ``func`` (scalar or array valued) along its real argument.

    Central differences with steps ``h`` and ``h/2`` are combined by Richardson
    extrapolation.  When the two raw estimates disagree by more than
    ``CONVERGED_RTOL`` a third step ``h/4`` is taken and the observed order of
    the central scheme must be at least ``MIN_ORDER``; otherwise
    :class:`FDConvergenceError` is raised carrying all estimates.
    """

    def central(h):
        return (np.asarray(func(h)) - np.asarray(func(-h))) / (2.0 * h)

    d1 = central(step)
    d2 = central(step / 2)
    est = (4.0 * d2 - d1) / 3.0
    scale = 1.0 + float(np.max(np.abs(est)))
    diff12 = float(np.max(np.abs(d1 - d2)))
    if not check_order or diff12 <= CONVERGED_RTOL * scale:
        return est[()] if est.ndim == 0 else est

    d3 = central(step / 4)
    diff23 = float(np.max(np.abs(d2 - d3)))
    order = math.inf if diff23 == 0.0 else math.log2(diff12 / diff23)
    if order < MIN_ORDER:
        raise FDConvergenceError(
            f"central difference converged with observed order {order:.3f} < {MIN_ORDER}",
            estimates=[d1, d2, d3], order=order)
    est = (4.0 * d3 - d2) / 3.0
    return est[()] if est.ndim == 0 else est


@lru_cache(maxsize=None)
def stencil_weights(offsets: tuple, deriv: int) -> np.ndarray:
    """Finite-difference weights for the ``deriv``-th derivative on integer ``offsets``.

    Solves the moment (Vandermonde) system exactly for the given node set, so
    ``k`` nodes give a scheme exact on polynomials of degree ``k - 1``.
    """
    x = np.asarray(offsets, dtype=float)
    k = len(x)
    A = np.vander(x, k, increasing=True).T
    rhs = np.zeros(k)
    rhs[deriv] = math.factorial(deriv)
    w = np.linalg.solve(A, rhs)
    w.setflags(write=False)
    return w


def stencil_window(i: int, npts: int, width: int) -> tuple:
    """Offsets of a ``width``-point window around index ``i`` clamped to ``[0, npts)``."""
    width = min(width, npts)
    lo = i - width // 2
    lo = max(0, min(lo, npts - width))
    return tuple(range(lo - i, lo - i + width))
