"""Current-magnitude barrier, tracking Lyapunov function, and the scalar
closed-form CBF/CLF filter.

The filter solves ``min (u - u_nom)^2`` subject to

    a_cbf * u >= b_cbf     (barrier:  dh/dt >= -alpha h)
    a_clf * u <= b_clf     (tracking: dV/dt <= 0)

by projecting ``u_nom`` onto the interval both half-lines define. The
constraint coefficients always come from the linear model ``f = A x``,
``g = B``, whatever plant is being driven.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .plant import LinearPlant

EMPTY_INTERVAL_TOL = 1e-12


class FilterError(RuntimeError):
    """The barrier constraint cannot be met by any input."""


@dataclass(frozen=True)
class BarrierConfig:
    I_max: float = 5.0
    alpha: float = 1000.0

    def __post_init__(self):
        if not self.I_max > 0:
            raise ValueError("I_max must be positive")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")


@dataclass(frozen=True)
class FilterStep:
    a_cbf: float
    b_cbf: float
    a_clf: float
    b_clf: float
    u_lb: float
    u_ub: float
    u_nom: float
    u_bar: float
    active: bool
    infeasible_relaxed: bool


def barrier_h(x, cfg: BarrierConfig) -> float:
    x = np.asarray(x, dtype=float)
    return cfg.I_max**2 - float(x @ x)


def barrier_grad(x) -> np.ndarray:
    return -2.0 * np.asarray(x, dtype=float)


def lyapunov_v(x, x_star) -> float:
    e = np.asarray(x, dtype=float) - np.asarray(x_star, dtype=float)
    return float(e @ e)


def lyapunov_grad(x, x_star) -> np.ndarray:
    return 2.0 * (np.asarray(x, dtype=float) - np.asarray(x_star, dtype=float))


def filter_coefficients(x, x_star, plant: LinearPlant, cfg: BarrierConfig) -> tuple[float, float, float, float]:
    x = np.asarray(x, dtype=float)
    f = plant.A @ x
    dh = barrier_grad(x)
    dV = lyapunov_grad(x, x_star)
    a_cbf = float(dh @ plant.B)
    b_cbf = -cfg.alpha * barrier_h(x, cfg) - float(dh @ f)
    a_clf = float(dV @ plant.B)
    b_clf = -float(dV @ f)
    return a_cbf, b_cbf, a_clf, b_clf


def _cbf_bounds(a: float, b: float) -> tuple[float, float]:
    if a > 0:
        return b / a, math.inf
    if a < 0:
        return -math.inf, b / a
    if b > 0:
        raise FilterError(f"barrier constraint 0 * u >= {b} is unsatisfiable")
    return -math.inf, math.inf


def closed_form_filter(u_nom: float, coeffs: tuple[float, float, float, float]) -> FilterStep:
    """Project ``u_nom`` onto the feasible interval of the two constraints.

    A zero coefficient contributes no bound. If the interval is empty (or the
    tracking constraint is violated with ``a_clf == 0``), the tracking bound
    is dropped and ``infeasible_relaxed`` is set: safety takes precedence.
    """
    a_cbf, b_cbf, a_clf, b_clf = coeffs
    u_nom = float(u_nom)
    if a_cbf * u_nom >= b_cbf and a_clf * u_nom <= b_clf:
        return FilterStep(a_cbf, b_cbf, a_clf, b_clf, -math.inf, math.inf, u_nom, u_nom, False, False)

    lb, ub = _cbf_bounds(a_cbf, b_cbf)
    cbf_lb, cbf_ub = lb, ub
    relaxed = False
    if a_clf > 0:
        ub = min(ub, b_clf / a_clf)
    elif a_clf < 0:
        lb = max(lb, b_clf / a_clf)
    elif b_clf < 0:
        relaxed = True
    if lb > ub + EMPTY_INTERVAL_TOL * max(1.0, abs(lb), abs(ub)):
        relaxed = True
    if relaxed:
        lb, ub = cbf_lb, cbf_ub
    u_bar = min(ub, max(u_nom, lb))
    return FilterStep(a_cbf, b_cbf, a_clf, b_clf, lb, ub, u_nom, u_bar, u_bar != u_nom, relaxed)


def filter_batch(u_nom, x, x_star, plant: LinearPlant, cfg: BarrierConfig):
    """Vectorized filter over ``n`` states.

    ``x`` and ``x_star`` are ``(n, 2)``; ``u_nom`` is ``(n,)``. Returns
    ``(u_bar, active, relaxed)``. Component arithmetic is written out so each
    row's result is independent of the batch it is computed in.
    """
    (a11, a12), (a21, a22) = plant.A
    b1, b2 = plant.B
    xd, xq = x[:, 0], x[:, 1]
    ed, eq = xd - x_star[:, 0], xq - x_star[:, 1]
    fd = a11 * xd + a12 * xq
    fq = a21 * xd + a22 * xq
    h = cfg.I_max**2 - (xd * xd + xq * xq)

    a_cbf = -2.0 * (xd * b1 + xq * b2)
    b_cbf = -cfg.alpha * h + 2.0 * (xd * fd + xq * fq)
    a_clf = 2.0 * (ed * b1 + eq * b2)
    b_clf = -2.0 * (ed * fd + eq * fq)

    ok = (a_cbf * u_nom >= b_cbf) & (a_clf * u_nom <= b_clf)
    if ok.all():
        return u_nom, np.zeros(len(u_nom), bool), np.zeros(len(u_nom), bool)

    if np.any((a_cbf == 0) & (b_cbf > 0)):
        raise FilterError("barrier constraint unsatisfiable (a_cbf == 0, b_cbf > 0)")

    with np.errstate(divide="ignore", invalid="ignore"):
        r_cbf = b_cbf / a_cbf
        r_clf = b_clf / a_clf
        cbf_lb = np.where(a_cbf > 0, r_cbf, -np.inf)
        cbf_ub = np.where(a_cbf < 0, r_cbf, np.inf)
        lb = np.where(a_clf < 0, np.maximum(cbf_lb, r_clf), cbf_lb)
        ub = np.where(a_clf > 0, np.minimum(cbf_ub, r_clf), cbf_ub)
        tol = EMPTY_INTERVAL_TOL * np.maximum(1.0, np.maximum(np.abs(lb), np.abs(ub)))
        empty = lb > ub + tol
    relaxed = ~ok & (empty | ((a_clf == 0) & (b_clf < 0)))
    lb = np.where(relaxed, cbf_lb, lb)
    ub = np.where(relaxed, cbf_ub, ub)

    u_bar = np.where(ok, u_nom, np.minimum(ub, np.maximum(u_nom, lb)))
    return u_bar, u_bar != u_nom, relaxed
