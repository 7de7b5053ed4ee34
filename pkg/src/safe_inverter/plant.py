"""Inverter + RL filter plant in the dq frame.

State is ``x = (I_d, I_q)`` in amperes; the single control input is the
inverter voltage angle ``delta`` in radians.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class PlantParams:
    """Physical constants of the inverter and its RL filter.

    Defaults are the 1.5 kVA / 120 V test system used throughout the package.
    """

    R: float = 1.3  # ohm
    L: float = 3.5e-3  # henry
    V: float = 120.0  # inverter voltage magnitude, volt
    E: float = 120.0  # grid voltage magnitude, volt
    omega_nom: float = 2.0 * math.pi * 60.0  # rad/s
    I_max: float = 5.0  # ampere
    V_nom: float = 120.0  # volt
    S_nom: float = 1500.0  # volt-ampere
    I_nom: float = 4.17  # ampere

    def __post_init__(self):
        for name in ("R", "L", "V", "I_max", "omega_nom"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        if not math.isclose(self.V, self.E, rel_tol=1e-12):
            raise ValueError(f"the dq model requires V == E (got V={self.V}, E={self.E})")

    @classmethod
    def from_dict(cls, data: dict) -> "PlantParams":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown plant parameter(s): {', '.join(sorted(unknown))}")
        return cls(**{k: float(v) for k, v in data.items()})

    @classmethod
    def from_json(cls, path: str | Path) -> "PlantParams":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class LinearPlant:
    """Small-angle model ``xdot = A x + B u``."""

    A: np.ndarray  # (2, 2)
    B: np.ndarray  # (2,)

    def __post_init__(self):
        A = np.array(self.A, dtype=float).reshape(2, 2)
        B = np.array(self.B, dtype=float).reshape(2)
        A.flags.writeable = False
        B.flags.writeable = False
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)


@dataclass(frozen=True)
class Reference:
    """Feasible steady-state pair ``(x_star, u_star)``."""

    x_star: np.ndarray
    u_star: float

    def __post_init__(self):
        x = np.array(self.x_star, dtype=float).reshape(2)
        x.flags.writeable = False
        object.__setattr__(self, "x_star", x)
        object.__setattr__(self, "u_star", float(self.u_star))


def rotation_matrix(params: PlantParams) -> np.ndarray:
    """State matrix ``[[-R/L, w], [-w, -R/L]]`` shared by both models."""
    a = -params.R / params.L
    w = params.omega_nom
    return np.array([[a, w], [-w, a]])


def inv2(M: np.ndarray) -> np.ndarray:
    """Closed-form inverse of a 2x2 matrix."""
    (a, b), (c, d) = np.asarray(M, dtype=float)
    det = a * d - b * c
    if det == 0.0 or not math.isfinite(det):
        raise np.linalg.LinAlgError("singular 2x2 matrix")
    return np.array([[d, -b], [-c, a]]) / det


def build_linear_plant(params: PlantParams) -> LinearPlant:
    if params.R <= 0 or params.L <= 0 or params.V <= 0:
        raise ValueError("R, L and V must be positive")
    return LinearPlant(A=rotation_matrix(params), B=np.array([0.0, params.V / params.L]))


def linear_deriv(x, u: float, plant: LinearPlant) -> np.ndarray:
    return plant.A @ np.asarray(x, dtype=float) + plant.B * u


def nonlinear_deriv(x, delta: float, params: PlantParams) -> np.ndarray:
    """Full dq dynamics with ``E_dq = (E, 0)`` and the frame locked to ``omega_nom``."""
    x = np.asarray(x, dtype=float)
    drive = np.array([params.V * math.cos(delta) - params.E, params.V * math.sin(delta)])
    return rotation_matrix(params) @ x + drive / params.L


def power_output(x, delta: float, V: float) -> tuple[float, float]:
    """Active and reactive power (W, var) delivered by the inverter."""
    i_d, i_q = np.asarray(x, dtype=float)
    c, s = math.cos(delta), math.sin(delta)
    P = 1.5 * (V * c * i_d + V * s * i_q)
    Q = 1.5 * (V * s * i_d - V * c * i_q)
    return P, Q


def steady_state_direction(plant: LinearPlant) -> np.ndarray:
    """``-A^{-1} B``: the equilibrium current per radian of input."""
    return -inv2(plant.A) @ plant.B


def solve_linear_reference(magnitude: float, plant: LinearPlant, I_max: float | None = None) -> Reference:
    """Equilibrium of the linear plant with ``|x_star| = |magnitude|``.

    A negative magnitude flips the sign of ``u_star`` (and so of ``x_star``).
    """
    if I_max is not None and abs(magnitude) > I_max * (1 + 1e-12):
        raise ValueError(f"|magnitude| = {abs(magnitude)} exceeds I_max = {I_max}")
    d = steady_state_direction(plant)
    norm = math.hypot(d[0], d[1])
    if norm == 0.0:
        raise ValueError("A^{-1} B is zero; no nonzero reference exists")
    u_star = magnitude / norm
    return Reference(x_star=d * u_star, u_star=u_star)


def nonlinear_steady_state(delta: float, params: PlantParams) -> np.ndarray:
    drive = np.array([params.V * math.cos(delta) - params.E, params.V * math.sin(delta)]) / params.L
    return -inv2(rotation_matrix(params)) @ drive


def solve_nonlinear_reference(
    magnitude: float,
    params: PlantParams,
    tol: float = 1e-9,
    max_iter: int = 200,
) -> Reference:
    """Equilibrium of the nonlinear plant with ``|x_star| = magnitude``.

    Bisects on ``delta`` in ``[0, pi/2]``, where the steady-state current
    magnitude is monotone increasing.
    """
    if magnitude < 0:
        raise ValueError("magnitude must be non-negative")
    if magnitude == 0:
        return Reference(x_star=np.zeros(2), u_star=0.0)

    def excess(delta):
        x = nonlinear_steady_state(delta, params)
        return math.hypot(x[0], x[1]) - magnitude

    lo, hi = 0.0, math.pi / 2
    if excess(hi) < 0:
        raise ValueError(f"magnitude {magnitude} A is not reachable for delta in [0, pi/2]")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        e = excess(mid)
        if abs(e) <= tol:
            break
        if e < 0:
            lo = mid
        else:
            hi = mid
    else:
        raise RuntimeError("nonlinear reference bisection did not converge")
    return Reference(x_star=nonlinear_steady_state(mid, params), u_star=mid)
