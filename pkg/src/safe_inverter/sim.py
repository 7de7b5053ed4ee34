"""Fixed-step RK4 simulation of the inverter under a feedback law.

All simulations run batched: ``n`` independent cases advance together, one
row per case. Arithmetic is componentwise, so a case's trajectory is
bit-identical whether it is simulated alone or inside any batch.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .controllers import LqrWeights
from .laws import ControlLaw
from .plant import PlantParams, Reference, build_linear_plant

COST_SCALE = 1000.0
UNSAFE_REL_TOL = 1e-6


class SimulationError(RuntimeError):
    """Raised when the state becomes non-finite."""

    def __init__(self, step: int, cases=None):
        self.step = step
        self.cases = cases
        where = f" (cases {list(cases)})" if cases is not None else ""
        super().__init__(f"non-finite state at step {step}{where}")


@dataclass(frozen=True)
class SimConfig:
    """Integration settings.

    ``control_hold`` selects how the law is sampled: ``"stage"`` re-evaluates
    it at every RK4 stage (continuous-time feedback, the default), ``"zoh"``
    holds the value computed at the start of each step.
    """

    dt: float = 10e-6
    t_end: float = 50e-3
    plant_kind: str = "linear"
    control_hold: str = "stage"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_end >= self.dt:
            raise ValueError("t_end must be at least dt")
        if self.plant_kind not in ("linear", "nonlinear"):
            raise ValueError(f"plant_kind must be 'linear' or 'nonlinear', got {self.plant_kind!r}")
        if self.control_hold not in ("stage", "zoh"):
            raise ValueError(f"control_hold must be 'stage' or 'zoh', got {self.control_hold!r}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass
class BatchResult:
    cost: np.ndarray
    min_h: np.ndarray
    max_current: np.ndarray
    final_state: np.ndarray
    filter_activations: np.ndarray
    relaxed_count: np.ndarray
    unsafe: np.ndarray
    # full-resolution records, present only when requested
    states: np.ndarray | None = None  # (n_steps + 1, n, 2)
    inputs: np.ndarray | None = None  # (n_steps + 1, n)
    active: np.ndarray | None = None  # (n_steps + 1, n)


@dataclass
class Trajectory:
    """One simulated case.

    ``inputs[k]`` and ``filter_active[k]`` are the law's output at
    ``states[k]``; the last entry is evaluated but never applied, and the
    cost only sums over the applied samples.
    """

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    h_values: np.ndarray
    filter_active: np.ndarray
    cost: float
    min_h: float
    max_current: float
    unsafe: bool
    relaxed_count: int = 0
    dt: float = field(default=10e-6, repr=False)


def _derivative(kind: str, params: PlantParams):
    plant = build_linear_plant(params)
    (a11, a12), (a21, a22) = plant.A
    b1, b2 = plant.B
    if kind == "linear":
        def f(x, u):
            xd, xq = x[:, 0], x[:, 1]
            out = np.empty_like(x)
            out[:, 0] = a11 * xd + a12 * xq + b1 * u
            out[:, 1] = a21 * xd + a22 * xq + b2 * u
            return out
    else:
        V, E, L = params.V, params.E, params.L

        def f(x, u):
            xd, xq = x[:, 0], x[:, 1]
            out = np.empty_like(x)
            out[:, 0] = a11 * xd + a12 * xq + (V * np.cos(u) - E) / L
            out[:, 1] = a21 * xd + a22 * xq + V * np.sin(u) / L
            return out
    return f


def simulate_batch(
    law: ControlLaw,
    x0,
    x_star,
    u_star,
    cfg: SimConfig,
    params: PlantParams | None = None,
    weights: LqrWeights | None = None,
    record: bool = False,
) -> BatchResult:
    """Simulate ``n`` cases at once.

    ``x0`` and ``x_star`` are ``(n, 2)`` arrays (or a single 2-vector),
    ``u_star`` is ``(n,)``.
    """
    params = params or PlantParams()
    weights = weights or LqrWeights.default(params)
    x = np.array(x0, dtype=float).reshape(-1, 2)
    n = len(x)
    xs = np.broadcast_to(np.asarray(x_star, dtype=float).reshape(-1, 2), (n, 2)).copy()
    us = np.broadcast_to(np.asarray(u_star, dtype=float).reshape(-1), (n,)).copy()
    if not np.isfinite(x).all():
        raise SimulationError(0, np.flatnonzero(~np.isfinite(x).all(axis=1)))

    f = _derivative(cfg.plant_kind, params)
    dt, steps = cfg.dt, cfg.n_steps
    (q11, q12), (q21, q22) = weights.Q
    r_w = weights.R_w
    i2 = params.I_max**2

    cost = np.zeros(n)
    activations = np.zeros(n, dtype=np.int64)
    relaxed_count = np.zeros(n, dtype=np.int64)
    sq = x[:, 0] * x[:, 0] + x[:, 1] * x[:, 1]
    max_sq = sq.copy()
    min_h = i2 - sq
    if record:
        states = np.empty((steps + 1, n, 2))
        inputs = np.empty((steps + 1, n))
        active_rec = np.empty((steps + 1, n), dtype=bool)

    stage_control = cfg.control_hold == "stage"
    # overflow is caught by the finiteness check below
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(steps + 1):
            u, active, relaxed = law(x, xs, us)
            if record:
                states[k] = x
                inputs[k] = u
                active_rec[k] = active
            if k == steps:
                break
            activations += active
            relaxed_count += relaxed
            ed, eq = x[:, 0] - xs[:, 0], x[:, 1] - xs[:, 1]
            du = u - us
            cost += COST_SCALE * dt * (q11 * ed * ed + (q12 + q21) * ed * eq + q22 * eq * eq + r_w * du * du)

            k1 = f(x, u)
            x2 = x + (0.5 * dt) * k1
            k2 = f(x2, law(x2, xs, us)[0] if stage_control else u)
            x3 = x + (0.5 * dt) * k2
            k3 = f(x3, law(x3, xs, us)[0] if stage_control else u)
            x4 = x + dt * k3
            k4 = f(x4, law(x4, xs, us)[0] if stage_control else u)
            x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

            finite = np.isfinite(x).all(axis=1)
            if not finite.all():
                raise SimulationError(k + 1, np.flatnonzero(~finite))
            sq = x[:, 0] * x[:, 0] + x[:, 1] * x[:, 1]
            np.maximum(max_sq, sq, out=max_sq)
            np.minimum(min_h, i2 - sq, out=min_h)

    max_current = np.sqrt(max_sq)
    return BatchResult(
        cost=cost,
        min_h=min_h,
        max_current=max_current,
        final_state=x,
        filter_activations=activations,
        relaxed_count=relaxed_count,
        unsafe=max_current > params.I_max * (1 + UNSAFE_REL_TOL),
        states=states if record else None,
        inputs=inputs if record else None,
        active=active_rec if record else None,
    )


def simulate(
    plant_kind: str,
    controller: ControlLaw,
    x0,
    ref: Reference,
    cfg: SimConfig | None = None,
    params: PlantParams | None = None,
    weights: LqrWeights | None = None,
) -> Trajectory:
    """Simulate a single case and keep the full-resolution record."""
    cfg = cfg or SimConfig()
    if cfg.plant_kind != plant_kind:
        cfg = SimConfig(dt=cfg.dt, t_end=cfg.t_end, plant_kind=plant_kind, control_hold=cfg.control_hold)
    params = params or PlantParams()
    res = simulate_batch(controller, x0, ref.x_star, ref.u_star, cfg, params, weights, record=True)
    states = res.states[:, 0, :]
    return Trajectory(
        times=np.arange(cfg.n_steps + 1) * cfg.dt,
        states=states,
        inputs=res.inputs[:, 0],
        h_values=params.I_max**2 - np.einsum("ij,ij->i", states, states),
        filter_active=res.active[:, 0],
        cost=float(res.cost[0]),
        min_h=float(res.min_h[0]),
        max_current=float(res.max_current[0]),
        unsafe=bool(res.unsafe[0]),
        relaxed_count=int(res.relaxed_count[0]),
        dt=cfg.dt,
    )


def trajectory_cost(traj: Trajectory, weights: LqrWeights, ref: Reference) -> float:
    """``1000 * sum dt (x~' Q x~ + R u~^2)`` over the applied input samples."""
    x_err = traj.states[:-1] - ref.x_star
    u_err = traj.inputs[:-1] - ref.u_star
    stage = np.einsum("ti,ij,tj->t", x_err, weights.Q, x_err) + weights.R_w * u_err**2
    return COST_SCALE * traj.dt * float(stage.sum())


def write_trajectory_csv(traj: Trajectory, path: str | Path, decimate: int = 1) -> None:
    if decimate < 1:
        raise ValueError("decimate must be a positive integer")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "i_d", "i_q", "delta", "h", "filter_active"])
        for k in range(0, len(traj.times), decimate):
            w.writerow(
                [
                    f"{traj.times[k]:.9g}",
                    f"{traj.states[k, 0]:.9g}",
                    f"{traj.states[k, 1]:.9g}",
                    f"{traj.inputs[k]:.9g}",
                    f"{traj.h_values[k]:.9g}",
                    int(traj.filter_active[k]),
                ]
            )
