"""Controller benchmark suites: boundary sweep, random sweep, and the
linear-vs-nonlinear plant comparison."""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .controllers import LqrWeights, SafeGainCertificate, lqr_gain, synthesize_safe_gain
from .laws import CbfFiltered, ControlLaw, LinearFeedback
from .plant import (
    LinearPlant,
    PlantParams,
    Reference,
    build_linear_plant,
    solve_linear_reference,
    solve_nonlinear_reference,
)
from .safety_filter import BarrierConfig
from .sim import BatchResult, SimConfig, simulate, simulate_batch, write_trajectory_csv

DEFAULT_SEED = 20240601
CONTROLLER_ORDER = ("safe-k", "cbf", "lqr")


@dataclass
class Design:
    """Gains and laws synthesized for one set of plant parameters."""

    params: PlantParams
    plant: LinearPlant
    weights: LqrWeights
    K_lqr: np.ndarray
    safe: SafeGainCertificate
    reference: Reference
    barrier: BarrierConfig
    controllers: dict[str, ControlLaw]


def design_controllers(params: PlantParams | None = None, alpha: float = 1000.0) -> Design:
    """LQR, minimum-norm safe gain (at the ``+I_max`` reference) and the filtered LQR.

    Every linear reference is parallel to ``-A^{-1} B`` and the safe gain only
    depends on the direction of ``x*``, so one safe gain serves all references.
    """
    params = params or PlantParams()
    plant = build_linear_plant(params)
    weights = LqrWeights.default(params)
    K_lqr = lqr_gain(plant, weights)
    ref = solve_linear_reference(params.I_max, plant, params.I_max)
    safe = synthesize_safe_gain(plant, ref.x_star)
    barrier = BarrierConfig(I_max=params.I_max, alpha=alpha)
    lqr = LinearFeedback(K_lqr, name="lqr")
    controllers = {
        "safe-k": LinearFeedback(safe.K, name="safe-k"),
        "cbf": CbfFiltered(lqr, plant, barrier, name="cbf"),
        "lqr": lqr,
    }
    return Design(params, plant, weights, K_lqr, safe, ref, barrier, controllers)


@dataclass
class CaseRecord:
    case: int
    controller: str
    plant: str
    x0: tuple[float, float]
    x_star: tuple[float, float]
    u_star: float
    cost: float
    unsafe: bool
    min_h: float
    max_current: float
    overshoot: float  # max(0, max_current - I_max), ampere
    terminal_error: float  # |x(t_end) - x*|, ampere
    filter_activations: int
    relaxed_count: int


@dataclass
class ExperimentReport:
    name: str
    records: list[CaseRecord]
    seed: int | None = None
    config: dict = field(default_factory=dict)

    def by_controller(self) -> dict[str, list[CaseRecord]]:
        groups: dict[str, list[CaseRecord]] = {}
        for rec in sorted(self.records, key=lambda r: (r.case, r.controller)):
            groups.setdefault(rec.controller, []).append(rec)
        return groups

    def mean_cost(self, controller: str) -> float:
        recs = self.by_controller()[controller]
        return math.fsum(r.cost for r in recs) / len(recs)

    def unsafe_count(self, controller: str) -> int:
        return sum(r.unsafe for r in self.by_controller()[controller])

    def aggregates(self) -> dict:
        out = {}
        for name, recs in self.by_controller().items():
            out[name] = {
                "cases": len(recs),
                "mean_cost": self.mean_cost(name),
                "unsafe_count": self.unsafe_count(name),
                "max_overshoot": max(r.overshoot for r in recs),
                "max_terminal_error": max(r.terminal_error for r in recs),
                "filter_activations": sum(r.filter_activations for r in recs),
                "relaxed_count": sum(r.relaxed_count for r in recs),
            }
        return out

    def summary(self) -> dict:
        return {"experiment": self.name, "seed": self.seed, "config": self.config, "aggregates": self.aggregates()}

    def write(self, out_dir: str | Path) -> Path:
        """Write ``summary.json`` and ``cases.csv`` under ``out_dir/<name>``."""
        target = Path(out_dir) / self.name
        target.mkdir(parents=True, exist_ok=True)
        with open(target / "summary.json", "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        records = sorted(self.records, key=lambda r: (r.case, r.controller))
        with open(target / "cases.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(
                ["case", "controller", "plant", "x0_d", "x0_q", "x_star_d", "x_star_q", "u_star", "cost",
                 "unsafe", "min_h", "max_current", "overshoot", "terminal_error", "filter_activations",
                 "relaxed_count"]
            )
            for r in records:
                w.writerow(
                    [r.case, r.controller, r.plant, *(f"{v:.9g}" for v in (*r.x0, *r.x_star, r.u_star, r.cost)),
                     int(r.unsafe), *(f"{v:.9g}" for v in (r.min_h, r.max_current, r.overshoot, r.terminal_error)),
                     r.filter_activations, r.relaxed_count]
                )
        return target


def linspace(a: float, b: float, n: int) -> np.ndarray:
    """``n`` evenly spaced values from ``a`` to ``b`` inclusive."""
    if n < 2:
        raise ValueError("linspace needs n >= 2")
    return np.array([a + i / (n - 1) * (b - a) for i in range(n)])


def boundary_initial_conditions(I_max: float, n: int = 100) -> np.ndarray:
    phi = linspace(0.0, 2 * math.pi - 2 * math.pi / n, n)
    return np.column_stack([I_max * np.sin(phi), I_max * np.cos(phi)])


def _run_chunked(law, x0, xs, us, cfg, params, weights, threads: int) -> BatchResult:
    n = len(x0)
    threads = max(1, min(threads or 1, n))
    if threads == 1:
        return simulate_batch(law, x0, xs, us, cfg, params, weights)
    bounds = np.linspace(0, n, threads + 1).astype(int)
    chunks = [(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(
            pool.map(lambda c: simulate_batch(law, x0[c[0]:c[1]], xs[c[0]:c[1]], us[c[0]:c[1]], cfg, params, weights),
                     chunks)
        )
    cat = lambda attr: np.concatenate([getattr(p, attr) for p in parts])
    return BatchResult(
        cost=cat("cost"), min_h=cat("min_h"), max_current=cat("max_current"), final_state=cat("final_state"),
        filter_activations=cat("filter_activations"), relaxed_count=cat("relaxed_count"), unsafe=cat("unsafe"),
    )


def _records(name, plant_kind, x0, xs, us, res: BatchResult, I_max) -> list[CaseRecord]:
    out = []
    for i in range(len(x0)):
        err = res.final_state[i] - xs[i]
        out.append(
            CaseRecord(
                case=i, controller=name, plant=plant_kind,
                x0=(float(x0[i, 0]), float(x0[i, 1])), x_star=(float(xs[i, 0]), float(xs[i, 1])),
                u_star=float(us[i]), cost=float(res.cost[i]), unsafe=bool(res.unsafe[i]),
                min_h=float(res.min_h[i]), max_current=float(res.max_current[i]),
                overshoot=max(0.0, float(res.max_current[i]) - I_max),
                terminal_error=float(math.hypot(err[0], err[1])),
                filter_activations=int(res.filter_activations[i]), relaxed_count=int(res.relaxed_count[i]),
            )
        )
    return out


def _config_echo(params: PlantParams, cfg: SimConfig, design: Design, **extra) -> dict:
    return {
        "params": params.to_dict(),
        "dt": cfg.dt,
        "t_end": cfg.t_end,
        "control_hold": cfg.control_hold,
        "alpha": design.barrier.alpha,
        "K_lqr": design.K_lqr.tolist(),
        "K_safe": design.safe.K.tolist(),
        **extra,
    }


def _dump(out_dir, name, design, cases, cfg, plant_kind, decimate):
    """Re-simulate the given cases one at a time and write their trajectories."""
    target = Path(out_dir) / name / "trajectories"
    target.mkdir(parents=True, exist_ok=True)
    for ctrl, i, x0, ref in cases:
        traj = simulate(plant_kind, design.controllers[ctrl], x0, ref, cfg, design.params, design.weights)
        write_trajectory_csv(traj, target / f"{ctrl}_{plant_kind}_{i:04d}.csv", decimate)


def _sweep(name, design, x0, xs, us, cfg, threads, seed=None, dump_dir=None, decimate=1, **extra):
    params = design.params
    cfg = SimConfig(dt=cfg.dt, t_end=cfg.t_end, plant_kind="linear", control_hold=cfg.control_hold)
    records = []
    for ctrl in CONTROLLER_ORDER:
        res = _run_chunked(design.controllers[ctrl], x0, xs, us, cfg, params, design.weights, threads)
        records += _records(ctrl, "linear", x0, xs, us, res, params.I_max)
    report = ExperimentReport(name, records, seed, _config_echo(params, cfg, design, cases=len(x0), **extra))
    if dump_dir is not None:
        cases = [(c, i, x0[i], Reference(xs[i], us[i])) for c in CONTROLLER_ORDER for i in range(len(x0))]
        _dump(dump_dir, name, design, cases, cfg, "linear", decimate)
    return report


def boundary_sweep(
    design: Design | None = None,
    cfg: SimConfig | None = None,
    threads: int = 1,
    n: int = 100,
    dump_dir=None,
    decimate: int = 1,
) -> ExperimentReport:
    """All controllers from ``n`` evenly spaced points on ``|x| = I_max`` to the ``+I_max`` reference."""
    design = design or design_controllers()
    cfg = cfg or SimConfig()
    x0 = boundary_initial_conditions(design.params.I_max, n)
    xs = np.tile(design.reference.x_star, (n, 1))
    us = np.full(n, design.reference.u_star)
    return _sweep("boundary", design, x0, xs, us, cfg, threads, dump_dir=dump_dir, decimate=decimate)


def sample_random_cases(plant: LinearPlant, I_max: float, n: int, seed: int):
    """Draw ``(x0, x_star, u_star)`` for the random sweep.

    Uses numpy's PCG64 stream seeded with ``seed``; draws reference
    magnitudes, then radii, then angles, each as one length-``n`` block.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    mags = rng.uniform(-I_max, I_max, n)
    r0 = rng.uniform(0.0, I_max, n)
    phi0 = rng.uniform(0.0, 2 * math.pi, n)
    refs = [solve_linear_reference(m, plant, I_max) for m in mags]
    xs = np.array([r.x_star for r in refs])
    us = np.array([r.u_star for r in refs])
    x0 = np.column_stack([r0 * np.cos(phi0), r0 * np.sin(phi0)])
    return x0, xs, us


def random_sweep(
    design: Design | None = None,
    n: int = 1000,
    seed: int = DEFAULT_SEED,
    cfg: SimConfig | None = None,
    threads: int = 1,
    dump_dir=None,
    decimate: int = 1,
) -> ExperimentReport:
    design = design or design_controllers()
    cfg = cfg or SimConfig()
    x0, xs, us = sample_random_cases(design.plant, design.params.I_max, n, seed)
    return _sweep("random", design, x0, xs, us, cfg, threads, seed=seed, dump_dir=dump_dir, decimate=decimate)


def nonlinear_compare(
    design: Design | None = None,
    cfg: SimConfig | None = None,
    threads: int = 1,
    n: int = 100,
    dump_dir=None,
    decimate: int = 1,
) -> ExperimentReport:
    """Filtered LQR (designed on the linear model) driving both plants.

    The linear plant tracks the linear ``+I_max`` reference; the nonlinear
    plant tracks its own equilibrium of the same magnitude.
    """
    design = design or design_controllers()
    cfg = cfg or SimConfig()
    params = design.params
    law = design.controllers["cbf"]
    x0 = boundary_initial_conditions(params.I_max, n)
    refs = {"linear": design.reference, "nonlinear": solve_nonlinear_reference(params.I_max, params)}
    records = []
    for kind, ref in refs.items():
        kcfg = SimConfig(dt=cfg.dt, t_end=cfg.t_end, plant_kind=kind, control_hold=cfg.control_hold)
        xs = np.tile(ref.x_star, (n, 1))
        us = np.full(n, ref.u_star)
        res = _run_chunked(law, x0, xs, us, kcfg, params, design.weights, threads)
        records += _records(f"cbf-{kind}", kind, x0, xs, us, res, params.I_max)
        if dump_dir is not None:
            _dump(dump_dir, "nonlinear", design, [("cbf", i, x0[i], ref) for i in range(n)], kcfg, kind, decimate)
    echo = _config_echo(params, cfg, design, cases=n,
                        nonlinear_reference=[*refs["nonlinear"].x_star.tolist(), refs["nonlinear"].u_star])
    return ExperimentReport("nonlinear", records, None, echo)


def default_threads() -> int:
    return os.cpu_count() or 1


__all__ = [
    "CaseRecord",
    "Design",
    "ExperimentReport",
    "boundary_sweep",
    "design_controllers",
    "linspace",
    "nonlinear_compare",
    "random_sweep",
    "sample_random_cases",
]
