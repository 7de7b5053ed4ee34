"""Control laws evaluated on batches of states.

Every law maps ``(x, x_star, u_star)`` with shapes ``(n, 2)``, ``(n, 2)``,
``(n,)`` to ``(u, active, relaxed)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .plant import LinearPlant
from .safety_filter import BarrierConfig, filter_batch


@dataclass(frozen=True)
class LinearFeedback:
    """``u = u* - K (x - x*)``; used for both the LQR and the safe gain."""

    K: np.ndarray
    name: str = "linear"

    def __post_init__(self):
        K = np.array(self.K, dtype=float).reshape(2)
        K.flags.writeable = False
        object.__setattr__(self, "K", K)

    def nominal(self, x, x_star, u_star):
        k1, k2 = self.K
        return u_star - (k1 * (x[:, 0] - x_star[:, 0]) + k2 * (x[:, 1] - x_star[:, 1]))

    def __call__(self, x, x_star, u_star):
        u = self.nominal(x, x_star, u_star)
        flags = np.zeros(len(u), bool)
        return u, flags, flags


@dataclass(frozen=True)
class CbfFiltered:
    """A linear nominal law passed through the closed-form safety filter."""

    nominal: LinearFeedback
    plant: LinearPlant
    barrier: BarrierConfig
    name: str = "cbf"

    def __call__(self, x, x_star, u_star):
        u_nom = self.nominal.nominal(x, x_star, u_star)
        return filter_batch(u_nom, x, x_star, self.plant, self.barrier)


ControlLaw = LinearFeedback | CbfFiltered
