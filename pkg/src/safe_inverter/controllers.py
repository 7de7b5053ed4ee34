"""Linear state-feedback design for the inverter plant.

Gains are stored as length-2 arrays ``K`` and act as ``u = u* - K (x - x*)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .plant import LinearPlant, PlantParams, Reference, inv2

SAFE_GAIN_MARGIN = 1e-8
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class SynthesisError(RuntimeError):
    """Raised when a gain cannot be synthesized for the given data."""


@dataclass(frozen=True)
class LqrWeights:
    Q: np.ndarray
    R_w: float

    def __post_init__(self):
        Q = np.array(self.Q, dtype=float).reshape(2, 2)
        if not np.allclose(Q, Q.T):
            raise ValueError("Q must be symmetric")
        if np.linalg.eigvalsh(Q).min() < -1e-12:
            raise ValueError("Q must be positive semidefinite")
        if not self.R_w > 0:
            raise ValueError("R_w must be positive")
        Q.flags.writeable = False
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R_w", float(self.R_w))

    @classmethod
    def default(cls, params: PlantParams) -> "LqrWeights":
        """``Q = I`` and ``R_w = V_nom / (10 L)``."""
        return cls(Q=np.eye(2), R_w=params.V_nom / (10.0 * params.L))


@dataclass(frozen=True)
class SafeGainCertificate:
    K: np.ndarray
    lam: float
    eig_max: float  # largest eigenvalue of N + N^T, N = A - B K
    eigvec_residual: float  # |x*^T N - lam x*^T|
    margin: float = SAFE_GAIN_MARGIN

    @property
    def valid(self) -> bool:
        return bool(
            self.eigvec_residual <= 1e-8
            and self.eig_max <= self.lam + 1e-8
            and self.eig_max <= -self.margin
        )


def sym2_eigvals(S: np.ndarray) -> tuple[float, float]:
    """Eigenvalues ``(min, max)`` of a symmetric 2x2 matrix."""
    a, b, d = S[0, 0], 0.5 * (S[0, 1] + S[1, 0]), S[1, 1]
    mean = 0.5 * (a + d)
    rad = math.hypot(0.5 * (a - d), b)
    return float(mean - rad), float(mean + rad)


def closed_loop(plant: LinearPlant, K) -> np.ndarray:
    return plant.A - np.outer(plant.B, np.asarray(K, dtype=float))


def is_hurwitz(M: np.ndarray) -> bool:
    return bool(np.all(np.linalg.eigvals(M).real < 0))


def is_controllable(plant: LinearPlant) -> bool:
    C = np.column_stack([plant.B, plant.A @ plant.B])
    return abs(np.linalg.det(C)) > 1e-12 * max(1.0, np.abs(C).max() ** 2)


def solve_lyapunov2(F: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Symmetric ``P`` with ``F^T P + P F + W = 0`` (2x2, dense 3-unknown solve)."""
    (f11, f12), (f21, f22) = F
    # unknowns (p11, p12, p22)
    M = np.array(
        [
            [2 * f11, 2 * f21, 0.0],
            [f12, f11 + f22, f21],
            [0.0, 2 * f12, 2 * f22],
        ]
    )
    rhs = -np.array([W[0, 0], 0.5 * (W[0, 1] + W[1, 0]), W[1, 1]])
    p11, p12, p22 = np.linalg.solve(M, rhs)
    return np.array([[p11, p12], [p12, p22]])


def riccati_residual(plant: LinearPlant, weights: LqrWeights, P: np.ndarray) -> np.ndarray:
    A, B = plant.A, plant.B.reshape(2, 1)
    return A.T @ P + P @ A - (P @ B @ B.T @ P) / weights.R_w + weights.Q


def lqr_gain(plant: LinearPlant, weights: LqrWeights, tol: float = 1e-10, max_iter: int = 100) -> np.ndarray:
    """Continuous-time LQR gain via Kleinman-Newton iteration.

    Starts from ``K = 0``, so ``A`` itself must be Hurwitz. Raises
    :class:`SynthesisError` for an uncontrollable pair (including ``B = 0``)
    or if the iteration stalls.
    """
    if not is_controllable(plant):
        raise SynthesisError("(A, B) is not controllable; refusing to synthesize LQR gain")
    if not is_hurwitz(plant.A):
        raise SynthesisError("Kleinman iteration needs a Hurwitz A for the K = 0 start")
    A, B = plant.A, plant.B
    K = np.zeros(2)
    scale = max(1.0, np.linalg.norm(weights.Q))
    for _ in range(max_iter):
        F = A - np.outer(B, K)
        W = weights.Q + weights.R_w * np.outer(K, K)
        P = solve_lyapunov2(F, W)
        K = (B @ P) / weights.R_w
        if np.linalg.norm(riccati_residual(plant, weights, P)) <= tol * scale:
            return K
    raise SynthesisError(f"Riccati iteration did not converge in {max_iter} steps")


def safe_gain_from_lambda(plant: LinearPlant, x_star, lam: float) -> np.ndarray:
    """The unique ``K`` making ``x_star`` a left eigenvector of ``A - B K`` with eigenvalue ``lam``."""
    x_star = np.asarray(x_star, dtype=float)
    c = x_star @ plant.B
    if abs(c) <= 1e-300 or abs(c) <= 1e-14 * np.linalg.norm(x_star) * np.linalg.norm(plant.B):
        raise SynthesisError("x*^T B = 0; the lambda parameterization is undefined")
    return (x_star @ plant.A - lam * x_star) / c


def _sym_part_max_eig(plant: LinearPlant, Ks: np.ndarray) -> np.ndarray:
    """Largest eigenvalue of ``N + N^T`` for each row gain of ``Ks``."""
    B = plant.B
    S = plant.A + plant.A.T
    s11 = S[0, 0] - 2 * B[0] * Ks[:, 0]
    s22 = S[1, 1] - 2 * B[1] * Ks[:, 1]
    s12 = S[0, 1] - B[0] * Ks[:, 1] - B[1] * Ks[:, 0]
    return 0.5 * (s11 + s22) + np.hypot(0.5 * (s11 - s22), s12)


def _criteria(plant: LinearPlant, x_star, lam: float) -> tuple[np.ndarray, float]:
    K = safe_gain_from_lambda(plant, x_star, lam)
    N = closed_loop(plant, K)
    return K, sym2_eigvals(N + N.T)[1]


def _feasible(plant, x_star, lam, margin) -> bool:
    _, emax = _criteria(plant, x_star, lam)
    return emax <= lam and emax <= -margin


def certify(plant: LinearPlant, x_star, K, lam: float, margin: float = SAFE_GAIN_MARGIN) -> SafeGainCertificate:
    x_star = np.asarray(x_star, dtype=float)
    N = closed_loop(plant, K)
    resid = float(np.linalg.norm(x_star @ N - lam * x_star))
    return SafeGainCertificate(
        K=np.asarray(K, dtype=float), lam=float(lam), eig_max=sym2_eigvals(N + N.T)[1],
        eigvec_residual=resid, margin=margin,
    )


def synthesize_safe_gain(
    plant: LinearPlant,
    x_star,
    margin: float = SAFE_GAIN_MARGIN,
    grid_size: int = 2001,
    lam_range: tuple[float, float] = (1e-3, 1e7),
) -> SafeGainCertificate:
    """Minimum-norm ``K`` satisfying the safe-and-stable eigen criteria.

    Fixing the left-eigenvector condition makes ``K`` affine in ``lam``, so
    the search is one-dimensional: a log-spaced feasibility scan over
    ``lam in [-lam_range[1], -lam_range[0]]``, bisection of the feasible
    interval's endpoints, then golden-section on ``|K(lam)|``. Both the
    feasible set and the objective are convex in ``lam``.
    """
    x_star = np.asarray(x_star, dtype=float)
    S = plant.A + plant.A.T
    if sym2_eigvals(S)[1] >= 0:
        raise SynthesisError("A + A^T must be negative definite")
    safe_gain_from_lambda(plant, x_star, -1.0)  # validates x*^T B != 0

    lams = -np.geomspace(lam_range[1], lam_range[0], grid_size)  # increasing
    Ks = np.array([safe_gain_from_lambda(plant, x_star, 0.0)]) - np.outer(lams, x_star) / (x_star @ plant.B)
    emax = _sym_part_max_eig(plant, Ks)
    ok = (emax <= lams) & (emax <= -margin)
    if not ok.any():
        raise SynthesisError("no feasible lambda found in the search bracket")

    # feasible set is an interval; take the run with the best objective
    norms = np.where(ok, np.hypot(Ks[:, 0], Ks[:, 1]), np.inf)
    i = int(np.argmin(norms))
    lo_i = hi_i = i
    while lo_i > 0 and ok[lo_i - 1]:
        lo_i -= 1
    while hi_i < len(lams) - 1 and ok[hi_i + 1]:
        hi_i += 1

    def refine(feasible_lam, infeasible_lam):
        a, b = feasible_lam, infeasible_lam
        for _ in range(200):
            mid = 0.5 * (a + b)
            if mid == a or mid == b:
                break
            if _feasible(plant, x_star, mid, margin):
                a = mid
            else:
                b = mid
        return a

    lo = refine(lams[lo_i], lams[lo_i - 1]) if lo_i > 0 else lams[lo_i]
    hi = refine(lams[hi_i], lams[hi_i + 1]) if hi_i < len(lams) - 1 else lams[hi_i]

    def objective(lam):
        return float(np.linalg.norm(safe_gain_from_lambda(plant, x_star, lam)))

    a, b = lo, hi
    c, d = b - _GOLDEN * (b - a), a + _GOLDEN * (b - a)
    fc, fd = objective(c), objective(d)
    for _ in range(200):
        if b - a <= 1e-13 * max(1.0, abs(a)):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = objective(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = objective(d)
    candidates = [lo, hi, 0.5 * (a + b)]
    lam = min(candidates, key=objective)
    if not _feasible(plant, x_star, lam, margin):
        raise SynthesisError("refined lambda left the feasible set")
    cert = certify(plant, x_star, safe_gain_from_lambda(plant, x_star, lam), lam, margin)
    if not cert.valid:
        raise SynthesisError(f"safe gain certificate failed: {cert}")
    return cert


def feedback_law(K, ref: Reference, x) -> float:
    return ref.u_star - float(np.asarray(K) @ (np.asarray(x, dtype=float) - ref.x_star))


def check_eigvec_inequality(M, y, z, tol: float = 1e-9) -> bool:
    """Check ``z^T M z - z^T M y >= 0`` when the hypotheses hold.

    Raises ``ValueError`` if ``|y| <= |z|``, ``M^T y = lam y``,
    ``lam_min(M + M^T) >= lam`` or ``M + M^T >= 0`` fail (up to ``tol``).
    """
    M = np.asarray(M, dtype=float)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    scale = max(np.linalg.norm(M), 1e-300)
    ny, nz = np.linalg.norm(y), np.linalg.norm(z)
    if ny > nz * (1 + tol):
        raise ValueError("need |y| <= |z|")
    emin = sym2_eigvals(M + M.T)[0]
    if emin < -tol * scale:
        raise ValueError("M + M^T must be positive semidefinite")
    if ny > 0:
        lam = float(y @ M @ y) / ny**2
        if np.linalg.norm(M.T @ y - lam * y) > tol * scale * ny:
            raise ValueError("y is not a left eigenvector of M")
        if emin < lam - tol * scale:
            raise ValueError("need lam_min(M + M^T) >= lam")
    gap = float(z @ M @ z - z @ M @ y)
    return gap >= -1e-10 * nz**2 * scale


def check_norm_expansion(w1, w2, zeta, gamma) -> bool:
    """``c1^2 + c2^2 >= -2 (c1 b + c2 d)`` for an orthonormal basis ``{w1, w2}``."""
    zeta, gamma = np.asarray(zeta, float), np.asarray(gamma, float)
    a, b = zeta @ w1, gamma @ w1
    c, d = zeta @ w2, gamma @ w2
    c1, c2 = a - b, c - d
    lhs = c1**2 + c2**2
    rhs = -2.0 * (c1 * b + c2 * d)
    return lhs - rhs >= -1e-12 * max(1.0, zeta @ zeta)
