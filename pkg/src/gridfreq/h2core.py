"""H2 norms: closed forms for the quartic embedding, a gramian oracle, and modal sums."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_continuous_lyapunov, solve_sylvester

from .errors import NumericalError, ValidationError
from .lti import ControllerSpec, ModalDecomposition, RationalTF, StateSpace, hurwitz, modal_closed_loop, realize

KRON_MAX_STATES = 50
RESIDUAL_RTOL = 1e-8
UNSTABLE_TOL = 1e-12


class H2Reason(enum.Enum):
    FINITE = "Finite"
    NONZERO_FEEDTHROUGH = "NonzeroFeedthrough"
    UNSTABLE = "Unstable"


@dataclass(frozen=True)
class H2Result:
    """Squared H2 norm, or ``inf`` with the reason it is unbounded."""

    value: float
    reason: H2Reason = H2Reason.FINITE
    per_mode: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if (self.reason is H2Reason.FINITE) != math.isfinite(self.value):
            raise ValueError("value must be finite exactly when reason is FINITE")

    @property
    def is_finite(self) -> bool:
        return self.reason is H2Reason.FINITE

    @classmethod
    def infinite(cls, reason: H2Reason, per_mode=()) -> "H2Result":
        return cls(math.inf, reason, tuple(per_mode))

    def __float__(self):
        return float(self.value)


@dataclass(frozen=True)
class NoiseWeights:
    """Power-fluctuation and measurement-noise intensities.

    A zero weight switches that channel off.
    """

    kappa_p: float
    kappa_w: float

    def __post_init__(self):
        if not (0 <= self.kappa_p < math.inf and 0 <= self.kappa_w < math.inf):
            raise ValidationError("noise weights must be finite and nonnegative")


def h2_closed_form(h: RationalTF) -> H2Result:
    """Squared H2 norm from the embedding coefficients."""
    if h.b4 != 0 or h.deriv != 0:
        return H2Result.infinite(H2Reason.NONZERO_FEEDTHROUGH)
    r = h.order
    if r == 0:
        return H2Result(0.0)
    if not hurwitz(h.den_poly()):
        return H2Result.infinite(H2Reason.UNSTABLE)
    a0, a1, a2, a3 = h.a
    b0, b1, b2, b3 = h.b
    if r == 1:
        v = b3 * b3 / (2 * a3)
    elif r == 2:
        v = (b2 * b2 + a2 * b3 * b3) / (2 * a2 * a3)
    elif r == 3:
        v = (a3 * b1 * b1 + a1 * b2 * b2 + a1 * a2 * b3 * b3 - 2 * a1 * b1 * b3) / (2 * a1 * (a2 * a3 - a1))
    else:
        z0 = a2 * a3 - a1
        z1 = a0 * a3
        z2 = a0 * a1
        z3 = a0 * a1 * a2 - a0 * a0 * a3
        z4 = -2 * a0 * (a1 * b1 * b3 + a3 * b0 * b2)
        num = z0 * b0 * b0 + z1 * b1 * b1 + z2 * b2 * b2 + z3 * b3 * b3 + z4
        v = num / (2 * a0 * (a1 * a2 * a3 - a1 * a1 - a0 * a3 * a3))
    return H2Result(max(float(v), 0.0))


def _solve_sylvester(A1, A2, Q) -> np.ndarray:
    """Solve ``A1 X + X A2^T = Q``."""
    n1, n2 = A1.shape[0], A2.shape[0]
    if n1 * n2 <= KRON_MAX_STATES ** 2 and max(n1, n2) <= KRON_MAX_STATES:
        K = np.kron(np.eye(n2), A1) + np.kron(A2, np.eye(n1))
        try:
            X = np.linalg.solve(K, Q.reshape(-1, order="F")).reshape(n1, n2, order="F")
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"Sylvester system is singular: {exc}") from None
    elif A1 is A2:
        X = solve_continuous_lyapunov(A1, Q)
    else:
        X = solve_sylvester(A1, A2.T, Q)
    res = np.linalg.norm(A1 @ X + X @ A2.T - Q)
    scale = (np.linalg.norm(A1) + np.linalg.norm(A2)) * np.linalg.norm(X) + np.linalg.norm(Q)
    if not np.isfinite(res) or res > RESIDUAL_RTOL * scale:
        raise NumericalError(f"Sylvester residual {res:.3e} exceeds tolerance (scale {scale:.3e})")
    return X


def _is_hurwitz_matrix(A) -> bool:
    if A.shape[0] == 0:
        return True
    return bool(np.max(np.linalg.eigvals(A).real) < -UNSTABLE_TOL)


def h2_lyapunov_oracle(ss: StateSpace) -> H2Result:
    """Squared H2 norm ``trace(C X C^T)`` with ``A X + X A^T = -B B^T``."""
    if np.any(ss.D != 0):
        return H2Result.infinite(H2Reason.NONZERO_FEEDTHROUGH)
    if ss.n_states == 0:
        return H2Result(0.0)
    if not _is_hurwitz_matrix(ss.A):
        return H2Result.infinite(H2Reason.UNSTABLE)
    X = _solve_sylvester(ss.A, ss.A, -ss.B @ ss.B.T)
    return H2Result(max(float(np.trace(ss.C @ X @ ss.C.T)), 0.0))


def cross_inner_product(h1: RationalTF, h2: RationalTF) -> float:
    """``integral_0^inf h1(t) h2(t) dt`` for stable, strictly proper h1, h2."""
    if not (h1.is_strictly_proper and h2.is_strictly_proper):
        raise ValueError("cross inner product needs zero feedthrough")
    if h1.order == 0 or h2.order == 0:
        return 0.0
    if not (h1.is_stable and h2.is_stable):
        raise ValueError("cross inner product needs stable transfer functions")
    s1, s2 = realize(h1), realize(h2)
    X = _solve_sylvester(s1.A, s2.A, -s1.B @ s2.B.T)
    return float((s1.C @ X @ s2.C.T)[0, 0])


def _weighted(kappa: float, r: H2Result) -> H2Result:
    if kappa == 0:
        return H2Result(0.0)
    if not r.is_finite:
        return r
    return H2Result(kappa * kappa * r.value)


def frequency_variance(decomp: ModalDecomposition, g: RationalTF, c: ControllerSpec, w: NoiseWeights) -> H2Result:
    """Squared H2 norm from weighted power and measurement noise to bus frequencies.

    The modal sum is ``sum_k Gamma_kk (kp^2 |h_p,k|^2 + kw^2 |h_w,k|^2)``; a
    channel with zero weight contributes nothing even when its norm is infinite.
    ``per_mode`` holds the weighted contribution of each mode.
    """
    gamma = np.diag(decomp.Gamma)
    per_mode = []
    reason = None
    for k, lam in enumerate(decomp.lambdas):
        hp, hw = modal_closed_loop(g, c, max(float(lam), 0.0))
        terms = (_weighted(w.kappa_p, h2_closed_form(hp)), _weighted(w.kappa_w, h2_closed_form(hw)))
        bad = [t for t in terms if not t.is_finite]
        if bad:
            per_mode.append(math.inf)
            reason = reason or bad[0].reason
        else:
            per_mode.append(float(gamma[k] * (terms[0].value + terms[1].value)))
    if reason is not None:
        return H2Result.infinite(reason, per_mode)
    return H2Result(float(math.fsum(per_mode)), H2Reason.FINITE, tuple(per_mode))
