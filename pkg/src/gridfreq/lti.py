"""Transfer functions, controllers, modal closed loops and full state-space models.

Every scalar transfer function handled here has order four or less and is
stored in the embedding

    h(s) = (b3 s^3 + b2 s^2 + b1 s + b0) / (s^4 + a3 s^3 + a2 s^2 + a1 s + a0) + b4

where a lower order ``r`` is obtained by zeroing the leading pairs
``(a0, b0), ..., (a_{3-r}, b_{3-r})``; i.e. an order-r denominator is
``s^r + a3 s^(r-1) + ... + a_{4-r}``.  Polynomials passed around internally use
numpy's highest-power-first convention.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy.linalg import expm

from .errors import DegenerateModeError, ValidationError
from .netmodel import NetworkCase, RepresentativeParams, build_laplacian

FLUSH_RTOL = 1e-12
HURWITZ_RTOL = 1e-12
_S = np.array([1.0, 0.0])


def _trim(p) -> np.ndarray:
    p = np.atleast_1d(np.asarray(p, dtype=float))
    nz = np.flatnonzero(p)
    return p[nz[0]:] if nz.size else np.zeros(1)


def _is_zero_poly(p) -> bool:
    return not np.any(np.asarray(p) != 0)


def hurwitz(den: Sequence[float], rtol: float = HURWITZ_RTOL) -> bool:
    """Routh-Hurwitz test for a monic polynomial of degree <= 4 (highest power first).

    Marginal cases (a zero coefficient, or a Hurwitz determinant within
    ``rtol`` of zero relative to its terms) are reported as not stable.
    """
    den = _trim(den)
    den = den / den[0]
    r = len(den) - 1
    if r == 0:
        return True
    c = den[1:]
    # coefficients of different powers of s share no common scale, so positivity
    # is strict; the tolerance applies to the (homogeneous) Hurwitz determinants
    if np.any(c <= 0):
        return False

    def positive(*terms):
        value = sum(terms)
        return bool(value > rtol * max(abs(t) for t in terms))

    if r <= 2:
        return True
    if r == 3:
        p2, p1, p0 = c
        return positive(p2 * p1, -p0)
    if r == 4:
        a3, a2, a1, a0 = c
        return positive(a3 * a2, -a1) and positive(a3 * a2 * a1, -a1 * a1, -a3 * a3 * a0)
    raise ValueError("hurwitz() handles degree <= 4 only")


@dataclass(frozen=True)
class RationalTF:
    """Scalar transfer function in the monic quartic embedding.

    ``a`` and ``b`` are ``(a0, a1, a2, a3)`` and ``(b0, b1, b2, b3)``;
    ``b4`` is the feedthrough.  ``deriv`` carries a pure derivative term
    ``deriv * s`` for improper controllers such as virtual inertia.
    """

    a: tuple = (0.0, 0.0, 0.0, 0.0)
    b: tuple = (0.0, 0.0, 0.0, 0.0)
    b4: float = 0.0
    deriv: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(x) for x in self.a))
        object.__setattr__(self, "b", tuple(float(x) for x in self.b))
        if len(self.a) != 4 or len(self.b) != 4:
            raise ValueError("a and b must each hold four coefficients")

    @property
    def order(self) -> int:
        for j in range(4):
            if self.a[j] != 0 or self.b[j] != 0:
                return 4 - j
        return 0

    @classmethod
    def from_polys(cls, num, den) -> "RationalTF":
        """Build from numerator/denominator polynomials (highest power first).

        Common factors of ``s`` are cancelled exactly, the denominator is made
        monic, and a feedthrough (and at most one derivative term) is split off.
        """
        num = _trim(num)
        den = _trim(den)
        if _is_zero_poly(den):
            raise ZeroDivisionError("zero denominator")
        if _is_zero_poly(num):
            return cls()
        while num[-1] == 0 and den[-1] == 0 and len(den) > 1:
            num = num[:-1] if len(num) > 1 else np.zeros(1)
            den = den[:-1]
        num = num / den[0]
        den = den / den[0]
        r = len(den) - 1
        if r > 4:
            raise ValueError(f"denominator degree {r} exceeds the quartic embedding")
        extra = len(num) - 1 - r
        if extra > 1:
            raise ValueError("numerator degree exceeds denominator degree by more than one")
        if r == 0:
            pad = np.concatenate([np.zeros(2 - len(num)), num])
            return cls(b4=pad[1], deriv=pad[0])
        q, rem = np.polydiv(num, den) if extra >= 0 else (np.zeros(1), num)
        q = np.concatenate([np.zeros(2 - len(q)), q])
        rem = np.concatenate([np.zeros(r - len(rem)), rem]) if len(rem) < r else rem[-r:]
        if not np.any(rem != 0):
            # exact pole/zero cancellation leaves a static gain
            return cls(b4=float(q[1]), deriv=float(q[0]))
        a = [0.0] * 4
        b = [0.0] * 4
        for j in range(r):
            a[4 - r + j] = den[r - j]
            b[4 - r + j] = rem[r - 1 - j]
        a, b = _flush(a, b)
        return cls(tuple(a), tuple(b), b4=float(q[1]), deriv=float(q[0]))

    @classmethod
    def constant(cls, k: float) -> "RationalTF":
        return cls(b4=float(k))

    def den_poly(self) -> np.ndarray:
        r = self.order
        return np.array([1.0] + [self.a[4 - r + j] for j in range(r - 1, -1, -1)])

    def strict_num_poly(self) -> np.ndarray:
        r = self.order
        if r == 0:
            return np.zeros(1)
        return np.array([self.b[4 - r + j] for j in range(r - 1, -1, -1)])

    def to_polys(self) -> tuple[np.ndarray, np.ndarray]:
        den = self.den_poly()
        num = np.polyadd(self.strict_num_poly(), self.b4 * den)
        if self.deriv:
            num = np.polyadd(num, self.deriv * np.polymul(_S, den))
        return _trim(num), den

    def __call__(self, s):
        s = np.asarray(s, dtype=complex)
        num, den = self.to_polys()
        return np.polyval(num, s) / np.polyval(den, s)

    def dc_gain(self) -> float:
        num, den = self.to_polys()
        if den[-1] == 0:
            return math.copysign(math.inf, num[-1]) if num[-1] else math.nan
        return float(num[-1] / den[-1])

    @property
    def is_stable(self) -> bool:
        return hurwitz(self.den_poly())

    @property
    def is_strictly_proper(self) -> bool:
        return self.b4 == 0 and self.deriv == 0

    def __neg__(self) -> "RationalTF":
        return RationalTF(tuple(self.a), tuple(-x for x in self.b), -self.b4, -self.deriv)


def _flush(a, b):
    """Zero leading embedding pairs that are negligible against the rest."""
    a_scale = max(abs(x) for x in a)
    b_scale = max(abs(x) for x in b)
    for j in range(3):
        if a[j] == 0 and b[j] == 0:
            continue
        if abs(a[j]) <= FLUSH_RTOL * a_scale and abs(b[j]) <= FLUSH_RTOL * max(b_scale, 0.0):
            a[j] = b[j] = 0.0
            continue
        break
    return a, b


# ---------------------------------------------------------------------------
# controllers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoControl:
    kind = "none"

    def polys(self):
        return np.zeros(1), np.ones(1)

    def dc_gain(self) -> float:
        return 0.0

    def scaled(self, f: float) -> "NoControl":
        return self

    @property
    def r_r_inv(self) -> float:
        return 0.0


@dataclass(frozen=True)
class Droop:
    r_r_inv: float
    kind = "droop"

    def __post_init__(self):
        if not self.r_r_inv > 0:
            raise ValidationError("droop gain r_r_inv must be positive")

    def polys(self):
        return np.array([-self.r_r_inv]), np.ones(1)

    def dc_gain(self) -> float:
        return -self.r_r_inv

    def scaled(self, f: float) -> "Droop":
        return Droop(self.r_r_inv * f)


@dataclass(frozen=True)
class VirtualInertia:
    m_v: float
    r_r_inv: float
    kind = "vi"

    def __post_init__(self):
        if not self.m_v > 0 or not self.r_r_inv > 0:
            raise ValidationError("virtual inertia needs m_v > 0 and r_r_inv > 0")

    def polys(self):
        return np.array([-self.m_v, -self.r_r_inv]), np.ones(1)

    def dc_gain(self) -> float:
        return -self.r_r_inv

    def scaled(self, f: float) -> "VirtualInertia":
        return VirtualInertia(self.m_v * f, self.r_r_inv * f)


@dataclass(frozen=True)
class IDroop:
    """Dynamic droop ``-(nu s + delta r_r_inv) / (s + delta)``."""

    nu: float
    delta: float
    r_r_inv: float
    kind = "idroop"

    def __post_init__(self):
        if not (self.nu > 0 and self.delta > 0 and self.r_r_inv > 0):
            raise ValidationError("iDroop needs nu > 0, delta > 0 and r_r_inv > 0")

    def polys(self):
        return np.array([-self.nu, -self.delta * self.r_r_inv]), np.array([1.0, self.delta])

    def dc_gain(self) -> float:
        # exact value; evaluating the ratio at s = 0 may round
        return -self.r_r_inv

    def scaled(self, f: float) -> "IDroop":
        return IDroop(self.nu * f, self.delta, self.r_r_inv * f)


ControllerSpec = Union[NoControl, Droop, VirtualInertia, IDroop]


def make_controller(kind: str, r_r_inv: float | None = None, m_v: float | None = None,
                    nu: float | None = None, delta: float | None = None) -> ControllerSpec:
    kind = kind.lower()
    if kind in ("none", "sw"):
        return NoControl()
    if kind in ("droop", "dc"):
        return Droop(r_r_inv)
    if kind == "vi":
        return VirtualInertia(m_v, r_r_inv)
    if kind == "idroop":
        return IDroop(nu, delta, r_r_inv)
    raise ValidationError(f"unknown controller {kind!r}")


def per_bus_controllers(ratings: Sequence[float], c: ControllerSpec) -> list[ControllerSpec]:
    """Scale a representative controller to every bus."""
    return [c.scaled(float(f)) for f in ratings]


def controller_tf(c: ControllerSpec) -> RationalTF:
    return RationalTF.from_polys(*c.polys())


def generator_polys(m: float, d: float, tau: float, r_t_inv: float, turbine_on: bool):
    if not turbine_on:
        return np.ones(1), np.array([m, d])
    return np.array([tau, 1.0]), np.array([m * tau, m + d * tau, d + r_t_inv])


def generator_tf(rep: RepresentativeParams, turbine_on: bool) -> RationalTF:
    """Swing (``1/(ms+d)``) or swing-plus-turbine representative generator."""
    return RationalTF.from_polys(*generator_polys(rep.m, rep.d, rep.tau, rep.r_t_inv, turbine_on))


# ---------------------------------------------------------------------------
# modal closed loops
# ---------------------------------------------------------------------------

def _closed_loop_den(Ng, Dg, Nc, Dc, lam):
    # s*Dg*Dc + Ng*(lam*Dc - s*Nc)
    inner = np.polysub(lam * Dc, np.polymul(_S, Nc))
    return np.polyadd(np.polymul(_S, np.polymul(Dg, Dc)), np.polymul(Ng, inner))


def _check_degree(h: RationalTF, lam):
    if h.order < 1:
        raise DegenerateModeError(f"closed loop for lambda={lam} collapsed to a static gain")


def modal_closed_loop(g: RationalTF, c: ControllerSpec, lambda_k: float) -> tuple[RationalTF, RationalTF]:
    """Per-mode loops ``h_p = g / (1 + g (lambda/s - c))`` and ``h_omega = c h_p``."""
    if lambda_k < 0:
        raise ValueError("eigenvalue must be nonnegative")
    Ng, Dg = g.to_polys()
    Nc, Dc = c.polys()
    den = _closed_loop_den(Ng, Dg, Nc, Dc, float(lambda_k))
    h_p = RationalTF.from_polys(np.polymul(_S, np.polymul(Ng, Dc)), den)
    _check_degree(h_p, lambda_k)
    h_w = RationalTF.from_polys(np.polymul(_S, np.polymul(Ng, Nc)), den)
    return h_p, h_w


def modal_step_tf(g_turbine: RationalTF, c: ControllerSpec, lambda_k: float) -> RationalTF:
    """``h_u = h_p / s`` for a network mode (``lambda_k > 0``)."""
    if not lambda_k > 0:
        raise ValueError("modal_step_tf needs a positive eigenvalue")
    Ng, Dg = g_turbine.to_polys()
    Nc, Dc = c.polys()
    den = _closed_loop_den(Ng, Dg, Nc, Dc, float(lambda_k))
    h = RationalTF.from_polys(np.polymul(Ng, Dc), den)
    _check_degree(h, lambda_k)
    return h


# ---------------------------------------------------------------------------
# state space
# ---------------------------------------------------------------------------

@dataclass
class StateSpace:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    state_labels: list = field(default_factory=list)
    input_labels: list = field(default_factory=list)
    output_labels: list = field(default_factory=list)
    layout: dict = field(default_factory=dict)

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.B = np.asarray(self.B, dtype=float).reshape(self.A.shape[0], -1)
        self.C = np.asarray(self.C, dtype=float).reshape(-1, self.A.shape[0])
        self.D = np.asarray(self.D, dtype=float).reshape(self.C.shape[0], self.B.shape[1])
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ValidationError("A must be square")
        if self.state_labels and len(self.state_labels) != n:
            raise ValidationError("state labels do not cover every state")

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    def freq_response(self, s) -> np.ndarray:
        """Transfer matrix at the points ``s``; shape ``(len(s), outputs, inputs)``."""
        s = np.atleast_1d(np.asarray(s, dtype=complex))
        eye = np.eye(self.n_states)
        out = np.empty((s.size, self.C.shape[0], self.B.shape[1]), dtype=complex)
        for k, sk in enumerate(s):
            out[k] = self.C @ np.linalg.solve(sk * eye - self.A, self.B) + self.D
        return out

    def select(self, inputs=None, outputs=None) -> "StateSpace":
        inputs = slice(None) if inputs is None else inputs
        outputs = slice(None) if outputs is None else outputs
        in_lab = list(np.asarray(self.input_labels, dtype=object)[inputs]) if self.input_labels else []
        out_lab = list(np.asarray(self.output_labels, dtype=object)[outputs]) if self.output_labels else []
        return StateSpace(self.A, self.B[:, inputs], self.C[outputs, :], self.D[outputs][:, inputs],
                          list(self.state_labels), in_lab, out_lab)

    def to_text(self) -> str:
        """Plain-text dump: each matrix as rows of space-separated decimals."""
        parts = []
        for name in ("A", "B", "C", "D"):
            M = getattr(self, name)
            parts.append(f"# {name} {M.shape[0]} {M.shape[1]}")
            parts.extend(" ".join(repr(float(x)) for x in row) for row in M)
        return "\n".join(parts) + "\n"


def realize(h: RationalTF) -> StateSpace:
    """Observable canonical realisation of the reduced-order transfer function."""
    r = h.order
    if r == 0:
        return StateSpace(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[h.b4]])
    if h.deriv:
        raise ValueError("improper transfer function has no state-space realisation")
    den = h.den_poly()          # 1, c_{r-1}, ..., c_0
    num = h.strict_num_poly()   # e_{r-1}, ..., e_0
    A = np.zeros((r, r))
    A[1:, :-1] = np.eye(r - 1)
    A[:, -1] = -den[::-1][:-1]  # -c_0 ... -c_{r-1}
    B = num[::-1].reshape(r, 1)  # e_0 ... e_{r-1}
    C = np.zeros((1, r))
    C[0, -1] = 1.0
    return StateSpace(A, B, C, [[h.b4]])


def step_response(h: RationalTF, times: np.ndarray) -> np.ndarray:
    """Unit-step response on a uniform grid starting at zero (exact discretisation)."""
    times = np.asarray(times, dtype=float)
    ss = realize(h)
    out = np.empty(times.size)
    if ss.n_states == 0:
        out[:] = h.b4
        return out
    dt = times[1] - times[0] if times.size > 1 else 0.0
    n = ss.n_states
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = ss.A
    M[:n, n] = ss.B[:, 0]
    Phi = expm(M * dt)
    z = np.zeros(n + 1)
    z[n] = 1.0
    c = np.concatenate([ss.C[0], [h.b4]])
    for k in range(times.size):
        out[k] = c @ z
        z = Phi @ z
    return out


def _weights(case: NetworkCase, noise):
    f = case.ratings
    if noise is None:
        return np.ones(case.n), np.ones(case.n)
    return noise.kappa_p * np.sqrt(f), noise.kappa_w / np.sqrt(f)


def assemble_full_state_space(case: NetworkCase, controllers: Sequence[ControllerSpec], noise=None,
                              turbine: bool = True) -> StateSpace:
    """Linear model from ``[p_in | d_p | n_omega]`` to bus frequencies.

    The first bus angle is the reference (states hold ``theta_i - theta_1``).
    Buses with virtual inertia carry ``xi_i = omega_i + k_i w_i n_i`` with
    ``k_i = m_v,i / (m_i + m_v,i)`` so the derivative of the measured frequency
    is realised exactly; their output then has a direct feedthrough from
    measurement noise.  ``noise`` is any object with ``kappa_p``/``kappa_w``
    (unit weights when ``None``).  Turbine states are skipped when
    ``turbine`` is false or a bus has ``r_t_inv == 0``.
    """
    n = case.n
    controllers = list(controllers)
    if len(controllers) != n:
        raise ValidationError(f"expected {n} controllers, got {len(controllers)}")
    L = build_laplacian(case)
    wp, ww = _weights(case, noise)
    m, d, tau, rt = case.m, case.d, case.tau, case.r_t_inv

    turb = [i for i in range(n) if turbine and rt[i] > 0]
    idr = [i for i in range(n) if isinstance(controllers[i], IDroop)]
    na, nt, nc = n - 1, len(turb), len(idr)
    nx = na + n + nt + nc
    o_w, o_t, o_c = na, na + n, na + n + nt
    nu_in = 3 * n
    ids = case.ids

    mv = np.array([c.m_v if isinstance(c, VirtualInertia) else 0.0 for c in controllers])
    k_fb = mv / (m + mv)
    mass = m + mv

    # omega = Cw x + Dw u ; measurement y = omega + W_omega n
    Cw = np.zeros((n, nx))
    Cw[:, o_w:o_w + n] = np.eye(n)
    Dw = np.zeros((n, nu_in))
    Dw[np.arange(n), 2 * n + np.arange(n)] = -k_fb * ww
    Cy = Cw
    Dy = Dw.copy()
    Dy[np.arange(n), 2 * n + np.arange(n)] += ww

    A = np.zeros((nx, nx))
    B = np.zeros((nx, nu_in))
    # angle differences
    for j in range(1, n):
        A[j - 1] = Cw[j] - Cw[0]
        B[j - 1] = Dw[j] - Dw[0]
    # swing rows
    Lred = L[:, 1:]
    for i in range(n):
        row = o_w + i
        A[row, :na] -= Lred[i]
        A[row] -= d[i] * Cw[i]
        B[row] -= d[i] * Dw[i]
        B[row, i] += 1.0
        B[row, n + i] += wp[i]
        c = controllers[i]
        if isinstance(c, (Droop, VirtualInertia)):
            A[row] -= c.r_r_inv * Cy[i]
            B[row] -= c.r_r_inv * Dy[i]
        elif isinstance(c, IDroop):
            xc = o_c + idr.index(i)
            A[row, xc] += c.delta * (c.nu - c.r_r_inv)
            A[row] -= c.nu * Cy[i]
            B[row] -= c.nu * Dy[i]
        if i in turb:
            A[row, o_t + turb.index(i)] += 1.0
        A[row] /= mass[i]
        B[row] /= mass[i]
    for k, i in enumerate(turb):
        row = o_t + k
        A[row] = -rt[i] * Cw[i]
        B[row] = -rt[i] * Dw[i]
        A[row, row] -= 1.0
        A[row] /= tau[i]
        B[row] /= tau[i]
    for k, i in enumerate(idr):
        row = o_c + k
        A[row] = Cy[i]
        B[row] = Dy[i]
        A[row, row] -= controllers[i].delta

    labels = ([f"theta_{ids[j]}-theta_{ids[0]}" for j in range(1, n)]
              + [("xi_" if mv[i] > 0 else "omega_") + str(ids[i]) for i in range(n)]
              + [f"q_t_{ids[i]}" for i in turb] + [f"x_c_{ids[i]}" for i in idr])
    inputs = [f"p_in_{b}" for b in ids] + [f"d_p_{b}" for b in ids] + [f"n_omega_{b}" for b in ids]
    outputs = [f"omega_{b}" for b in ids]
    layout = {"omega": slice(o_w, o_w + n), "turbine": slice(o_t, o_t + nt), "turbine_buses": turb,
              "idroop": slice(o_c, o_c + nc), "idroop_buses": idr, "vi_gain": k_fb, "mass": mass,
              "w_p": wp, "w_omega": ww}
    return StateSpace(A, B, Cw, Dw, labels, inputs, outputs, layout)


# ---------------------------------------------------------------------------
# modal decomposition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModalDecomposition:
    lambdas: np.ndarray
    V: np.ndarray
    f: np.ndarray

    @property
    def n(self) -> int:
        return self.lambdas.size

    @property
    def Gamma(self) -> np.ndarray:
        G = self.V.T @ (self.V / self.f[:, None])
        G[0, 0] = self.n / math.fsum(self.f)  # exact value for the synchronous mode
        return G

    @property
    def GammaTilde(self) -> np.ndarray:
        return self.Gamma[1:, 1:]

    @property
    def V_perp(self) -> np.ndarray:
        return self.V[:, 1:]

    def scaled_laplacian(self) -> np.ndarray:
        return (self.V * self.lambdas) @ self.V.T


def eigendecompose_scaled(L: np.ndarray, F) -> ModalDecomposition:
    """Orthogonal eigendecomposition of ``F^{-1/2} L F^{-1/2}``.

    The first eigenvector is fixed to ``F^{1/2} 1 / sqrt(sum f)`` with
    eigenvalue exactly zero; every other column is oriented so that its
    largest-magnitude entry is positive.
    """
    f = np.asarray(F, dtype=float)
    if f.ndim == 2:
        f = np.diag(f).copy()
    if np.any(f <= 0):
        raise ValidationError("ratings must be positive")
    s = 1.0 / np.sqrt(f)
    LF = s[:, None] * np.asarray(L, dtype=float) * s[None, :]
    LF = 0.5 * (LF + LF.T)
    n = f.size
    w, U = np.linalg.eigh(LF)
    order = np.argsort(w, kind="stable")
    w, U = w[order], U[:, order]
    v1 = np.sqrt(f) / math.sqrt(f.sum())
    if n > 1:
        rest = U[:, 1:] - np.outer(v1, v1 @ U[:, 1:])
        Q, _ = np.linalg.qr(np.column_stack([v1, rest]))
        rest = Q[:, 1:]
        # Rayleigh quotients keep eigenvalues consistent with the re-orthogonalised basis
        lam_rest = np.einsum("ij,ij->j", rest, LF @ rest)
        V = np.column_stack([v1, rest])
        lambdas = np.concatenate([[0.0], lam_rest])
    else:
        V = v1.reshape(1, 1)
        lambdas = np.zeros(1)
    for k in range(1, n):
        j = int(np.argmax(np.abs(V[:, k])))
        if V[j, k] < 0:
            V[:, k] = -V[:, k]
    return ModalDecomposition(lambdas=lambdas, V=V, f=f)


def modal_transfer(decomp: ModalDecomposition, g: RationalTF, c: ControllerSpec, s, kappa_p=1.0, kappa_w=1.0):
    """Transfer matrices from the diagonalised loop at points ``s``.

    Returns ``(T_wp, T_wd, T_wn)``, each of shape ``(len(s), n, n)``.
    """
    s = np.atleast_1d(np.asarray(s, dtype=complex))
    n = decomp.n
    Hp = np.empty((s.size, n), dtype=complex)
    Hw = np.empty((s.size, n), dtype=complex)
    for k, lam in enumerate(decomp.lambdas):
        hp, hw = modal_closed_loop(g, c, max(lam, 0.0))
        Hp[:, k] = hp(s)
        Hw[:, k] = hw(s)
    V = decomp.V
    fm = 1.0 / np.sqrt(decomp.f)
    fp = np.sqrt(decomp.f)
    left = fm[:, None] * V
    T_wp = np.einsum("ik,sk,jk->sij", left, Hp, V * fm[:, None])
    T_wd = T_wp * (kappa_p * fp)[None, None, :]
    T_wn = np.einsum("ik,sk,jk->sij", left, Hw, V * fp[:, None]) * (kappa_w * fm)[None, None, :]
    return T_wp, T_wd, T_wn
