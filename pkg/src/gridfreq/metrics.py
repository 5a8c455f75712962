"""Steady-state and dynamic performance metrics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateError, NotSettledError, ValidationError
from .h2core import NoiseWeights, cross_inner_product, frequency_variance, h2_closed_form
from .lti import (ControllerSpec, ModalDecomposition, RationalTF, eigendecompose_scaled,
                  generator_tf, modal_closed_loop, modal_step_tf, per_bus_controllers, step_response)
from .netmodel import NetworkCase, RepresentativeParams, build_laplacian


@dataclass(frozen=True)
class StepDisturbance:
    """Per-bus step of size ``u0`` applied at ``time``."""

    u0: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        u0 = np.asarray(self.u0, dtype=float).ravel()
        if not np.all(np.isfinite(u0)) or not math.isfinite(self.time):
            raise ValidationError("step entries must be finite")
        object.__setattr__(self, "u0", u0)

    @property
    def total(self) -> float:
        return float(math.fsum(self.u0))


@dataclass(frozen=True)
class SecondOrderForm:
    """``K (s + z) / (s^2 + 2 xi wn s + wn^2)``."""

    K: float
    z: float
    xi: float
    wn: float

    def __post_init__(self):
        if not (self.z > 0 and self.xi >= 0 and self.wn > 0):
            raise ValidationError("need z > 0, xi >= 0, wn > 0")


@dataclass(frozen=True)
class SyncCostBounds:
    lower: float
    upper: float
    exact: Optional[float] = None


@dataclass(frozen=True)
class Interval:
    """Real interval with open/closed ends; ``lo > hi`` encodes the empty set."""

    lo: float
    hi: float
    lo_closed: bool = True
    hi_closed: bool = True

    @classmethod
    def empty(cls) -> "Interval":
        return cls(math.nan, math.nan, False, False)

    @property
    def is_empty(self) -> bool:
        if math.isnan(self.lo) or math.isnan(self.hi) or self.lo > self.hi:
            return True
        return self.lo == self.hi and not (self.lo_closed and self.hi_closed)

    def __contains__(self, x: float) -> bool:
        if self.is_empty:
            return False
        above = x >= self.lo if self.lo_closed else x > self.lo
        below = x <= self.hi if self.hi_closed else x < self.hi
        return above and below


@dataclass(frozen=True)
class NadirReport:
    value: float
    time: float
    overshoot: float


def _fmt(x) -> str:
    if x is None:
        return "nan"
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


@dataclass
class MetricsReport:
    omega_syn: float = math.nan
    es: float = math.nan
    h2_total: float = math.nan
    h2_per_mode: tuple = ()
    sync_lower: float = math.nan
    sync_exact: float = math.nan
    sync_upper: float = math.nan
    nadir_value: float = math.nan
    nadir_time: float = math.nan
    overshoot: float = math.nan
    extra: dict = field(default_factory=dict)

    def as_items(self) -> list[tuple[str, str]]:
        items = [("omega_syn", self.omega_syn), ("es", self.es), ("h2_total", self.h2_total)]
        items += [(f"h2_mode_{k + 1}", v) for k, v in enumerate(self.h2_per_mode)]
        items += [(f.name, getattr(self, f.name)) for f in fields(self)
                  if f.name in ("sync_lower", "sync_exact", "sync_upper", "nadir_value", "nadir_time", "overshoot")]
        items += sorted(self.extra.items())
        return [(k, _fmt(v)) for k, v in items]

    def to_csv(self) -> str:
        items = self.as_items()
        return ",".join(k for k, _ in items) + "\n" + ",".join(v for _, v in items) + "\n"


# ---------------------------------------------------------------------------
# steady state
# ---------------------------------------------------------------------------

def _steady_denominator(case: NetworkCase, controllers: Sequence[ControllerSpec]) -> tuple[float, float]:
    if len(controllers) != case.n:
        raise ValidationError(f"expected {case.n} controllers, got {len(controllers)}")
    c0 = [c.dc_gain() for c in controllers]
    den = math.fsum(list(case.d) + list(case.r_t_inv) + [-x for x in c0])
    if not den > 0:
        raise DegenerateError(f"steady-state denominator {den} is not positive")
    return den, math.fsum(c0)


def synchronous_frequency(case: NetworkCase, controllers: Sequence[ControllerSpec], step: StepDisturbance) -> float:
    den, _ = _steady_denominator(case, controllers)
    if step.u0.size != case.n:
        raise ValidationError("step vector length does not match the number of buses")
    return step.total / den


def steady_state_effort_share(case: NetworkCase, controllers: Sequence[ControllerSpec]) -> float:
    den, csum = _steady_denominator(case, controllers)
    return abs(csum) / den


# ---------------------------------------------------------------------------
# synchronization cost
# ---------------------------------------------------------------------------

def _modal_step_inputs(decomp: ModalDecomposition, g_turbine, c, step):
    f = decomp.f
    if step.u0.size != f.size:
        raise ValidationError("step vector length does not match the decomposition")
    u_t = decomp.V_perp.T @ (step.u0 / np.sqrt(f))
    hs = [modal_step_tf(g_turbine, c, lam) for lam in decomp.lambdas[1:]]
    return u_t, hs


def sync_cost_bounds(decomp: ModalDecomposition, g_turbine: RationalTF, c: ControllerSpec,
                     step: StepDisturbance, F=None) -> SyncCostBounds:
    """Hadamard-product bounds ``sum u_k^2 |h_u,k|^2 / max f`` and ``/ min f``."""
    f = decomp.f if F is None else np.asarray(np.diag(F) if np.ndim(F) == 2 else F, dtype=float)
    u_t, hs = _modal_step_inputs(decomp, g_turbine, c, step)
    norms = [h2_closed_form(h) for h in hs]
    if any(not r.is_finite for r, u in zip(norms, u_t) if u != 0):
        return SyncCostBounds(math.inf, math.inf, math.inf if np.ptp(f) == 0 else None)
    total = math.fsum(u * u * r.value for u, r in zip(u_t, norms) if u != 0)
    lower, upper = total / f.max(), total / f.min()
    return SyncCostBounds(lower, upper, lower if np.ptp(f) == 0 else None)


def sync_cost_exact(decomp: ModalDecomposition, g_turbine: RationalTF, c: ControllerSpec,
                    step: StepDisturbance, F=None) -> float:
    """``u^T (Gamma~ o H~) u`` with ``H~_kl`` the cross inner products of the modal step responses."""
    u_t, hs = _modal_step_inputs(decomp, g_turbine, c, step)
    active = [k for k, u in enumerate(u_t) if u != 0]
    if not active:
        return 0.0
    if any(not hs[k].is_stable for k in active):
        return math.inf
    G = decomp.GammaTilde
    total = []
    for i, k in enumerate(active):
        for l in active[i:]:
            Hkl = cross_inner_product(hs[k], hs[l])
            w = 1.0 if k == l else 2.0
            total.append(w * u_t[k] * u_t[l] * G[k, l] * Hkl)
    return max(math.fsum(total), 0.0)


# ---------------------------------------------------------------------------
# Nadir
# ---------------------------------------------------------------------------

def nadir_exists_second_order(f: SecondOrderForm) -> bool:
    """Whether the step response of ``K(s+z)/(s^2+2 xi wn s+wn^2)`` overshoots its final value."""
    rho = f.z / f.wn
    xi = f.xi
    no_nadir = (1.0 <= xi <= rho) or (xi > rho and xi >= 0.5 * (rho + 1.0 / rho))
    return not no_nadir


def second_order_first_overshoot(xi: float, rho: float, horizon: float, dt: float = 1e-4,
                                 rtol: float = 1e-12, chunk: int = 200_000) -> float:
    """Brute-force scan of the normalised step response of ``(s + rho)/(s^2 + 2 xi s + 1)``.

    Time is measured in units of ``1/wn``.  Returns the first grid time at which
    the response exceeds its final value by more than ``rtol`` (relative), or
    ``inf`` if that never happens within ``horizon``.
    """
    y_ss = rho  # final value of (s+rho)/(s^2+2 xi s+1) for a unit step
    disc = complex(xi * xi - 1.0)
    root = np.sqrt(disc)
    p1, p2 = -xi + root, -xi - root
    repeated = abs(p1 - p2) < 1e-9
    if repeated:
        p = -xi
        B = (p + rho) / p
        A = -rho / (p * p)
    else:
        r1 = (p1 + rho) / (p1 * (p1 - p2))
        r2 = (p2 + rho) / (p2 * (p2 - p1))
    n_total = int(math.ceil(horizon / dt)) + 1
    thresh = rtol * abs(y_ss)
    for start in range(0, n_total, chunk):
        t = dt * np.arange(start, min(start + chunk, n_total))
        if repeated:
            e = np.exp(p * t)
            dev = A * e + B * t * e
        else:
            dev = (r1 * np.exp(p1 * t) + r2 * np.exp(p2 * t)).real
        hit = np.flatnonzero(dev > thresh)
        if hit.size:
            return float(t[hit[0]])
    return math.inf


def second_order_nadir_brute_force(f: SecondOrderForm) -> bool:
    """Dense-grid oracle for :func:`nadir_exists_second_order`."""
    horizon = 50.0 * f.wn / (f.xi * f.wn + 0.01)
    return math.isfinite(second_order_first_overshoot(f.xi, f.z / f.wn, horizon))


def nadir_region_droop(rep: RepresentativeParams) -> Interval:
    """Droop gains ``r_r_inv`` for which the system frequency has no Nadir."""
    rhs = rep.m * (1.0 / rep.tau - 2.0 * math.sqrt(rep.r_t_inv / (rep.tau * rep.m))) - rep.d
    if rhs > 0:
        return Interval(0.0, rhs, lo_closed=False, hi_closed=True)
    return Interval.empty()


def _vi_margin(x: float, rep: RepresentativeParams, r_r_inv: float) -> float:
    # (m+m_v)(1/tau - 2 sqrt(r_t_inv/(tau (m+m_v)))) - d - r_r_inv, with x = sqrt(m+m_v)
    return x * x / rep.tau - 2.0 * x * math.sqrt(rep.r_t_inv / rep.tau) - rep.d - r_r_inv


def nadir_region_vi(rep: RepresentativeParams, r_r_inv: float, tol: float = 1e-6) -> float:
    """Smallest virtual inertia ``m_v`` that removes the Nadir (0 if none is needed).

    Feasibility is monotone in ``x = sqrt(m + m_v)``; the bracket starts at
    ``m_v = m`` and doubles until feasible, then bisects to ``tol`` on ``m_v``.
    A finite threshold always exists since the margin grows like ``x^2 / tau``.
    """
    if _vi_margin(math.sqrt(rep.m), rep, r_r_inv) >= 0:
        return 0.0
    lo, hi = 0.0, rep.m
    while _vi_margin(math.sqrt(rep.m + hi), rep, r_r_inv) < 0:
        lo, hi = hi, 2.0 * hi
    while hi - lo > tol:
        x_lo, x_hi = math.sqrt(rep.m + lo), math.sqrt(rep.m + hi)
        x_mid = 0.5 * (x_lo + x_hi)
        mid = x_mid * x_mid - rep.m
        if _vi_margin(x_mid, rep, r_r_inv) >= 0:
            hi = mid
        else:
            lo = mid
    return hi


def nadir_empirical(times, omega_bar, omega_syn: Optional[float] = None, rtol: float = 1e-4) -> NadirReport:
    """Peak ``|omega_bar|`` on the grid, its time, and overshoot beyond ``|omega_syn|``.

    When ``omega_syn`` is given the trace must have settled to within ``rtol``
    of it at the final sample; otherwise the last sample stands in for it.
    """
    times = np.asarray(times, dtype=float)
    w = np.abs(np.asarray(omega_bar, dtype=float))
    if omega_syn is None:
        omega_syn = float(omega_bar[-1])
    elif abs(omega_bar[-1] - omega_syn) > rtol * abs(omega_syn):
        raise NotSettledError(f"final value {omega_bar[-1]!r} not within {rtol} of {omega_syn!r}")
    k = int(np.argmax(w))
    return NadirReport(float(w[k]), float(times[k]), float(w[k] - abs(omega_syn)))


def system_frequency_tf(rep: RepresentativeParams, c: ControllerSpec) -> RationalTF:
    """Mode-one closed loop with turbine; ``omega_bar = (sum u0 / sum f) h(s) / s``."""
    h_p, _ = modal_closed_loop(generator_tf(rep, True), c, 0.0)
    return h_p


def nadir_analytic(rep: RepresentativeParams, c: ControllerSpec, total_u0: float, sum_f: float,
                   horizon: float = 60.0, dt: float = 1e-3, max_samples: int = 200_000) -> NadirReport:
    """Nadir of the system frequency of a proportional case from its mode-one loop.

    The horizon is stretched to ten times the slowest time constant when
    needed, coarsening the grid so it stays below ``max_samples`` points.
    """
    h = system_frequency_tf(rep, c)
    poles = np.roots(h.den_poly())
    if poles.size and np.all(poles.real < 0):
        horizon = max(horizon, 10.0 / float(np.min(-poles.real)))
    dt = max(dt, horizon / max_samples)
    t = dt * np.arange(int(round(horizon / dt)) + 1)
    gain = total_u0 / sum_f
    wbar = gain * step_response(h, t)
    return nadir_empirical(t, wbar, gain * h.dc_gain(), rtol=math.inf)


# ---------------------------------------------------------------------------
# aggregate report
# ---------------------------------------------------------------------------

def analytic_report(case: NetworkCase, c: ControllerSpec, step: Optional[StepDisturbance] = None,
                    noise: Optional[NoiseWeights] = None, nadir_horizon: float = 60.0) -> MetricsReport:
    """Closed-form metrics of a case under the representative controller ``c`` scaled per bus."""
    rep = case.representative
    f = case.ratings
    ctrls = per_bus_controllers(f, c)
    decomp = eigendecompose_scaled(build_laplacian(case), f)
    rpt = MetricsReport(es=steady_state_effort_share(case, ctrls))
    if noise is not None:
        var = frequency_variance(decomp, generator_tf(rep, False), c, noise)
        rpt.h2_total = var.value
        rpt.h2_per_mode = var.per_mode
    if step is not None:
        rpt.omega_syn = synchronous_frequency(case, ctrls, step)
        g_t = generator_tf(rep, True)
        b = sync_cost_bounds(decomp, g_t, c, step)
        rpt.sync_lower, rpt.sync_upper = b.lower, b.upper
        rpt.sync_exact = sync_cost_exact(decomp, g_t, c, step)
        nad = nadir_analytic(rep, c, step.total, float(f.sum()), horizon=nadir_horizon)
        rpt.nadir_value, rpt.nadir_time, rpt.overshoot = nad.value, nad.time + step.time, nad.overshoot
    return rpt
