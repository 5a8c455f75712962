"""Time-domain simulation: RK4 for step scenarios (with turbine deadbands), Euler-Maruyama for noise."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import expm

from .errors import ConfigError, DivergenceError, ValidationError
from .h2core import NoiseWeights
from .lti import ControllerSpec, IDroop, StateSpace, VirtualInertia, assemble_full_state_space
from .metrics import MetricsReport, StepDisturbance, nadir_empirical
from .netmodel import NetworkCase

DIVERGENCE_LIMIT = 1e6
METHODS = ("rk4", "em")


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    horizon: float = 60.0
    seed: int = 0
    method: str = "rk4"
    record_stride: int = 1

    def __post_init__(self):
        if not self.dt > 0 or not self.horizon >= self.dt:
            raise ValidationError("need dt > 0 and horizon >= dt")
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise ValidationError("record_stride must be a positive integer")
        if self.method not in METHODS:
            raise ValidationError(f"method must be one of {METHODS}")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))


@dataclass
class Trace:
    """Recorded bus quantities; arrays are ``n x T`` with ``T = len(times)``."""

    times: np.ndarray
    omega: np.ndarray
    q_r: np.ndarray
    q_t: np.ndarray
    omega_bar: np.ndarray
    ids: tuple
    inertia: np.ndarray
    kind: str = "step"
    u0: Optional[np.ndarray] = None

    @property
    def sync_integrand(self) -> np.ndarray:
        """``|omega - omega_bar 1|^2`` at every sample."""
        return np.sum((self.omega - self.omega_bar[None, :]) ** 2, axis=0)

    @property
    def n(self) -> int:
        return self.omega.shape[0]


class _Model:
    """Linear closed loop plus the bookkeeping needed for nonlinear and recorded terms."""

    def __init__(self, case: NetworkCase, controllers: Sequence[ControllerSpec], noise, turbine: bool):
        self.case = case
        self.controllers = list(controllers)
        self.ss: StateSpace = assemble_full_state_space(case, controllers, noise, turbine=turbine)
        lay = self.ss.layout
        n = case.n
        self.n = n
        self.w_idx = np.arange(lay["omega"].start, lay["omega"].stop)
        self.t_bus = np.asarray(lay["turbine_buses"], dtype=int)
        self.t_idx = np.arange(lay["turbine"].start, lay["turbine"].stop)
        self.c_bus = np.asarray(lay["idroop_buses"], dtype=int)
        self.c_idx = np.arange(lay["idroop"].start, lay["idroop"].stop)
        self.vi_gain = lay["vi_gain"]
        self.w_omega = lay["w_omega"]
        self.r = np.array([c.r_r_inv for c in self.controllers])
        self.m_v = np.array([c.m_v if isinstance(c, VirtualInertia) else 0.0 for c in self.controllers])
        self.prop = np.array([not isinstance(c, IDroop) for c in self.controllers])
        self.nu = np.array([c.nu if isinstance(c, IDroop) else 0.0 for c in self.controllers])
        self.delta = np.array([c.delta if isinstance(c, IDroop) else 0.0 for c in self.controllers])
        eps = case.deadband[self.t_bus] if self.t_bus.size else np.zeros(0)
        self.deadband = eps
        self.has_deadband = bool(np.any(eps > 0))
        self.t_gain = (case.r_t_inv / case.tau)[self.t_bus] if self.t_bus.size else np.zeros(0)

    def deadband_correction(self, x):
        """Turbine-row term that turns the linear response ``-r_t_inv w`` into ``-r_t_inv phi(w)``."""
        w = x[self.w_idx[self.t_bus]]
        eps = self.deadband.reshape((-1,) + (1,) * (w.ndim - 1))
        return self.t_gain.reshape(eps.shape) * np.clip(w, -eps, eps)

    def effort(self, x, y, y_dot=None):
        """Inverter power for states ``x`` (``nx x T``) and measured frequency ``y`` (``n x T``)."""
        q = np.where(self.prop[:, None], -self.r[:, None] * y, 0.0)
        if y_dot is not None:
            q = q - self.m_v[:, None] * y_dot
        if self.c_bus.size:
            cb = self.c_bus
            xc = x[self.c_idx]
            q[cb] = (self.delta[cb] * (self.nu[cb] - self.r[cb]))[:, None] * xc - self.nu[cb][:, None] * y[cb]
        return q

    def turbine_power(self, x) -> np.ndarray:
        qt = np.zeros((self.n, x.shape[1]))
        qt[self.t_bus] = x[self.t_idx]
        return qt


def _trace(model: _Model, times, X, omega, y, y_dot, kind, u0=None) -> Trace:
    m = model.case.m
    wbar = (m @ omega) / m.sum()
    return Trace(times=times, omega=omega, q_r=model.effort(X, y, y_dot), q_t=model.turbine_power(X),
                 omega_bar=wbar, ids=tuple(model.case.ids), inertia=m.copy(), kind=kind, u0=u0)


def _check(x, t):
    if not np.all(np.abs(x) < DIVERGENCE_LIMIT):
        raise DivergenceError(f"state exceeded {DIVERGENCE_LIMIT:g} at t={t:.6g}")


def simulate_step(case: NetworkCase, controllers: Sequence[ControllerSpec], step: StepDisturbance,
                  cfg: SimConfig = SimConfig()) -> Trace:
    """Fixed-step RK4 from equilibrium; turbine deadbands are the only nonlinearity.

    The input is held constant over each step and switches on at the first
    grid point at or after ``step.time``.
    """
    if cfg.method != "rk4":
        raise ConfigError("simulate_step needs method 'rk4'")
    if step.u0.size != case.n:
        raise ValidationError("step vector length does not match the number of buses")
    model = _Model(case, controllers, None, turbine=True)
    A = model.ss.A
    b = model.ss.B[:, :case.n] @ step.u0
    dt = cfg.dt
    k_on = int(math.ceil(step.time / dt - 1e-9))
    corr = model.deadband_correction if model.has_deadband else None

    def rhs(x, u_on):
        dx = A @ x
        if u_on:
            dx = dx + b
        if corr is not None:
            dx[model.t_idx] += corr(x)
        return dx

    nx = A.shape[0]
    steps = cfg.n_steps
    rec = list(range(0, steps + 1, cfg.record_stride))
    if rec[-1] != steps:
        rec.append(steps)
    rec_set = set(rec)
    X = np.empty((nx, len(rec)))
    Xd = np.empty((nx, len(rec)))
    x = np.zeros(nx)
    j = 0
    for k in range(steps + 1):
        on = k >= k_on
        if k in rec_set:
            X[:, j] = x
            Xd[:, j] = rhs(x, on)
            j += 1
        if k == steps:
            break
        k1 = rhs(x, on)
        k2 = rhs(x + 0.5 * dt * k1, on)
        k3 = rhs(x + 0.5 * dt * k2, on)
        k4 = rhs(x + dt * k3, on)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if k % 256 == 0:
            _check(x, (k + 1) * dt)
    _check(x, steps * dt)
    times = dt * np.asarray(rec, dtype=float)
    omega = X[model.w_idx]
    return _trace(model, times, X, omega, omega, Xd[model.w_idx], "step", step.u0.copy())


def linear_step_reference(case: NetworkCase, controllers: Sequence[ControllerSpec], step: StepDisturbance,
                          times: np.ndarray) -> np.ndarray:
    """Bus frequencies of the deadband-free model on a uniform grid starting at 0 (exact discretisation).

    The step switches on at the first grid point at or after ``step.time``,
    as in :func:`simulate_step`.
    """
    ss = assemble_full_state_space(case, controllers, None, turbine=True)
    nx = ss.n_states
    dt = float(times[1] - times[0])
    k_on = int(math.ceil(step.time / dt - 1e-9))
    M = np.zeros((nx + 1, nx + 1))
    M[:nx, :nx] = ss.A
    M[:nx, nx] = ss.B[:, :case.n] @ step.u0
    Phi = expm(M * dt)
    z = np.zeros(nx + 1)
    out = np.empty((case.n, times.size))
    for k in range(times.size):
        if k == k_on:
            z[nx] = 1.0
        out[:, k] = ss.C @ z[:nx]
        z = Phi @ z
    return out


# ---------------------------------------------------------------------------
# stochastic
# ---------------------------------------------------------------------------

def _check_vi_noise(controllers, w: NoiseWeights, allow_vi_noise: bool):
    if w.kappa_w > 0 and not allow_vi_noise and any(isinstance(c, VirtualInertia) for c in controllers):
        raise ConfigError("virtual inertia with measurement noise has unbounded variance; "
                          "pass allow_vi_noise=True to simulate it anyway")


def _zoh(A: np.ndarray, B: np.ndarray, dt: float):
    """``(expm(A dt), int_0^dt expm(A s) ds B)`` via one augmented exponential."""
    nx, nu = B.shape
    M = np.zeros((nx + nu, nx + nu))
    M[:nx, :nx] = A
    M[:nx, nx:] = B
    E = expm(M * dt)
    return E[:nx, :nx], E[:nx, nx:]


def _em_chunks(model: _Model, cfg: SimConfig, run_indices: Sequence[int], chunk: int = 4096,
               step: Optional[StepDisturbance] = None):
    """Exponential Euler-Maruyama over all runs at once; yields ``(k0, X, Z)`` per chunk of steps.

    Both noise channels are held constant over each step as a discrete white
    sequence of variance ``1/dt``; the linear drift is propagated exactly
    with the matrix exponential, so lightly damped network modes stay stable
    at any ``dt``.  ``X[k]`` (``nx x R``) is the state at step ``k0 + k`` and
    ``Z[k]`` the standard normal draws (``2n x R``) used to advance it.  Each
    run draws from its own stream seeded by ``(seed, run_index)``.  An
    optional step input and turbine deadbands enter the drift.
    """
    n = model.n
    A = model.ss.A
    nx = A.shape[0]
    dt = cfg.dt
    Phi, G = _zoh(A, model.ss.B, dt)
    Gu, Gs = G[:, :n], G[:, n:] / math.sqrt(dt)
    gens = [np.random.default_rng(np.random.SeedSequence([int(cfg.seed), int(j)])) for j in run_indices]
    R = len(gens)
    x = np.zeros((nx, R))
    steps = cfg.n_steps
    if step is not None:
        bu = (Gu @ step.u0)[:, None]
        k_on = int(math.ceil(step.time / dt - 1e-9))
    else:
        bu, k_on = None, steps + 1
    corr = model.deadband_correction if model.has_deadband else None
    for k0 in range(0, steps + 1, chunk):
        K = min(chunk, steps + 1 - k0)
        Z = np.stack([g.standard_normal((K, 2 * n)) for g in gens], axis=-1)  # K x 2n x R
        drive = np.einsum("ij,kjr->kir", Gs, Z)
        if bu is not None and k0 + K > k_on:
            drive[max(0, k_on - k0):] += bu
        X = np.empty((K, nx, R))
        for k in range(K):
            X[k] = x
            if corr is None:
                x = Phi @ x + drive[k]
            else:
                x_new = Phi @ x + drive[k]
                x_new[model.t_idx] += dt * corr(x)
                x = x_new
        _check(x, (k0 + K) * dt)
        yield k0, X, Z


def _outputs(model: _Model, X, Z, dt):
    """Bus frequency and measured frequency from states and the step's noise draws."""
    n = model.n
    n_meas = Z[:, n:, :] / math.sqrt(dt)  # discrete white sequence with variance 1/dt
    omega = np.einsum("ij,kjr->kir", model.ss.C, X) + np.einsum("ij,kjr->kir", model.ss.D[:, 2 * n:], n_meas)
    y = omega + model.w_omega[None, :, None] * n_meas
    return omega, y


def simulate_stochastic(case: NetworkCase, controllers: Sequence[ControllerSpec], w: NoiseWeights,
                        cfg: SimConfig, allow_vi_noise: bool = False, turbine: bool = False,
                        run_index: int = 0, step: Optional[StepDisturbance] = None) -> Trace:
    """Euler-Maruyama response to weighted power and measurement white noise.

    Turbines are off by default (the variance formulas assume so); with
    ``turbine=True`` their deadbands apply.  ``step`` adds a deterministic
    step on top of the noise.  For virtual inertia the recorded inverter
    power omits the derivative part, which is not defined for white
    measurement noise.
    """
    if cfg.method != "em":
        raise ConfigError("simulate_stochastic needs method 'em'")
    _check_vi_noise(controllers, w, allow_vi_noise)
    model = _Model(case, controllers, w, turbine=turbine)
    stride = cfg.record_stride
    Xs, Ws, Ys = [], [], []
    for k0, X, Z in _em_chunks(model, cfg, [run_index], step=step):
        sel = np.arange((-k0) % stride, X.shape[0], stride)
        omega, y = _outputs(model, X[sel], Z[sel], cfg.dt)
        Xs.append(X[sel, :, 0])
        Ws.append(omega[:, :, 0])
        Ys.append(y[:, :, 0])
    X = np.concatenate(Xs).T
    omega = np.concatenate(Ws).T
    y = np.concatenate(Ys).T
    times = cfg.dt * stride * np.arange(omega.shape[1], dtype=float)
    kind = "noise" if step is None else "combined"
    return _trace(model, times, X, omega, y, None, kind, None if step is None else step.u0.copy())


def stochastic_variance(case: NetworkCase, controllers: Sequence[ControllerSpec], w: NoiseWeights,
                        cfg: SimConfig, runs: int = 10, burn_in: float = 0.0, allow_vi_noise: bool = False,
                        turbine: bool = False) -> np.ndarray:
    """Time-averaged ``sum_i omega_i^2`` after ``burn_in`` for each of ``runs`` seeded runs."""
    if cfg.method != "em":
        raise ConfigError("stochastic_variance needs method 'em'")
    _check_vi_noise(controllers, w, allow_vi_noise)
    model = _Model(case, controllers, w, turbine=turbine)
    k_burn = int(math.ceil(burn_in / cfg.dt))
    acc = np.zeros(runs)
    count = 0
    for k0, X, Z in _em_chunks(model, cfg, range(runs)):
        start = max(0, k_burn - k0)
        if start >= X.shape[0]:
            continue
        omega, _ = _outputs(model, X[start:], Z[start:], cfg.dt)
        acc += np.sum(omega ** 2, axis=(0, 1))
        count += omega.shape[0]
    if count == 0:
        raise ValidationError("burn-in covers the whole horizon")
    return acc / count


# ---------------------------------------------------------------------------
# empirical metrics and exports
# ---------------------------------------------------------------------------

def empirical_metrics(trace: Trace, analytic: Optional[MetricsReport] = None, burn_in: float = 0.0,
                      settle_rtol: float = 1e-4) -> MetricsReport:
    """Metrics measured on a trace.

    Step traces: synchronous frequency (last sample), effort share from the
    mean inverter power over the final 10%, trapezoidal synchronisation cost,
    Nadir (combined step-plus-noise traces get the same treatment without
    the settling check).  Noise traces: time-averaged ``sum_i omega_i^2`` after ``burn_in``
    in ``h2_total``.  Analytic cost bounds are copied over when given.
    """
    rpt = MetricsReport()
    if analytic is not None:
        rpt.sync_lower, rpt.sync_upper = analytic.sync_lower, analytic.sync_upper
    t = trace.times
    if trace.kind in ("step", "combined"):
        omega_syn = None
        if trace.kind == "step" and analytic is not None and math.isfinite(analytic.omega_syn):
            omega_syn = analytic.omega_syn
        nad = nadir_empirical(t, trace.omega_bar, omega_syn, rtol=settle_rtol)
        rpt.nadir_value, rpt.nadir_time, rpt.overshoot = nad.value, nad.time, nad.overshoot
        rpt.omega_syn = float(trace.omega_bar[-1])
        rpt.sync_exact = float(np.trapezoid(trace.sync_integrand, t))
        if trace.u0 is not None and np.sum(trace.u0) != 0:
            tail = t >= t[0] + 0.9 * (t[-1] - t[0])
            rpt.es = abs(float(np.mean(np.sum(trace.q_r[:, tail], axis=0)))) / abs(float(np.sum(trace.u0)))
    else:
        keep = t >= burn_in
        if not np.any(keep):
            raise ValidationError("burn-in covers the whole trace")
        rpt.h2_total = float(np.mean(np.sum(trace.omega[:, keep] ** 2, axis=0)))
    return rpt


def histogram(trace: Trace, bins: int = 50, burn_in: float = 0.0, value_range=None):
    """Empirical density of all bus frequency samples; returns ``(edges, density)``."""
    keep = trace.times >= burn_in
    density, edges = np.histogram(trace.omega[:, keep].ravel(), bins=bins, range=value_range, density=True)
    return edges, density


def write_trace_csv(trace: Trace, path) -> None:
    ids = trace.ids
    header = (["t"] + [f"omega_{i}" for i in ids] + [f"qr_{i}" for i in ids]
              + [f"qt_{i}" for i in ids] + ["omega_bar"])
    data = np.vstack([trace.times[None, :], trace.omega, trace.q_r, trace.q_t, trace.omega_bar[None, :]])
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for row in data.T:
            wr.writerow([repr(float(v)) for v in row])


def write_histogram_csv(edges, density, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["bin_left", "bin_right", "density"])
        for lo, hi, dv in zip(edges[:-1], edges[1:], density):
            wr.writerow([repr(float(lo)), repr(float(hi)), repr(float(dv))])
