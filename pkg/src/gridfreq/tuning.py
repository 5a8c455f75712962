"""Optimal and structural controller tunings."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import NumericalError, ValidationError
from .h2core import NoiseWeights
from .lti import ControllerSpec, IDroop, eigendecompose_scaled, generator_tf, modal_closed_loop
from .metrics import Interval, StepDisturbance, sync_cost_bounds
from .netmodel import NetworkCase, RepresentativeParams, build_laplacian

DEGENERATE_RTOL = 1e-12
EXACTNESS_RTOL = 1e-10


class Objective(enum.Enum):
    VARIANCE_OPTIMAL = "VarianceOptimal"
    NADIR_ELIMINATION = "NadirElimination"
    ZERO_SYNC_COST_LIMIT = "ZeroSyncCostLimit"


@dataclass(frozen=True)
class TuningRecommendation:
    controller: ControllerSpec
    objective: Objective
    notes: str = ""
    caps: dict = field(default_factory=dict)
    predicted: dict = field(default_factory=dict)


@dataclass(frozen=True)
class VarianceWindow:
    """Values of ``nu`` for which iDroop beats droop in frequency variance."""

    interval: Interval
    nu_star: float
    degenerate: bool = False


def _ratio(w: NoiseWeights) -> float:
    if not w.kappa_w > 0:
        raise ValidationError("variance-optimal tuning needs kappa_w > 0")
    return w.kappa_p / w.kappa_w


def droop_variance_optimal(rep: RepresentativeParams, w: NoiseWeights) -> float:
    """Droop gain minimising the frequency variance: ``-d + sqrt(d^2 + (kp/kw)^2)``."""
    k = _ratio(w)
    return -rep.d + math.hypot(rep.d, k)


def idroop_nu_star(rep: RepresentativeParams, w: NoiseWeights) -> float:
    """High-frequency gain ``nu`` minimising the iDroop variance in the ``delta -> 0`` limit."""
    return droop_variance_optimal(rep, w)


def alpha1(nu: float, rep: RepresentativeParams, w: NoiseWeights, r_r_inv: float) -> float:
    """Sign of this quantity is the sign of d(variance)/d(delta) for iDroop."""
    kp2, kw2 = w.kappa_p ** 2, w.kappa_w ** 2
    d = rep.d
    d_check = d + r_r_inv
    num = -d_check * kw2 * nu * nu + (kp2 + r_r_inv ** 2 * kw2) * nu + d * r_r_inv ** 2 * kw2 - r_r_inv * kp2
    return num / (d + nu)


def idroop_variance_window(rep: RepresentativeParams, w: NoiseWeights, r_r_inv: float) -> VarianceWindow:
    """Interval between ``r_r_inv`` (excluded) and ``nu*`` (included)."""
    k2 = _ratio(w) ** 2
    nu_star = idroop_nu_star(rep, w)
    target = 2.0 * r_r_inv * rep.d + r_r_inv ** 2
    if abs(k2 - target) <= DEGENERATE_RTOL * max(k2, target):
        return VarianceWindow(Interval.empty(), nu_star, degenerate=True)
    if nu_star > r_r_inv:
        iv = Interval(r_r_inv, nu_star, lo_closed=False, hi_closed=True)
    else:
        iv = Interval(nu_star, r_r_inv, lo_closed=True, hi_closed=False)
    return VarianceWindow(iv, nu_star)


def _assert_first_order(rep: RepresentativeParams, c: IDroop):
    h, _ = modal_closed_loop(generator_tf(rep, True), c, 0.0)
    num, den = h.to_polys()
    target = np.array([rep.m, rep.d + rep.r_r_inv + rep.r_t_inv])
    # num/den == 1/target  <=>  num * target == den
    lhs = np.polymul(num, target)
    lhs = np.concatenate([np.zeros(max(0, den.size - lhs.size)), lhs])
    rhs = np.concatenate([np.zeros(max(0, lhs.size - den.size)), den])
    scale = np.max(np.abs(rhs))
    if np.max(np.abs(lhs - rhs)) > EXACTNESS_RTOL * scale:
        raise NumericalError("Nadir tuning does not reduce the system-frequency loop to first order")


def idroop_nadir_tuning(rep: RepresentativeParams) -> TuningRecommendation:
    """``delta = 1/tau`` and ``nu = r_r_inv + r_t_inv``: the system frequency responds as a first-order lag."""
    if not rep.r_r_inv > 0:
        raise ValidationError("Nadir tuning needs a positive droop gain r_r_inv")
    c = IDroop(nu=rep.r_r_inv + rep.r_t_inv, delta=1.0 / rep.tau, r_r_inv=rep.r_r_inv)
    _assert_first_order(rep, c)
    notes = ("turbine lag cancelled by the inverter; system frequency follows "
             f"1/({rep.m!r} s + {rep.d + rep.r_r_inv + rep.r_t_inv!r})")
    return TuningRecommendation(c, Objective.NADIR_ELIMINATION, notes)


def idroop_variance_tuning(rep: RepresentativeParams, w: NoiseWeights, delta: float = 1e-6) -> TuningRecommendation:
    nu = idroop_nu_star(rep, w)
    c = IDroop(nu=nu, delta=delta, r_r_inv=rep.r_r_inv)
    notes = "variance decreases monotonically as delta -> 0 for nu in the window; small delta slows the response"
    return TuningRecommendation(c, Objective.VARIANCE_OPTIMAL, notes, caps={"delta": delta})


def idroop_zero_sync_cost(rep: RepresentativeParams, delta_floor: Optional[float] = None, nu_cap: float = 1e4,
                          case: Optional[NetworkCase] = None,
                          step: Optional[StepDisturbance] = None) -> TuningRecommendation:
    """Finite stand-in for the ``delta -> 0, nu -> inf`` limit in which synchronisation cost vanishes.

    ``delta_floor`` defaults to ``1e-3 / tau``.  When a case and step are
    given, the predicted cost bounds at the capped values are attached.
    """
    if delta_floor is None:
        delta_floor = 1e-3 / rep.tau
    if not (delta_floor > 0 and math.isfinite(nu_cap) and nu_cap > 0):
        raise ValidationError("need delta_floor > 0 and a finite positive nu_cap")
    c = IDroop(nu=nu_cap, delta=delta_floor, r_r_inv=rep.r_r_inv)
    predicted = {}
    if case is not None and step is not None:
        decomp = eigendecompose_scaled(build_laplacian(case), case.ratings)
        b = sync_cost_bounds(decomp, generator_tf(rep, True), c, step)
        predicted = {"sync_lower": b.lower, "sync_upper": b.upper}
    notes = ("the cost only vanishes in the limit; finite caps leave a small residual, "
             "and a tiny delta makes the return to the synchronous frequency slow")
    return TuningRecommendation(c, Objective.ZERO_SYNC_COST_LIMIT, notes,
                                caps={"delta_floor": delta_floor, "nu_cap": nu_cap}, predicted=predicted)
