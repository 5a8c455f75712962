import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridfreq.errors import DegenerateError, NotSettledError, ValidationError
from gridfreq.h2core import NoiseWeights, h2_closed_form
from gridfreq.lti import (Droop, IDroop, NoControl, VirtualInertia, eigendecompose_scaled, generator_tf,
                          make_controller, modal_step_tf, per_bus_controllers)
from gridfreq.metrics import (Interval, MetricsReport, SecondOrderForm, StepDisturbance, analytic_report,
                              nadir_analytic, nadir_empirical, nadir_exists_second_order, nadir_region_droop,
                              nadir_region_vi, second_order_first_overshoot, second_order_nadir_brute_force,
                              steady_state_effort_share, sync_cost_bounds, sync_cost_exact,
                              synchronous_frequency)
from gridfreq.netmodel import (REFERENCE_PARAMS, Bus, GeneratorParams, Line, NetworkCase, RepresentativeParams,
                               build_laplacian)

from conftest import random_proportional_case, random_rep


def _decomp(case):
    return eigendecompose_scaled(build_laplacian(case), case.ratings)


def _unit_three_bus():
    gen = GeneratorParams(m=1.0, d=1.0, tau=1.0, r_t_inv=1.0)
    rep = RepresentativeParams(m=1.0, d=1.0, tau=1.0, r_t=1.0, r_r=1.0)
    buses = [Bus(i, gen, rating=1.0) for i in (1, 2, 3)]
    return NetworkCase(buses, [Line(1, 2, 1.0), Line(2, 3, 1.0)], rep)


# --- steady state --------------------------------------------------------------

def test_synchronous_frequency_examples():
    case = _unit_three_bus()
    ctrls = [Droop(1.0)] * 3
    assert synchronous_frequency(case, ctrls, StepDisturbance(np.zeros(3))) == 0.0
    assert synchronous_frequency(case, ctrls, StepDisturbance([1.0, 2.0, 3.0])) == pytest.approx(6 / 9)


@pytest.mark.parametrize("c", [VirtualInertia(0.3, 1.0), IDroop(nu=5.0, delta=0.2, r_r_inv=1.0)])
def test_synchronous_frequency_same_for_all_laws(c):
    case = _unit_three_bus()
    step = StepDisturbance([1.0, -0.5, 3.0])
    assert synchronous_frequency(case, [c] * 3, step) == synchronous_frequency(case, [Droop(1.0)] * 3, step)


def test_degenerate_denominator():
    gen = GeneratorParams(m=1.0, d=1e-300, tau=1.0, r_t_inv=0.0)
    case = NetworkCase([Bus(1, gen, rating=1.0)], [], REFERENCE_PARAMS)
    # d > 0 always keeps the denominator positive; a positive controller dc gain can cancel it
    class Destabilising:
        def dc_gain(self):
            return 1.0
    with pytest.raises(DegenerateError):
        steady_state_effort_share(case, [Destabilising()])


def test_step_length_mismatch(three_bus):
    with pytest.raises(ValidationError):
        synchronous_frequency(three_bus, [NoControl()] * 3, StepDisturbance([1.0, 2.0]))


def test_step_validation():
    with pytest.raises(ValidationError):
        StepDisturbance([1.0, math.nan])


def test_es_examples(three_bus):
    assert steady_state_effort_share(three_bus, [NoControl()] * 3) == 0.0
    ctrls = per_bus_controllers(three_bus.ratings, Droop(REFERENCE_PARAMS.r_r_inv))
    assert steady_state_effort_share(three_bus, ctrls) == pytest.approx(0.0013352 / 0.0040704, abs=1e-4)
    assert steady_state_effort_share(three_bus, ctrls) == pytest.approx(0.3280, abs=1e-4)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_es_invariance(seed):
    rng = np.random.default_rng(seed)
    case = random_proportional_case(rng, rep=random_rep(rng))
    r = case.representative.r_r_inv
    laws = [Droop(r), VirtualInertia(float(rng.uniform(1e-3, 1)), r),
            IDroop(nu=float(rng.uniform(1e-3, 10)), delta=float(rng.uniform(1e-3, 10)), r_r_inv=r)]
    es = [steady_state_effort_share(case, per_bus_controllers(case.ratings, c)) for c in laws]
    assert es[0] == es[1] == es[2]


# --- synchronization cost -----------------------------------------------------------

def test_homogeneous_bounds_coincide(three_bus_homogeneous):
    case = three_bus_homogeneous
    step = StepDisturbance([0.0, -0.3, 0.0])
    g = generator_tf(case.representative, True)
    for c in (Droop(REFERENCE_PARAMS.r_r_inv), VirtualInertia(0.022, REFERENCE_PARAMS.r_r_inv)):
        b = sync_cost_bounds(_decomp(case), g, c, step)
        assert b.lower == b.upper == b.exact
        assert sync_cost_exact(_decomp(case), g, c, step) == pytest.approx(b.exact, rel=1e-9)


def test_idroop_limit_kills_sync_cost(three_bus_homogeneous):
    case = three_bus_homogeneous
    step = StepDisturbance([0.0, -0.3, 0.0])
    g = generator_tf(case.representative, True)
    droop = sync_cost_bounds(_decomp(case), g, Droop(REFERENCE_PARAMS.r_r_inv), step).upper
    idr = sync_cost_bounds(_decomp(case), g, IDroop(nu=1e6, delta=1e-6, r_r_inv=REFERENCE_PARAMS.r_r_inv), step).upper
    assert 0 < idr < 1e-6 * droop


def vi_step_norm_oracle(rep, mv, r, lam):
    mc, dc, rt, tau = rep.m + mv, rep.d + r, rep.r_t_inv, rep.tau
    return (mc + tau * (lam * tau + dc)) / (2 * lam * (tau * dc * (lam * tau + dc + rt) + mc * (dc + rt)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_vi_step_norm_formula(seed):
    rng = np.random.default_rng(seed)
    rep = random_rep(rng)
    mv, lam = float(10 ** rng.uniform(-3, 0)), float(10 ** rng.uniform(-2, 2))
    h = modal_step_tf(generator_tf(rep, True), VirtualInertia(mv, rep.r_r_inv), lam)
    assert h2_closed_form(h).value == pytest.approx(vi_step_norm_oracle(rep, mv, rep.r_r_inv, lam), rel=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_step_norm_ordering(seed):
    rng = np.random.default_rng(seed)
    rep = random_rep(rng)
    mv, lam = float(10 ** rng.uniform(-3, 0)), float(10 ** rng.uniform(-2, 2))
    g = generator_tf(rep, True)
    r = rep.r_r_inv
    norm = lambda c: h2_closed_form(modal_step_tf(g, c, lam)).value
    vi, dc, sw = norm(VirtualInertia(mv, r)), norm(Droop(r)), norm(NoControl())
    floor = 1 / (2 * lam * (rep.d + r + rep.r_t_inv))
    assert floor < vi < dc < sw


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_vi_step_norm_decreases_in_gains(seed):
    rng = np.random.default_rng(seed)
    rep = random_rep(rng)
    mv, r, lam = float(10 ** rng.uniform(-3, 0)), rep.r_r_inv, float(10 ** rng.uniform(-2, 2))
    g = generator_tf(rep, True)
    norm = lambda mv_, r_: h2_closed_form(modal_step_tf(g, VirtualInertia(mv_, r_), lam)).value
    base = norm(mv, r)
    assert norm(mv * 1.01, r) < base
    assert norm(mv, r * 1.01) < base


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["none", "droop", "vi", "idroop"]))
def test_exact_within_bounds(seed, kind):
    rng = np.random.default_rng(seed)
    case = random_proportional_case(rng)
    rep = case.representative
    c = make_controller(kind, r_r_inv=rep.r_r_inv, m_v=float(rng.uniform(1e-3, 0.1)),
                        nu=float(rng.uniform(1e-3, 1)), delta=float(rng.uniform(1e-2, 1)))
    step = StepDisturbance(rng.normal(size=case.n))
    dec, g = _decomp(case), generator_tf(rep, True)
    b = sync_cost_bounds(dec, g, c, step)
    exact = sync_cost_exact(dec, g, c, step)
    assert b.lower <= b.upper
    assert b.lower * (1 - 1e-9) <= exact <= b.upper * (1 + 1e-9)


def test_pure_mode_one_step_has_no_sync_cost(three_bus):
    step = StepDisturbance(-0.3 * three_bus.ratings)
    dec, g = _decomp(three_bus), generator_tf(REFERENCE_PARAMS, True)
    c = Droop(REFERENCE_PARAMS.r_r_inv)
    assert sync_cost_exact(dec, g, c, step) < 1e-25
    assert sync_cost_bounds(dec, g, c, step).upper < 1e-25


def test_homogeneous_sync_ordering(three_bus_homogeneous):
    case = three_bus_homogeneous
    step = StepDisturbance([0.0, -0.3, 0.0])
    dec, g, r = _decomp(case), generator_tf(REFERENCE_PARAMS, True), REFERENCE_PARAMS.r_r_inv
    vi, dc, sw = (sync_cost_exact(dec, g, c, step) for c in (VirtualInertia(0.022, r), Droop(r), NoControl()))
    assert vi < dc < sw


# --- Nadir: second-order predicate -------------------------------------------------

@pytest.mark.parametrize("xi,rho,exists", [
    (1.0, 1.0, False),
    (0.8, 0.3, True), (0.8, 5.0, True),
    (2.0, 0.5, False),
    (1.1, 0.5, True),      # 1.1 < (0.5 + 2)/2
    (1.2, 3.0, False),
    (0.0, 1.0, True),
])
def test_nadir_predicate_examples(xi, rho, exists):
    f = SecondOrderForm(K=1.0, z=rho * 2.0, xi=xi, wn=2.0)
    assert nadir_exists_second_order(f) is exists
    if xi > 0:
        assert second_order_nadir_brute_force(f) is exists


def test_nadir_predicate_ignores_gain_sign():
    assert nadir_exists_second_order(SecondOrderForm(-3.0, 1.0, 0.5, 1.0))


def test_second_order_form_validation():
    with pytest.raises(ValidationError):
        SecondOrderForm(1.0, 0.0, 1.0, 1.0)


@settings(max_examples=150, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(0.1, 3.0))
def test_nadir_predicate_matches_brute_force(xi, rho):
    boundaries = [xi - 1.0, xi - rho, xi - 0.5 * (rho + 1 / rho)]
    if min(abs(b) for b in boundaries) < 1e-3:
        return
    # just below critical damping the overshoot is ~exp(-pi xi / sqrt(1 - xi^2)), below double precision
    if xi < 1 and math.pi * xi / math.sqrt(1 - xi * xi) > 23:
        return
    f = SecondOrderForm(K=1.0, z=rho, xi=xi, wn=1.0)
    assert nadir_exists_second_order(f) == second_order_nadir_brute_force(f)


def test_first_overshoot_underdamped_time():
    # (s+rho)/(s^2 + 2 xi s + 1) with huge rho behaves like a pure second-order system
    xi = 0.5
    t = second_order_first_overshoot(xi, 1e6, 50.0, dt=1e-4)
    # crossing of the final value happens before the peak pi/sqrt(1 - xi^2)
    assert 0 < t < math.pi / math.sqrt(1 - xi ** 2)


# --- Nadir: tuning regions ------------------------------------------------------------

def test_droop_region_reference_params_empty():
    rhs = REFERENCE_PARAMS.m * (1 / REFERENCE_PARAMS.tau - 2 * math.sqrt(REFERENCE_PARAMS.r_t_inv / (REFERENCE_PARAMS.m * REFERENCE_PARAMS.tau))) - REFERENCE_PARAMS.d
    assert rhs == pytest.approx(-0.00258, abs=1e-5)
    assert nadir_region_droop(REFERENCE_PARAMS).is_empty


def test_droop_region_without_turbine_droop():
    rep = RepresentativeParams(m=0.5, d=0.01, tau=4.0, r_t=math.inf, r_r=1.0)
    iv = nadir_region_droop(rep)
    assert iv.hi == pytest.approx(0.5 / 4.0 - 0.01) and not iv.lo_closed and iv.hi_closed
    assert iv.hi in iv and 0.0 not in iv


def test_droop_region_heavy_inertia():
    rep = RepresentativeParams(m=REFERENCE_PARAMS.m * 100, d=REFERENCE_PARAMS.d, tau=REFERENCE_PARAMS.tau, r_t=REFERENCE_PARAMS.r_t, r_r=REFERENCE_PARAMS.r_r)
    assert not nadir_region_droop(rep).is_empty


def vi_threshold_oracle(rep, r):
    x2 = rep.tau * (math.sqrt(rep.r_t_inv) + math.sqrt(rep.r_t_inv + rep.d + r)) ** 2
    return max(0.0, x2 - rep.m)


def test_vi_region_reference_params():
    mv = nadir_region_vi(REFERENCE_PARAMS, REFERENCE_PARAMS.r_r_inv)
    assert mv == pytest.approx(0.0351, abs=1e-4)
    assert mv == pytest.approx(vi_threshold_oracle(REFERENCE_PARAMS, REFERENCE_PARAMS.r_r_inv), abs=2e-6)


def test_vi_region_without_turbine_or_damping():
    rep = RepresentativeParams(m=0.2, d=1e-300, tau=3.0, r_t=math.inf, r_r=1.0)
    for r in (0.01, 0.5):
        assert nadir_region_vi(rep, r) == pytest.approx(max(0.0, r * rep.tau - rep.m), abs=2e-6)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_vi_region_matches_oracle_and_droop(seed):
    rng = np.random.default_rng(seed)
    rep = random_rep(rng)
    r = float(10 ** rng.uniform(-4, -1))
    mv = nadir_region_vi(rep, r)
    assert mv == pytest.approx(vi_threshold_oracle(rep, r), abs=2e-6)
    # zero virtual inertia is enough exactly when droop alone is Nadir-free
    assert (mv == 0.0) == (r in nadir_region_droop(rep))


# --- Nadir: traces ------------------------------------------------------------------

def test_empirical_first_order():
    t = np.linspace(0, 30, 30001)
    w = -0.2 * (1 - np.exp(-t))
    rpt = nadir_empirical(t, w, -0.2 * (1 - math.exp(-30)))
    assert rpt.overshoot < 1e-6 * 0.2
    assert rpt.value == pytest.approx(0.2, rel=1e-12)


def test_empirical_constant_trace():
    rpt = nadir_empirical(np.linspace(0, 1, 11), np.full(11, -0.5))
    assert rpt.value == 0.5 and rpt.time == 0.0 and rpt.overshoot == 0.0


def test_empirical_underdamped():
    xi, wn = 0.5, 2.0
    wd = wn * math.sqrt(1 - xi ** 2)
    t = np.linspace(0, 20, 20001)
    y = 1 - np.exp(-xi * wn * t) * (np.cos(wd * t) + xi / math.sqrt(1 - xi ** 2) * np.sin(wd * t))
    rpt = nadir_empirical(t, y, 1.0)
    assert rpt.value > 1.0
    assert rpt.overshoot == pytest.approx(math.exp(-math.pi * xi / math.sqrt(1 - xi ** 2)), rel=1e-5)
    assert rpt.time == pytest.approx(math.pi / wd, abs=1e-3)


def test_empirical_not_settled():
    with pytest.raises(NotSettledError):
        nadir_empirical(np.linspace(0, 1, 11), np.linspace(0, 1, 11), omega_syn=2.0)


def test_analytic_nadir_droop_vs_tuned_idroop():
    total, sum_f = -0.3, 10.0
    droop = nadir_analytic(REFERENCE_PARAMS, Droop(REFERENCE_PARAMS.r_r_inv), total, sum_f)
    c = IDroop(nu=REFERENCE_PARAMS.r_r_inv + REFERENCE_PARAMS.r_t_inv, delta=1 / REFERENCE_PARAMS.tau, r_r_inv=REFERENCE_PARAMS.r_r_inv)
    idr = nadir_analytic(REFERENCE_PARAMS, c, total, sum_f)
    syn = abs(total / sum_f) / (REFERENCE_PARAMS.d + REFERENCE_PARAMS.r_t_inv + REFERENCE_PARAMS.r_r_inv)
    assert droop.overshoot > 0.05 * syn
    assert idr.overshoot < 1e-6 * syn


# --- reports ----------------------------------------------------------------------

def test_report_csv_layout():
    rpt = MetricsReport(omega_syn=-0.1, es=0.25, h2_total=math.inf, h2_per_mode=(math.inf, math.inf))
    header, row, _ = rpt.to_csv().split("\n")
    assert header.split(",")[:5] == ["omega_syn", "es", "h2_total", "h2_mode_1", "h2_mode_2"]
    assert row.split(",")[:3] == ["-0.1", "0.25", "inf"]
    assert header.endswith("overshoot")


def test_analytic_report_vi_noise_is_infinite(three_bus):
    rpt = analytic_report(three_bus, VirtualInertia(0.022, REFERENCE_PARAMS.r_r_inv), noise=NoiseWeights(1e-4, 1e-5))
    assert rpt.h2_total == math.inf
    assert "h2_total,inf" not in rpt.to_csv()  # header and row are separate lines
    assert rpt.to_csv().split("\n")[1].split(",")[2] == "inf"


def test_analytic_report_step(three_bus):
    step = StepDisturbance([0.0, -0.3, 0.0], time=1.0)
    rpt = analytic_report(three_bus, Droop(REFERENCE_PARAMS.r_r_inv), step=step)
    assert rpt.omega_syn == pytest.approx(-0.3 / (three_bus.ratings.sum() * 0.0040704), rel=1e-4)
    assert rpt.sync_lower <= rpt.sync_exact <= rpt.sync_upper
    assert rpt.nadir_time > 1.0 and rpt.overshoot > 0


def test_interval_membership():
    iv = Interval(0.0, 1.0, lo_closed=False)
    assert 0.0 not in iv and 1.0 in iv and 0.5 in iv
    assert Interval.empty().is_empty and 0.0 not in Interval.empty()
    assert Interval(1.0, 1.0, True, False).is_empty
