"""Acceptance gate: one PASS/FAIL line per criterion, printed in the terminal summary."""
import math
import time
from dataclasses import replace

import numpy as np
import pytest

from gridfreq.h2core import H2Reason, NoiseWeights, frequency_variance, h2_closed_form, h2_lyapunov_oracle
from gridfreq.lti import (Droop, IDroop, NoControl, VirtualInertia, assemble_full_state_space, eigendecompose_scaled,
                          generator_tf, make_controller, modal_transfer, per_bus_controllers, realize)
from gridfreq.metrics import (SecondOrderForm, StepDisturbance, nadir_empirical, nadir_exists_second_order,
                              second_order_first_overshoot, steady_state_effort_share, sync_cost_bounds,
                              sync_cost_exact, synchronous_frequency)
from gridfreq.netmodel import REFERENCE_PARAMS, RepresentativeParams, build_laplacian
from gridfreq.simulate import SimConfig, simulate_step, stochastic_variance
from gridfreq.tuning import idroop_nadir_tuning, idroop_nu_star

from conftest import ACCEPTANCE, random_proportional_case, random_stable_tf, two_bus_unit_case


def record(num, title, ok, detail):
    ACCEPTANCE.append((num, title, bool(ok), detail))
    assert ok, f"criterion {num} ({title}) failed: {detail}"


def decomp_of(case):
    return eigendecompose_scaled(build_laplacian(case), case.ratings)


def test_01_h2_closed_form_vs_lyapunov():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(1000):
        h = random_stable_tf(rng, 1 + i % 4)
        a, b = h2_closed_form(h).value, h2_lyapunov_oracle(realize(h)).value
        worst = max(worst, abs(a - b) / max(1.0, b))
    elapsed = time.perf_counter() - t0
    record(1, "H2 closed form vs Lyapunov, 1000 TFs", worst <= 1e-8 and elapsed < 10.0,
           f"worst scaled error {worst:.2e} (tol 1e-8), {elapsed:.2f} s (limit 10 s)")


@pytest.mark.slow
def test_02_droop_variance_monte_carlo():
    case = two_bus_unit_case()
    c = Droop(0.5)
    w = NoiseWeights(1.0, 0.0)
    closed = frequency_variance(decomp_of(case), generator_tf(case.representative, False), c, w).value
    t0 = time.perf_counter()
    runs = stochastic_variance(case, per_bus_controllers(case.ratings, c), w,
                               SimConfig(dt=1e-2, horizon=2000.0, seed=0, method="em"), runs=10, burn_in=20.0)
    elapsed = time.perf_counter() - t0
    est = float(runs.mean())
    err = abs(est - 1.0)
    record(2, "droop variance, 2-bus closed form and Monte Carlo",
           closed == 1.0 and err < 0.05 and elapsed < 60.0,
           f"closed form {closed!r}, 10-seed estimate {est:.4f} (error {err:.1%}, tol 5%), {elapsed:.1f} s")


@pytest.mark.slow
def test_03_vi_variance_unbounded():
    case = two_bus_unit_case()
    c = VirtualInertia(1.0, 0.5)
    w = NoiseWeights(1.0, 1.0)
    res = frequency_variance(decomp_of(case), generator_tf(case.representative, False), c, w)
    ctrls = per_bus_controllers(case.ratings, c)
    est = []
    for dt in (0.04, 0.02, 0.01, 0.005):
        cfg = SimConfig(dt=dt, horizon=200.0, seed=1, method="em")
        est.append(float(stochastic_variance(case, ctrls, w, cfg, runs=4, burn_in=10.0,
                                             allow_vi_noise=True).mean()))
    growing = all(b > a for a, b in zip(est, est[1:]))
    record(3, "VI variance unbounded", res.reason is H2Reason.NONZERO_FEEDTHROUGH and growing,
           f"closed form {res.reason.value}; simulated variance at dt 0.04..0.005: "
           + ", ".join(f"{v:.3g}" for v in est))


@pytest.mark.slow
def test_04_second_order_nadir_sweep():
    xis = np.linspace(0.05, 3.0, 20)
    rhos = np.geomspace(0.1, 10.0, 20)
    wns = np.geomspace(0.1, 10.0, 20)
    band = 1e-3
    t0 = time.perf_counter()
    checked = skipped = disagree = 0
    for xi in xis:
        for rho in rhos:
            edges = (xi - 1.0, xi - rho, xi - 0.5 * (rho + 1.0 / rho))
            if min(abs(e) for e in edges) < band:
                skipped += wns.size
                continue
            # the normalised response does not depend on wn; only the scan horizon does
            horizons = 50.0 * wns / (xi * wns + 0.01)
            t_hit = second_order_first_overshoot(xi, rho, float(horizons.max()))
            for wn, hz in zip(wns, horizons):
                pred = nadir_exists_second_order(SecondOrderForm(K=1.0, z=rho * wn, xi=xi, wn=wn))
                disagree += pred != (t_hit <= hz)
                checked += 1
    elapsed = time.perf_counter() - t0
    record(4, "second-order Nadir predicate vs brute force",
           disagree == 0 and checked + skipped == 8000 and elapsed < 300.0,
           f"{disagree} disagreements over {checked} points ({skipped} in boundary bands), {elapsed:.1f} s")


@pytest.mark.slow
def test_05_nadir_elimination(ten_bus):
    case = ten_bus
    rep = case.representative
    assert (rep.m, rep.d, rep.tau, rep.r_t, rep.r_r) == (0.0111, 0.0014, 4.59, 748.97, 748.97)
    assert not np.any(case.deadband)
    u0 = np.zeros(case.n)
    u0[1] = -0.3
    step = StepDisturbance(u0, 1.0)
    cfg = SimConfig(dt=1e-3, horizon=60.0)
    tuned = idroop_nadir_tuning(rep).controller
    laws = {"iDroop(delta=1/tau)": tuned,
            "iDroop(delta=0.2179)": IDroop(nu=rep.r_r_inv + rep.r_t_inv, delta=0.2179, r_r_inv=rep.r_r_inv),
            "Droop": Droop(rep.r_r_inv)}
    rel = {}
    for name, c in laws.items():
        ctrls = per_bus_controllers(case.ratings, c)
        w_syn = synchronous_frequency(case, ctrls, step)
        tr = simulate_step(case, ctrls, step, cfg)
        rel[name] = nadir_empirical(tr.times, tr.omega_bar, w_syn).overshoot / abs(w_syn)
    ok = (round(tuned.delta, 4) == 0.2179 and rel["iDroop(delta=1/tau)"] < 1e-4
          and rel["iDroop(delta=0.2179)"] < 1e-4 and rel["Droop"] > 0.05)
    record(5, "Nadir elimination on 10-bus case", ok,
           "; ".join(f"{k} overshoot {v:.2e}|w_syn|" for k, v in rel.items())
           + " (iDroop tol 1e-4, droop > 5e-2)")


def test_06_effort_share_invariance(ten_bus):
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(50):
        case = random_proportional_case(rng)
        rr = float(10 ** rng.uniform(-4, 0))
        laws = (Droop(rr), VirtualInertia(float(10 ** rng.uniform(-3, 0)), rr),
                IDroop(nu=float(10 ** rng.uniform(-3, 2)), delta=float(10 ** rng.uniform(-3, 1)), r_r_inv=rr))
        es = [steady_state_effort_share(case, per_bus_controllers(case.ratings, c)) for c in laws]
        worst = max(worst, (max(es) - min(es)) / es[0])
    table = steady_state_effort_share(ten_bus, per_bus_controllers(ten_bus.ratings, Droop(REFERENCE_PARAMS.r_r_inv)))
    record(6, "effort share invariance", worst <= 4e-16 and abs(table - 0.3280) <= 1e-4,
           f"worst relative spread {worst:.1e} over 50 cases; reference case ES {table:.6f} (0.3280 +/- 1e-4)")


def test_07_optimal_nu_and_window():
    rep = RepresentativeParams(m=REFERENCE_PARAMS.m, d=0.0014, tau=REFERENCE_PARAMS.tau, r_t=math.inf, r_r=REFERENCE_PARAMS.r_r)
    w = NoiseWeights(1e-4, 1e-5)
    nu = idroop_nu_star(rep, w)
    rng = np.random.default_rng(7)
    wins = 0
    for _ in range(20):
        case = random_proportional_case(rng)
        rr = float(10 ** rng.uniform(-4, 1))
        r = replace(rep, r_r=1.0 / rr)
        g = generator_tf(r, False)
        d = decomp_of(case)
        v_id = frequency_variance(d, g, IDroop(nu=idroop_nu_star(r, w), delta=0.01, r_r_inv=rr), w).value
        v_dc = frequency_variance(d, g, Droop(rr), w).value
        wins += v_id < v_dc
    record(7, "optimal nu and variance window", abs(nu - 9.9986) <= 1e-4 and wins == 20,
           f"nu* = {nu:.6f} (9.9986 +/- 1e-4); iDroop beats droop in {wins}/20 draws")


def test_08_sync_cost_bounds_and_ordering():
    rng = np.random.default_rng(8)
    g = generator_tf(REFERENCE_PARAMS, True)
    inside = 0
    for i in range(50):
        case = random_proportional_case(rng)
        c = make_controller(("droop", "vi", "idroop")[i % 3], r_r_inv=REFERENCE_PARAMS.r_r_inv,
                            m_v=float(10 ** rng.uniform(-3, -1)), nu=float(10 ** rng.uniform(-3, 1)),
                            delta=float(10 ** rng.uniform(-2, 1)))
        step = StepDisturbance(rng.uniform(-0.5, 0.5, case.n))
        d = decomp_of(case)
        b = sync_cost_bounds(d, g, c, step)
        x = sync_cost_exact(d, g, c, step)
        inside += b.lower * (1 - 1e-12) <= x <= b.upper * (1 + 1e-12)
    ordered = 0
    for _ in range(20):
        case = random_proportional_case(rng, homogeneous=True)
        step = StepDisturbance(rng.uniform(-0.5, 0.5, case.n))
        d = decomp_of(case)
        sw, dc, vi = (sync_cost_exact(d, g, c, step) for c in
                      (NoControl(), Droop(REFERENCE_PARAMS.r_r_inv), VirtualInertia(2 * REFERENCE_PARAMS.m, REFERENCE_PARAMS.r_r_inv)))
        ordered += vi < dc < sw
    record(8, "sync cost bounds and VI < DC < SW ordering", inside == 50 and ordered == 20,
           f"exact cost inside bounds {inside}/50; homogeneous ordering holds {ordered}/20")


def test_09_zero_sync_cost_limit(three_bus_homogeneous):
    case = three_bus_homogeneous
    d = decomp_of(case)
    g = generator_tf(REFERENCE_PARAMS, True)
    step = StepDisturbance([0.0, -0.3, 0.0])
    base = sync_cost_exact(d, g, Droop(REFERENCE_PARAMS.r_r_inv), step)
    lim = sync_cost_exact(d, g, IDroop(nu=1e4, delta=1e-4, r_r_inv=REFERENCE_PARAMS.r_r_inv), step)
    record(9, "iDroop zero sync cost limit", lim < 1e-4 * base,
           f"cost ratio {lim / base:.2e} (tol 1e-4)")


def test_10_full_vs_modal():
    rng = np.random.default_rng(10)
    worst = 0.0
    for i in range(20):
        case = random_proportional_case(rng)
        rep = case.representative
        kind = ("none", "droop", "vi", "idroop")[i % 4]
        turbine = bool(i % 2)
        c = make_controller(kind, r_r_inv=rep.r_r_inv, m_v=float(10 ** rng.uniform(-3, -1)),
                            nu=float(10 ** rng.uniform(-3, 1)), delta=float(10 ** rng.uniform(-2, 1)))
        w = NoiseWeights(*(float(x) for x in 10 ** rng.uniform(-2, 0, 2)))
        ss = assemble_full_state_space(case, per_bus_controllers(case.ratings, c), noise=w, turbine=turbine)
        s = 1j * 10 ** rng.uniform(-3, 3, 25)
        T = ss.freq_response(s)
        blocks = modal_transfer(decomp_of(case), generator_tf(rep, turbine), c, s, w.kappa_p, w.kappa_w)
        n = case.n
        for j, modal in enumerate(blocks):
            full = T[:, :, j * n:(j + 1) * n]
            scale = np.max(np.abs(modal))
            # the measurement-noise block vanishes without an inverter; then it must vanish in both
            gap = np.max(np.abs(full - modal)) / scale if scale > 0 else np.max(np.abs(full)) / 1e-300
            worst = max(worst, float(gap))
    record(10, "full vs modal frequency response", worst <= 1e-8,
           f"worst relative mismatch {worst:.2e} over 20 cases (tol 1e-8)")
