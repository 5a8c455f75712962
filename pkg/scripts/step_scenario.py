"""Step scenario: a -0.3 p.u. power drop at one bus under droop, virtual inertia and Nadir-tuned iDroop.

Prints analytic vs simulated synchronous frequency, Nadir, overshoot, effort
share and synchronisation cost, and writes one trace CSV per controller.

    python3 scripts/step_scenario.py --out out/step
    python3 scripts/step_scenario.py --deadband 0.226 --out out/step_db
"""
import argparse

import numpy as np

from gridfreq.lti import Droop, VirtualInertia, per_bus_controllers
from gridfreq.metrics import StepDisturbance, analytic_report
from gridfreq.simulate import SimConfig, empirical_metrics, simulate_step, write_trace_csv
from gridfreq.tuning import idroop_nadir_tuning

from _common import add_case_args, case_from_args, outdir, print_table


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    add_case_args(p)
    p.add_argument("--bus", type=int, default=1, help="0-based index of the bus losing power")
    p.add_argument("--size", type=float, default=-0.3)
    p.add_argument("--mv", type=float, default=None, help="virtual inertia (default: 2 m)")
    p.add_argument("--deadband", type=float, default=0.0, help="turbine deadband in rad/s")
    p.add_argument("--horizon", type=float, default=60.0)
    p.add_argument("--dt", type=float, default=1e-3)
    a = p.parse_args(argv)

    case = case_from_args(a)
    rep = case.representative
    out = outdir(a)
    u0 = np.zeros(case.n)
    u0[a.bus] = a.size
    step = StepDisturbance(u0, 1.0)
    laws = {
        "droop": Droop(rep.r_r_inv),
        "vi": VirtualInertia(2 * rep.m if a.mv is None else a.mv, rep.r_r_inv),
        "idroop": idroop_nadir_tuning(rep).controller,
    }
    cfg = SimConfig(dt=a.dt, horizon=a.horizon, record_stride=10)
    rows = []
    for name, c in laws.items():
        ref = analytic_report(case, c, step)
        tr = simulate_step(case, per_bus_controllers(case.ratings, c), step, cfg)
        emp = empirical_metrics(tr)
        write_trace_csv(tr, out / f"trace_step_{name}.csv")
        rows.append([name] + [f"{x:.5g}" for x in (ref.omega_syn, emp.omega_syn, ref.nadir_value, emp.nadir_value,
                                                   emp.overshoot / abs(emp.omega_syn), ref.es, emp.es,
                                                   ref.sync_exact, emp.sync_exact)])
    print(f"{case.n}-bus case, step {a.size} at bus {case.ids[a.bus]}, deadband {a.deadband}")
    print_table(["law", "w_syn", "w_syn(sim)", "nadir", "nadir(sim)", "overshoot/|w_syn|(sim)", "ES", "ES(sim)",
                 "sync", "sync(sim)"], rows)


if __name__ == "__main__":
    main()
