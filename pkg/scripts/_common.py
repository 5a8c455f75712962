"""Shared helpers for the scenario scripts."""
from pathlib import Path

import numpy as np

from gridfreq.netmodel import REFERENCE_PARAMS, load_case, make_proportional_case, random_connected_lines


def case_from_args(a):
    """Case file if given, otherwise a seeded synthetic proportional network with reference machines."""
    if a.case:
        case = load_case(a.case)
    else:
        rng = np.random.default_rng(a.seed)
        f = rng.uniform(0.5, 1.5, a.n)
        case = make_proportional_case(REFERENCE_PARAMS, f / f.mean(), random_connected_lines(a.n, rng))
    if getattr(a, "deadband", None):
        case = case.with_deadband(a.deadband)
    return case


def add_case_args(p):
    p.add_argument("--case", help="case JSON (default: synthetic proportional network)")
    p.add_argument("--n", type=int, default=10, help="buses in the synthetic network")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out", help="directory for CSV output")


def outdir(a) -> Path:
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def print_table(header, rows):
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(header)]
    print("  ".join(h.rjust(w) for h, w in zip(header, widths)))
    for r in rows:
        print("  ".join(v.rjust(w) for v, w in zip(r, widths)))
