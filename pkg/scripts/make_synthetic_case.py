"""Write a synthetic proportional network case (JSON) built from the reference representative machine.

    python3 scripts/make_synthetic_case.py --n 10 --seed 3 --out cases/ten_bus.json
    python3 scripts/make_synthetic_case.py --n 3 --ring --ratings 0.5,1,1.5 --out three_bus.json
"""
import argparse

import numpy as np

from gridfreq.netmodel import REFERENCE_PARAMS, make_proportional_case, random_connected_lines, save_case


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ring", action="store_true", help="ring topology with unit susceptances")
    p.add_argument("--ratings", help="comma-separated ratings (default: uniform in [0.5, 1.5], mean-normalised)")
    p.add_argument("--deadband", type=float, default=0.0, help="turbine deadband in rad/s")
    p.add_argument("--out", required=True)
    a = p.parse_args(argv)

    rng = np.random.default_rng(a.seed)
    if a.ratings:
        f = np.array([float(x) for x in a.ratings.split(",")])
        if f.size != a.n:
            p.error("--ratings must list one value per bus")
    else:
        f = rng.uniform(0.5, 1.5, a.n)
        f = f / f.mean()
    if a.ring:
        lines = [(i + 1, (i + 1) % a.n + 1, 1.0) for i in range(a.n)] if a.n > 2 else [(1, 2, 1.0)]
    else:
        lines = random_connected_lines(a.n, rng)
    case = make_proportional_case(REFERENCE_PARAMS, f, lines, deadband=a.deadband)
    save_case(case, a.out)
    print(f"wrote {a.out}: {case.n} buses, {len(case.lines)} lines")


if __name__ == "__main__":
    main()
