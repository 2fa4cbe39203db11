#!/usr/bin/env python3
"""Print tau, rho and sigma^2 for the vMF kernel and truth, with the extremal dimensions."""

import argparse
import sys

import numpy as np
from scipy.optimize import minimize_scalar

from vmfkde.asymptotics import asymptotics_table, rho_vmf


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kappa", type=float, default=10.0)
    ap.add_argument("--dmax", type=int, default=200)
    ap.add_argument("--show", type=int, default=12, help="rows to print")
    args = ap.parse_args(argv)

    rows = asymptotics_table(args.kappa, args.dmax)
    print(f"{'d':>4} {'tau':>11} {'rho':>11} {'sigma2':>11} {'beta_cv':>8}")
    for r in rows[:args.show]:
        print(f"{r['d']:>4} {r['tau']:>11.4e} {r['rho']:>11.4e} {r['sigma2']:>11.4e} {r['beta_cv']:>8.3f}")
    tau = np.array([r["tau"] for r in rows])
    s2 = np.array([r["sigma2"] for r in rows])
    print(f"argmax tau: d={int(np.argmax(tau)) + 1}")
    print(f"argmin sigma2 at kappa={args.kappa:g}: d={int(np.argmin(s2)) + 1}")
    res = minimize_scalar(lambda k: rho_vmf(1, k), bounds=(0.2, 5.0), method="bounded",
                          options={"xatol": 1e-10})
    print(f"circle: rho minimized at kappa={res.x:.4f}, "
          f"ratio to the kappa->inf limit {res.fun / (12 * np.pi ** 2) ** -0.2:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
