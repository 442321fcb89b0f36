#!/usr/bin/env python3
"""Exterior smallness trend of the stream function decomposition.

For interior-supported data evolved to t = nu^(-1/3)/2, the exterior
J_ell functionals of phi_E shrink rapidly as nu decreases (the forcing
that reaches the chi~_1 region is a diffusive tail).
"""

import argparse
import json
import math

from couette_gevrey.harness import ExperimentConfig, decompose_suite


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--ny", type=int, default=128)
    ap.add_argument("--kmax", type=int, default=4)
    ap.add_argument("--nu", type=float, action="append")
    args = ap.parse_args()
    nus = args.nu or [1e-3, 1e-4]
    rows = []
    for nu in nus:
        cfg = ExperimentConfig(ny=args.ny, kmax=args.kmax, nu=(nu,), truncation_m=4)
        out = decompose_suite(cfg, nu=nu, t_stop=nu ** (-1 / 3) / 2.0)
        rows.append(
            {
                "nu": nu,
                "t": out["t"],
                "J_ell_1": out["functionals"]["J_ell_1"],
                "log_J_ell_1": math.log(out["functionals"]["J_ell_1"])
                if out["functionals"]["J_ell_1"] > 0
                else None,
                "sum_residuals": out["sum_residuals"],
            }
        )
        print(json.dumps(rows[-1], sort_keys=True))
    if len(rows) >= 2:
        decreasing = all(
            rows[i + 1]["J_ell_1"] < rows[i]["J_ell_1"] for i in range(len(rows) - 1)
        )
        print(json.dumps({"log_trend_decreasing": decreasing}))


if __name__ == "__main__":
    main()
