#!/usr/bin/env python3
"""Inviscid damping fits on the free-transport oracle.

Measures the decay exponent of the interior stream function response for
smooth interior bump data (expected slope near -2) and the monotone
steepening obtained by paying extra vector-field regularity of the data.
"""

import argparse
import json

from couette_gevrey.harness import damping_suite


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--k", type=int, default=1)
    ap.add_argument("--ny", type=int, default=96)
    args = ap.parse_args()
    out = damping_suite(k=args.k, ny=args.ny)
    print(json.dumps(out, sort_keys=True, indent=1))


if __name__ == "__main__":
    main()
