"""Tabulate the geometric, Hang-Steinwart and algebraic bounds over an (N, t) grid.

usage: python3 scripts/compare_bounds.py [--A 1] [--B 6.283] [--sigma2 0.5] [--omega 2] [--b 2]
"""
import argparse

import numpy as np

from cmix import bounds as bd


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--A", type=float, default=1.0)
    ap.add_argument("--B", type=float, default=2 * np.pi)
    ap.add_argument("--sigma2", type=float, default=0.5)
    ap.add_argument("--omega", type=float, default=2.0)
    ap.add_argument("--b", type=float, default=2.0)
    ap.add_argument("--gamma", type=float, default=1.0)
    args = ap.parse_args()
    cb = bd.ClassBounds(args.A, args.B, args.sigma2)
    print(f"N0: geometric {bd.geometric_n0(cb, args.omega)}, "
          f"hang-steinwart {bd.hang_steinwart_n0(cb, args.b, args.gamma)}")
    print(f"{'N':>8} {'t':>6} {'geometric':>10} {'hs':>10} {'algebraic':>10} {'exp ratio':>10}")
    for N in (10 ** 3, 10 ** 4, 10 ** 5, 10 ** 6):
        for t in (0.01, 0.05, 0.1, 0.2):
            g = bd.geometric_bound_1d(N, t, args.b, args.gamma, cb, args.omega)
            h = bd.hang_steinwart_bound(N, t, args.b, args.gamma, cb)
            a = bd.algebraic_bound_1d(N, t, args.b, args.gamma, cb)
            print(f"{N:>8} {t:>6.2f} {g.bound:>10.3g} {h.bound:>10.3g} {a.bound:>10.3g} {g.exponent / h.exponent:>10.3f}")


if __name__ == "__main__":
    main()
