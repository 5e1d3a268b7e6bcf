"""Run the tail experiments in an INI file and print a per-(N, t) table.

usage: python3 scripts/run_tail.py [configs/tail.ini] [--workers K]
"""
import argparse

from cmix import harness as hn


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("config", nargs="?", default="configs/tail.ini")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    with open(args.config) as fh:
        exps = [(n, e) for n, k, e in hn.parse_experiments(fh.read()) if k == "tail"]
    for name, exp in exps:
        rows = hn.bound_comparison(exp, workers=args.workers)
        print(f"[{name}] process={exp.process} statistic={exp.statistic} reps={exp.reps}")
        print(f"{'N':>6} {'t':>6} {'empirical':>10} {'ci_hi':>8} {'geometric':>10} {'hs':>8} {'algebraic':>10} sound")
        for r in rows:
            print(f"{r['N']:>6} {r['t']:>6.3f} {r['p']:>10.4f} {r['ci_hi']:>8.4f} {r['geometric']:>10.4f} "
                  f"{r['hang_steinwart']:>8.4f} {r['algebraic']:>10.4f} {r['sound']}")
        print(f"all sound: {all(r['sound'] for r in rows)}\n")


if __name__ == "__main__":
    main()
