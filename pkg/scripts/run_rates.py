"""Run the rate experiments in an INI file and print fitted slopes next to their targets.

usage: python3 scripts/run_rates.py [configs/rates.ini] [--workers K] [--only NAME]
"""
import argparse
import time

from cmix import harness as hn


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("config", nargs="?", default="configs/rates.ini")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--only", default=None, help="run a single section")
    args = ap.parse_args()
    with open(args.config) as fh:
        exps = [(n, c) for n, k, c in hn.parse_experiments(fh.read()) if k == "rate"]
    for name, cfg in exps:
        if args.only and name != args.only:
            continue
        start = time.perf_counter()
        rep = hn.rate_experiment(cfg, workers=args.workers)
        secs = time.perf_counter() - start
        print(f"[{name}] slope {rep.slope:.4f} +/- {rep.slope_se:.4f}, target {rep.target_exponent:.4f}, "
              f"failed reps {sum(rep.failed_reps)}, {secs:.1f}s")
        for n, e, h in zip(rep.Ns, rep.median_sup_errors, rep.extra["bandwidths"]):
            print(f"  N={n:>6} h={h:.4f} median sup error={e:.5f}")


if __name__ == "__main__":
    main()
