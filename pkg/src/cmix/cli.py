"""Command-line entry point: ``cmix <subcommand> [options]``.

Exit codes: 0 success, 1 runtime error (one-line diagnostic on stderr),
2 usage error.  Outputs are written atomically; the resolved configuration is
echoed to stderr and, when ``--out`` is given, to ``<out>.meta.json``.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import secrets
import sys
import tempfile
from dataclasses import asdict

import numpy as np

from . import bounds as bd
from . import empirical_process as ep
from . import harness as hz
from . import processes as pr
from . import smoothers as sm

SEED_ENV = "CMIX_SEED"


# -- output helpers -----------------------------------------------------------

def atomic_write(path, text):
    """Write via a temp file in the target directory, then rename over ``path``."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _num(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def rows_to_csv(rows):
    if not rows:
        return ""
    cols = list(rows[0].keys())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_num(r[c]) if not isinstance(r[c], (dict, list, tuple)) else pr.dumps_json(r[c]) for c in cols])
    return buf.getvalue()


def rows_to_jsonl(rows):
    return "".join(pr.dumps_json(r) + "\n" for r in rows)


def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def render(rows, fmt):
    if fmt == "jsonl":
        return rows_to_jsonl(rows)
    return rows_to_csv([_flatten(r) for r in rows])


def emit(args, text, config):
    print("config: " + pr.dumps_json(config), file=sys.stderr)
    if args.out:
        atomic_write(args.out, text)
        atomic_write(args.out + ".meta.json", pr.dumps_json(config) + "\n")
    else:
        sys.stdout.write(text)


def resolve_seed(args):
    """Explicit --seed, else $CMIX_SEED, else fresh entropy (echoed)."""
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ValueError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    seed = secrets.randbits(63)
    print(f"seed: {seed}", file=sys.stderr)
    return seed


def _config(args, **extra):
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "workers")}
    cfg.update(extra)
    return cfg


def _int_list(text):
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return tuple(vals)


def _float_list(text):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return tuple(vals)


def _bandwidth(text):
    if text in ("optimal", "geometric"):
        return text
    if text.startswith("value:"):
        try:
            if float(text[6:]) > 0:
                return text
        except ValueError:
            pass
    raise argparse.ArgumentTypeError(f"expected optimal, geometric or value:<x> with x > 0, got {text!r}")


# -- subcommands --------------------------------------------------------------

def cmd_simulate(args):
    seed = resolve_seed(args)
    if args.process == "lattice":
        if args.nk is None:
            raise ValueError("--nk is required for the lattice process")
        grid = pr.SampleGrid(args.d or len(args.nk), len(args.nk), args.n0, args.nk)
        series = pr.simulate_lattice_field(grid, args.R, seed)
    else:
        if args.N is None:
            raise ValueError("--N is required")
        series = pr.simulate(args.process, args.N, seed)
    if args.mean_fn or args.mode_center:
        if args.process == "lattice":
            raise ValueError("regression responses need a process on [0,1]")
        yseed = hz.rep_seed(seed, 2)
        if args.mode_center:
            ds = pr.make_modal_dataset(series, args.mode_center, yseed)
        else:
            ds = pr.make_regression_dataset(series, args.mean_fn, args.sigma_fn, args.L, yseed)
        x, y, side = ds.x, ds.y, pr.dataset_sidecar(ds)
    else:
        x, y, side = series.values, None, pr.series_sidecar(series)
    if args.format == "csv":
        text = pr.format_csv(x, y)
    else:
        rows = [{"index": i + 1, "x_1": float(x[i]), **({"y": float(y[i])} if y is not None else {})}
                for i in range(len(x))]
        text = rows_to_jsonl(rows)
    cfg = _config(args, seed=seed, sidecar=side)
    emit(args, text, cfg)
    if args.out:
        atomic_write(args.out + ".json", pr.dumps_json(side) + "\n")
    return 0


def _class_bounds(args):
    return bd.ClassBounds(args.A, args.B, args.sigma2)


def _grid(args):
    if args.nk is None:
        return None
    return pr.SampleGrid(args.d or len(args.nk), len(args.nk), args.n0, args.nk)


def cmd_bound(args):
    cb = _class_bounds(args)
    rows = []
    for N in args.N:
        for t in args.t:
            if args.family == "geometric":
                grid = _grid(args) or pr.SampleGrid.line(N)
                if grid.N != N and args.nk is not None:
                    raise ValueError(f"--N {N} disagrees with the grid size {grid.N}")
                rep = bd.geometric_bound(N, t, pr.MixingSpec.geometric(args.b, args.gamma, args.nu), cb, args.omega, grid)
            elif args.family == "geometric-1d":
                rep = bd.geometric_bound_1d(N, t, args.b, args.gamma, cb, args.omega)
            elif args.family == "algebraic":
                grid = _grid(args) or pr.SampleGrid.line(N)
                rep = bd.algebraic_bound(N, t, pr.MixingSpec.algebraic(args.b, args.gamma), cb, args.alpha, grid)
            elif args.family == "algebraic-1d":
                rep = bd.algebraic_bound_1d(N, t, args.b, args.gamma, cb)
            else:
                rep = bd.hang_steinwart_bound(N, t, args.b, args.gamma, cb)
            rows.append(rep.to_dict())
    emit(args, render(rows, args.format), _config(args))
    return 0


def cmd_blocks(args):
    if args.P is None:
        n_hat = int(np.prod(args.nk))
        if args.family == "geometric":
            P = bd.block_gap_geometric(n_hat, pr.MixingSpec.geometric(args.b, args.gamma, args.nu), args.omega)
        else:
            P = bd.block_gap_algebraic(n_hat, pr.MixingSpec.algebraic(args.b, args.gamma), args.alpha, len(args.nk))
    else:
        P = args.P
    blk = bd.build_blocking(args.nk, P)
    rows = []
    for j, (scal, lat) in enumerate(zip(blk.blocks, blk.lattice), start=1):
        for s, vec in zip(scal, lat):
            row = {"block_id": j, "scalar_index": int(s)}
            row.update({f"lattice_index_{k + 1}": int(v) for k, v in enumerate(vec)})
            rows.append(row)
    emit(args, render(rows, args.format), _config(args, P=P))
    return 0


def cmd_conditions(args):
    p = ep.ChainParams(args.N, args.t, args.L_N, args.sigma2, args.sigmaF2, args.A, args.B,
                       args.omega, args.b, args.gamma, args.d_eff)
    spec = ep.EntropySpec(args.c, args.h, args.D)
    if args.which == "prop6":
        rep, bound = ep.check_conditions_prop6(p, spec), ep.prop6_bound(p)
    else:
        rep, bound = ep.check_conditions_cor7(p, spec), ep.cor7_bound(p)
    row = {"which": args.which, "all": rep.all(), **rep.to_dict(), "bound": bound.bound,
           "raw": bound.raw, "exponent": bound.exponent}
    emit(args, render([row], args.format), _config(args))
    return 0


def cmd_estimate(args):
    with open(args.input) as fh:
        text = fh.read()
    side = None
    side_path = args.sidecar or (args.input + ".json" if os.path.exists(args.input + ".json") else None)
    if side_path:
        with open(side_path) as fh:
            side = json.load(fh)
    ds = pr.dataset_from_csv(text, side)
    if args.estimator != "kde" and side is None and not _has_y(text):
        raise ValueError(f"estimator {args.estimator!r} needs a y column")
    kernel = sm.KernelSpec(args.kernel, 1)
    mode = args.estimator == "mode"
    h = hz.choose_bandwidth(args.bandwidth, len(ds), args.alpha, 1, args.gamma, mode)
    grid = sm.interior_grid(h, args.grid_points, M=kernel.M)
    if args.estimator == "kde":
        est = sm.kde(ds.x, h, kernel, grid)
    elif args.estimator == "mean":
        est = sm.nw_mean(ds.x, ds.y, h, kernel, grid)
    elif args.estimator == "var":
        est = sm.two_step_variance(ds.x, ds.y, h, kernel, grid)
    else:
        step = min(args.y_step, h * h)
        lo, hi = float(ds.y.min()) - h, float(ds.y.max()) + h
        gy = lo + step * np.arange(int(math.ceil((hi - lo) / step)) + 1)
        est = sm.modal_regression(ds.x, ds.y, h, kernel, grid, gy)
    rows = [{"grid_point": float(g), "estimate": float(e), "defined": bool(not np.isnan(e))} for g, e in zip(grid, est)]
    if args.format == "csv":
        lines = ["grid_point,estimate,defined"]
        lines += [f"{_num(r['grid_point'])},{'nan' if not r['defined'] else _num(r['estimate'])},{int(r['defined'])}" for r in rows]
        text = "\n".join(lines) + "\n"
    else:
        text = rows_to_jsonl([{**r, "estimate": r["estimate"] if r["defined"] else None} for r in rows])
    emit(args, text, _config(args, h=h))
    return 0


def _has_y(text):
    return text.split("\n", 1)[0].strip().split(",")[-1] == "y"


def _load_experiments(args, kind):
    with open(args.config) as fh:
        exps = hz.parse_experiments(fh.read())
    exps = [e for e in exps if e[1] == kind]
    if not exps:
        raise ValueError(f"config has no kind = {kind} sections")
    if args.seed is not None:
        for _, _, e in exps:
            e.seed = args.seed
    return exps


def _outputs(args, report_rows, rep_rows, config):
    report = render(_uniform(report_rows) if args.format == "csv" else report_rows, args.format)
    print("config: " + pr.dumps_json(config), file=sys.stderr)
    if args.out:
        atomic_write(args.out + "." + args.format, report)
        atomic_write(args.out + ".reps.csv", rows_to_csv(rep_rows))
        atomic_write(args.out + ".meta.json", pr.dumps_json(config) + "\n")
    else:
        sys.stdout.write(report)


def cmd_verify_tail(args):
    exps = _load_experiments(args, "tail")
    report, reps, resolved = [], [], {}
    for name, _, exp in exps:
        means = hz.run_tail_means(exp, args.workers)
        rows = hz.bound_comparison(exp, workers=args.workers, means=means)
        report += [{"experiment": name, **r} for r in rows]
        report.append({"experiment": name, "summary": True,
                       "sound": all(r["sound"] for r in rows), "rows": len(rows)})
        for i, n in enumerate(exp.Ns):
            reps += [{"experiment": name, "N": n, "rep": r, "mean": float(means[i, r])} for r in range(exp.reps)]
        resolved[name] = asdict(exp)
    _outputs(args, report, reps, _config(args, experiments=resolved))
    return 0


def cmd_verify_rate(args):
    exps = _load_experiments(args, "rate")
    report, reps, resolved = [], [], {}
    for name, _, cfg in exps:
        arr = hz.run_rate_errors(cfg, args.workers)
        rr = hz.rate_experiment(cfg, errors=arr)
        report.append({"experiment": name, **rr.to_dict()})
        for i, n in enumerate(cfg.Ns):
            reps += [{"experiment": name, "N": n, "rep": r, "sup_error": float(arr[i, r, 0]),
                      "h": float(arr[i, r, 1])} for r in range(cfg.reps)]
        resolved[name] = asdict(cfg)
    _outputs(args, report, reps, _config(args, experiments=resolved))
    return 0


def _uniform(rows):
    # CSV needs one header: pad summary rows with the union of keys
    keys = []
    for r in rows:
        for k in r:
            if k not in keys:
                keys.append(k)
    return [{k: r.get(k, "") for k in keys} for r in rows]


# -- parser -------------------------------------------------------------------

def _common(p, seed=True):
    p.add_argument("--out", help="output path (stdout if omitted)")
    p.add_argument("--format", choices=("csv", "jsonl"), default=None)
    if seed:
        p.add_argument("--seed", type=int, default=None,
                       help=f"master seed (default: ${SEED_ENV}, else drawn from entropy and echoed)")


def _class_args(p):
    p.add_argument("--A", type=float, required=True)
    p.add_argument("--B", type=float, default=0.0)
    p.add_argument("--sigma2", type=float, required=True)


def _mixing_args(p):
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--nu", type=float, default=math.e)
    p.add_argument("--omega", type=float, default=2.0)
    p.add_argument("--alpha", type=float, default=0.0)


def _grid_args(p):
    p.add_argument("--nk", type=_int_list, default=None, help="diverging side lengths, comma-separated")
    p.add_argument("--n0", type=int, default=1, help="side length of non-diverging directions")
    p.add_argument("--d", type=int, default=None, help="lattice dimension (default: number of --nk entries)")


def build_parser():
    ap = argparse.ArgumentParser(prog="cmix", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a process (optionally with responses) to CSV")
    p.add_argument("--process", choices=("doubling", "logistic", "markov", "lattice"), required=True)
    p.add_argument("--N", type=int)
    p.add_argument("--R", type=int, default=1, help="moving-average radius for the lattice field")
    _grid_args(p)
    p.add_argument("--mean-fn", choices=sorted(pr.MEAN_FUNCTIONS))
    p.add_argument("--sigma-fn", choices=sorted(pr.SIGMA_FUNCTIONS), default="one")
    p.add_argument("--L", type=float, default=3.0, help="declared bound on |y|")
    p.add_argument("--mode-center", choices=sorted(pr.MODE_CENTERS))
    _common(p)
    p.set_defaults(func=cmd_simulate, default_format="csv")

    p = sub.add_parser("bound", help="evaluate a tail bound over N x t")
    p.add_argument("--family", choices=("geometric", "geometric-1d", "algebraic", "algebraic-1d", "hang-steinwart"),
                   required=True)
    p.add_argument("--N", type=_int_list, required=True)
    p.add_argument("--t", type=_float_list, required=True)
    _class_args(p)
    _mixing_args(p)
    _grid_args(p)
    _common(p, seed=False)
    p.set_defaults(func=cmd_bound, default_format="jsonl")

    p = sub.add_parser("blocks", help="emit block membership for a grid")
    p.add_argument("--nk", type=_int_list, required=True)
    p.add_argument("--P", type=int, default=None, help="block gap (computed from --family if omitted)")
    p.add_argument("--family", choices=("geometric", "algebraic"), default="geometric")
    _mixing_args(p)
    _common(p, seed=False)
    p.set_defaults(func=cmd_blocks, default_format="csv")

    p = sub.add_parser("conditions", help="check chaining side conditions and evaluate the bound")
    p.add_argument("--which", choices=("prop6", "cor7"), default="prop6")
    p.add_argument("--N", type=float, required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--L-N", dest="L_N", type=float, default=1.0)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--sigmaF2", type=float, required=True)
    p.add_argument("--A", type=float, required=True)
    p.add_argument("--B", type=float, default=0.0)
    p.add_argument("--omega", type=float, default=2.0)
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--d-eff", dest="d_eff", type=int, default=1)
    p.add_argument("--c", type=float, default=1.0, help="covering constant")
    p.add_argument("--h", type=float, default=1.0, help="bandwidth in the covering bound")
    p.add_argument("--D", type=int, default=1)
    _common(p, seed=False)
    p.set_defaults(func=cmd_conditions, default_format="jsonl")

    p = sub.add_parser("estimate", help="run a kernel estimator on a CSV dataset")
    p.add_argument("--input", required=True)
    p.add_argument("--sidecar", default=None)
    p.add_argument("--estimator", choices=hz.ESTIMATORS, required=True)
    p.add_argument("--bandwidth", type=_bandwidth, default="optimal")
    p.add_argument("--kernel", choices=sorted(sm.KERNELS), default="epanechnikov")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--grid-points", dest="grid_points", type=int, default=101)
    p.add_argument("--y-step", dest="y_step", type=float, default=1e-3)
    _common(p, seed=False)
    p.set_defaults(func=cmd_estimate, default_format="csv")

    for name, fn, what in (("verify-tail", cmd_verify_tail, "empirical tails against the bounds"),
                           ("verify-rate", cmd_verify_rate, "log-log rate fits")):
        p = sub.add_parser(name, help=f"Monte Carlo check: {what}")
        p.add_argument("--config", required=True, help="INI experiment file")
        p.add_argument("--workers", type=int, default=1)
        _common(p)
        p.set_defaults(func=fn, default_format="jsonl")
    return ap


def parse_args(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.format is None:
        args.format = args.default_format
    del args.default_format
    if getattr(args, "workers", 1) < 1:
        ap.error("argument --workers: must be >= 1")
    return args


def main(argv=None):
    args = parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, OverflowError, ArithmeticError, NotImplementedError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"cmix: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
