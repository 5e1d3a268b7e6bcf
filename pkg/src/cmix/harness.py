"""Monte Carlo validation: empirical tails against the bounds, and log-log rate fits.

Each replication is an independent task seeded by hashing (master seed, rep),
so results do not depend on the number of workers.  The same rep seed is reused
across sample sizes (common random numbers), which steadies log-log slopes.  Aggregation happens after
results are re-ordered by task key.
"""
from __future__ import annotations

import configparser
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy import integrate, stats

from . import bounds as bd
from . import processes as pr
from . import smoothers as sm


def rep_seed(master, *keys):
    """Per-task seed derived by hashing the master seed with the task key."""
    ss = np.random.SeedSequence([int(master) & (2 ** 64 - 1), *[int(k) for k in keys]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


# -- statistic registry -------------------------------------------------------

def _ramp_indicator(x):
    x = np.asarray(x, dtype=float)
    return np.clip((x - 0.25) / 0.1, 0, 1) - np.clip((x - 0.65) / 0.1, 0, 1)


def _kernel_at_half(x):
    u = (np.asarray(x, dtype=float) - 0.5) / 0.1
    return 0.75 * np.clip(1 - u * u, 0, None)


_RAW = {
    # name: (function, semi-norm B as Lipschitz constant)
    "sin": (lambda x: np.sin(2 * np.pi * np.asarray(x, dtype=float)), 2 * math.pi),
    "ramp": (_ramp_indicator, 10.0),
    "kernel": (_kernel_at_half, 15.0),
    "identity": (lambda x: np.asarray(x, dtype=float), 0.0),
}

_LAWS = {
    "uniform": lambda x: np.ones_like(x),
    "arcsine": pr.logistic_density,
}
_PROCESS_LAW = {"doubling": "uniform", "markov": "uniform", "logistic": "arcsine"}


@dataclass(frozen=True)
class Statistic:
    name: str
    mean: float
    A: float
    B: float
    sigma2: float

    def __call__(self, x):
        return _RAW[self.name][0](x) - self.mean

    def class_bounds(self):
        return bd.ClassBounds(self.A, self.B, self.sigma2)


def _moments(fn, law):
    dens = _LAWS[law]
    pts = [0.25, 0.3, 0.35, 0.4, 0.5, 0.6, 0.65, 0.7, 0.75]
    m1 = integrate.quad(lambda x: fn(x) * dens(x), 0, 1, points=pts, limit=200)[0]
    m2 = integrate.quad(lambda x: (fn(x) - m1) ** 2 * dens(x), 0, 1, points=pts, limit=200)[0]
    xs = np.linspace(0, 1, 200001)
    A = float(np.max(np.abs(fn(xs) - m1)))
    return m1, m2, A


def statistic_for(name, process):
    """Centered statistic with exact envelopes under the process's invariant law."""
    if name not in _RAW:
        raise ValueError(f"unknown statistic {name!r}")
    if process == "rademacher":
        if name != "identity":
            raise ValueError("the Rademacher process only supports the identity statistic")
        return Statistic("identity", 0.0, 1.0, 0.0, 1.0)
    if process not in _PROCESS_LAW:
        raise ValueError(f"no mean calibration for statistic {name!r} under process {process!r}")
    if name == "sin":
        # exact: both invariant laws are symmetric about 1/2, so E sin(2 pi X) = 0
        s2 = 0.5 if _PROCESS_LAW[process] == "uniform" else _moments(_RAW[name][0], "arcsine")[1]
        return Statistic("sin", 0.0, 1.0, _RAW[name][1], s2)
    if name == "identity":
        raise ValueError("identity statistic is only registered for the Rademacher process")
    m1, m2, A = _moments(_RAW[name][0], _PROCESS_LAW[process])
    return Statistic(name, m1, A, _RAW[name][1], min(m2, A * A))


def simulate_values(process, n, seed):
    if process == "rademacher":
        return np.random.default_rng(seed).choice([-1.0, 1.0], size=n)
    return pr.simulate(process, n, seed).values


# -- tail experiments ---------------------------------------------------------

@dataclass
class TailExperiment:
    process: str = "doubling"
    statistic: str = "sin"
    Ns: tuple = (512, 1024, 2048, 4096, 8192, 16384)
    t_grid: tuple = tuple(np.round(np.linspace(0.025, 0.3, 12), 6))
    reps: int = 2000
    seed: int = 20240101
    omega: float = 2.0
    b: float = 1.0
    gamma: float = 1.0
    alg_b: float = 1.0
    alg_gamma: float = 1.0

    def __post_init__(self):
        self.Ns = tuple(int(n) for n in self.Ns)
        self.t_grid = tuple(float(t) for t in self.t_grid)
        if self.reps < 100:
            raise ValueError("tail experiments need reps >= 100")
        if any(t <= 0 for t in self.t_grid):
            raise ValueError("t values must be positive")


def _tail_task(args):
    process, stat, n, seed = args
    vals = simulate_values(process, n, seed)
    return float(np.mean(stat(vals)))


def clopper_pearson(k, n, level=0.99):
    a = 1 - level
    lo = 0.0 if k == 0 else float(stats.beta.ppf(a / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1 - a / 2, k + 1, n - k))
    return lo, hi


def _map(fn, tasks, workers):
    if workers <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def run_tail_means(exp: TailExperiment, workers=1):
    """Per-(N, rep) empirical means of the centered statistic; shape (len(Ns), reps)."""
    stat = statistic_for(exp.statistic, exp.process)
    tasks = [(exp.process, stat, n, rep_seed(exp.seed, r)) for n in exp.Ns for r in range(exp.reps)]
    out = _map(_tail_task, tasks, workers)
    return np.array(out).reshape(len(exp.Ns), exp.reps)


def tail_probability(exp: TailExperiment, workers=1, means=None):
    """Empirical P(|mean| >= t) with 99% Clopper-Pearson intervals, per N and t."""
    means = run_tail_means(exp, workers) if means is None else means
    rows = []
    for i, n in enumerate(exp.Ns):
        absm = np.abs(means[i])
        for t in exp.t_grid:
            k = int(np.sum(absm >= t))
            lo, hi = clopper_pearson(k, exp.reps)
            rows.append({"N": n, "t": t, "count": k, "reps": exp.reps, "p": k / exp.reps, "ci_lo": lo, "ci_hi": hi})
    return rows


def bound_comparison(exp: TailExperiment, omega=None, workers=1, means=None):
    """Per (N, t): empirical tail next to the three bounds and their ordering."""
    omega = exp.omega if omega is None else omega
    stat = statistic_for(exp.statistic, exp.process)
    cb = stat.class_bounds()
    rows = tail_probability(exp, workers, means)
    for row in rows:
        n, t = row["N"], row["t"]
        ours = bd.geometric_bound_1d(n, t, exp.b, exp.gamma, cb, omega)
        hs = bd.hang_steinwart_bound(n, t, exp.b, exp.gamma, cb)
        alg = bd.algebraic_bound_1d(n, t, exp.alg_b, exp.alg_gamma, cb)
        row.update({
            "geometric": ours.bound, "geometric_raw": ours.raw, "geometric_exponent": ours.exponent,
            "geometric_valid": ours.n_ge_n0, "N0": ours.N0,
            "hang_steinwart": hs.bound, "hang_steinwart_exponent": hs.exponent, "hang_steinwart_valid": hs.n_ge_n0,
            "algebraic": alg.bound,
            "sound": bool((not ours.n_ge_n0) or row["p"] <= ours.bound),
            "exponent_ordering": "geometric>=hs" if ours.exponent >= hs.exponent else "geometric<hs",
        })
        row["tightest"] = min(("geometric", "hang_steinwart", "algebraic"), key=lambda k: row[k])
    return rows


# -- rate experiments ---------------------------------------------------------

ESTIMATORS = ("kde", "mean", "var", "mode")


@dataclass
class RateConfig:
    estimator: str = "kde"
    process: str = "doubling"
    Ns: tuple = (512, 1024, 2048, 4096, 8192, 16384)
    reps: int = 50
    seed: int = 20240101
    bandwidth: str = "optimal"
    kernel: str = "epanechnikov"
    alpha: float = 1.0
    gamma: float = 1.0
    grid_points: int = 101
    m: str = "sin"
    sigma: str = "wave"
    L: float = 2.5
    center: str = "flat"
    y_step: float = 1e-3

    def __post_init__(self):
        self.Ns = tuple(int(n) for n in self.Ns)
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if len(self.Ns) < 4 or any(b <= a for a, b in zip(self.Ns, self.Ns[1:])):
            raise ValueError("Ns must be strictly increasing with at least 4 values")


@dataclass
class RateReport:
    Ns: list
    median_sup_errors: list
    slope: float
    slope_se: float
    target_exponent: float
    failed_reps: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def choose_bandwidth(rule, N, alpha, D, gamma, mode=False):
    if rule.startswith("value:"):
        return float(rule.split(":", 1)[1])
    if mode:
        if rule not in ("optimal", "geometric"):
            raise ValueError(f"unknown bandwidth rule {rule!r}")
        return sm.bandwidth_mode(N, alpha, D)
    if rule == "optimal":
        return sm.bandwidth_optimal(N, alpha, D)
    if rule == "geometric":
        return sm.bandwidth_geometric(N, alpha, D, gamma)
    raise ValueError(f"unknown bandwidth rule {rule!r}")


def make_dataset(cfg: RateConfig, n, seed):
    xseed, yseed = rep_seed(seed, 1), rep_seed(seed, 2)
    xs = pr.simulate(cfg.process, n, xseed)
    if cfg.estimator == "kde":
        return pr.Dataset(xs.values, np.zeros(n), {"density": xs.generator["truth"]}, None, xs.generator)
    if cfg.estimator == "mode":
        return pr.make_modal_dataset(xs, cfg.center, yseed)
    return pr.make_regression_dataset(xs, cfg.m, cfg.sigma, cfg.L, yseed)


def estimate_sup_error(cfg: RateConfig, ds: pr.Dataset, n):
    """Interior sup-error of one replication; NaN if the estimate is undefined everywhere."""
    kernel = sm.KernelSpec(cfg.kernel, 1)
    mode = cfg.estimator == "mode"
    h = choose_bandwidth(cfg.bandwidth, n, cfg.alpha, 1, cfg.gamma, mode)
    grid = sm.interior_grid(h, cfg.grid_points, M=kernel.M)
    try:
        if cfg.estimator == "kde":
            est, truth = sm.kde(ds.x, h, kernel, grid), ds.truth_fn("density")
        elif cfg.estimator == "mean":
            est, truth = sm.nw_mean(ds.x, ds.y, h, kernel, grid), ds.truth_fn("mean")
        elif cfg.estimator == "var":
            est, truth = sm.two_step_variance(ds.x, ds.y, h, kernel, grid), ds.truth_fn("variance")
            if np.any(est[~np.isnan(est)] < 0):
                raise AssertionError("negative variance estimate")
        else:
            step = min(cfg.y_step, h * h)
            lo, hi = float(ds.y.min()) - h, float(ds.y.max()) + h
            gy = lo + step * np.arange(int(math.ceil((hi - lo) / step)) + 1)
            est, truth = sm.modal_regression(ds.x, ds.y, h, kernel, grid, gy), ds.truth_fn("mode")
    except ValueError:
        return math.nan, h, float("nan")
    err, _ = sm.sup_error(est, truth, grid)
    min_est = float(np.nanmin(est)) if not np.all(np.isnan(est)) else math.nan
    return err, h, min_est


def _rate_task(args):
    cfg, n, seed = args
    ds = make_dataset(cfg, n, seed)
    return estimate_sup_error(cfg, ds, n)


def fit_loglog(Ns, errors):
    """Least-squares slope of log(error) on log(N) with its standard error."""
    res = stats.linregress(np.log(np.asarray(Ns, dtype=float)), np.log(np.asarray(errors, dtype=float)))
    return float(res.slope), float(res.stderr)


def run_rate_errors(cfg: RateConfig, workers=1):
    tasks = [(cfg, n, rep_seed(cfg.seed, r)) for n in cfg.Ns for r in range(cfg.reps)]
    out = _map(_rate_task, tasks, workers)
    arr = np.array(out, dtype=float).reshape(len(cfg.Ns), cfg.reps, 3)
    return arr


def rate_experiment(cfg: RateConfig, workers=1, errors=None):
    arr = run_rate_errors(cfg, workers) if errors is None else errors
    errs = arr[..., 0]
    failed = [int(np.isnan(errs[i]).sum()) for i in range(len(cfg.Ns))]
    med = [float(np.nanmedian(errs[i])) for i in range(len(cfg.Ns))]
    slope, se = fit_loglog(cfg.Ns, med)
    target = -sm.rate_exponent(cfg.alpha, 1, cfg.estimator == "mode")
    extra = {"bandwidths": [float(arr[i, 0, 1]) for i in range(len(cfg.Ns))],
             "min_estimate": float(np.nanmin(arr[..., 2]))}
    return RateReport(list(cfg.Ns), med, slope, se, target, failed, extra)


# -- config files -------------------------------------------------------------

_TAIL_FIELDS = {f.name: f for f in fields(TailExperiment)}
_RATE_FIELDS = {f.name: f for f in fields(RateConfig)}
_TUPLES = {"Ns", "t_grid"}


def _convert(name, raw, default):
    raw = raw.strip()
    if name in _TUPLES:
        return tuple(float(v) if name == "t_grid" else int(float(v)) for v in raw.split(",") if v.strip())
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def parse_experiments(text):
    """Parse ``[name]`` sections of ``key = value`` lines; each needs ``kind = tail|rate``.

    Lists are comma-separated.  Unknown keys are rejected.
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    cp.read_string(text)
    out = []
    for name in cp.sections():
        sec = dict(cp[name])
        kind = sec.pop("kind", None)
        if kind == "tail":
            cls, flds = TailExperiment, _TAIL_FIELDS
        elif kind == "rate":
            cls, flds = RateConfig, _RATE_FIELDS
        else:
            raise ValueError(f"section [{name}]: kind must be 'tail' or 'rate'")
        defaults = cls()
        kwargs = {}
        for k, v in sec.items():
            if k not in flds:
                raise ValueError(f"section [{name}]: unknown key {k!r}")
            kwargs[k] = _convert(k, v, getattr(defaults, k))
        out.append((name, kind, cls(**kwargs)))
    return out
