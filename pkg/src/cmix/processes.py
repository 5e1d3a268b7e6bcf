"""Simulators for C-mixing processes and regression data built on them.

Every generator is a pure function of its arguments and seed.  Series and
datasets carry enough metadata (generator id, parameters, truth-function
ids) to be re-created or evaluated against their ground truth.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

GEOMETRIC = "geometric"
ALGEBRAIC = "algebraic"


@dataclass(frozen=True)
class MixingSpec:
    """Decay law C(r) of a C-mixing process.

    Geometric: C(r) = nu ** (-b * r**gamma).  Algebraic: C(r) = b / r**gamma.
    """

    kind: str
    b: float
    gamma: float
    nu: float = math.e

    def __post_init__(self):
        if self.kind not in (GEOMETRIC, ALGEBRAIC):
            raise ValueError(f"unknown mixing kind {self.kind!r}")
        if self.kind == GEOMETRIC and not self.nu > 1:
            raise ValueError("geometric decay needs nu > 1")
        if not self.b > 0:
            raise ValueError("b must be positive")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")

    @classmethod
    def geometric(cls, b, gamma, nu=math.e):
        return cls(GEOMETRIC, float(b), float(gamma), float(nu))

    @classmethod
    def algebraic(cls, b, gamma):
        return cls(ALGEBRAIC, float(b), float(gamma))

    def coefficient(self, r):
        """Evaluate C(r) for r >= 0 (array-friendly)."""
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise ValueError("C(r) is defined for r >= 0")
        if self.kind == GEOMETRIC:
            return self.nu ** (-self.b * r ** self.gamma)
        with np.errstate(divide="ignore"):
            return self.b / r ** self.gamma


@dataclass(frozen=True)
class SampleGrid:
    """Sampling design on Z^{d+}.

    The first ``d - d_eff`` directions hold ``n0`` sites each, the last
    ``d_eff`` directions hold ``n_k`` sites.  Scalar indices 1..N map to
    1-based lattice vectors in row-major order, non-diverging directions
    slowest.
    """

    d: int
    d_eff: int
    n0: int
    n_k: tuple

    def __post_init__(self):
        object.__setattr__(self, "n_k", tuple(int(v) for v in self.n_k))
        if self.d < 1 or not (0 < self.d_eff <= self.d):
            raise ValueError("need 0 < d_eff <= d")
        if len(self.n_k) != self.d_eff:
            raise ValueError("n_k must have d_eff entries")
        if self.n0 < 1 or any(v < 1 for v in self.n_k):
            raise ValueError("site counts must be positive")

    @classmethod
    def line(cls, n):
        return cls(d=1, d_eff=1, n0=1, n_k=(int(n),))

    @property
    def m(self):
        return self.n0 ** (self.d - self.d_eff)

    @property
    def n_hat(self):
        return math.prod(self.n_k)

    @property
    def N(self):
        return self.m * self.n_hat

    @property
    def shape(self):
        return (self.n0,) * (self.d - self.d_eff) + self.n_k

    def satisfies_assumption6(self):
        return math.log(self.n_hat) <= min(self.n_k)

    def to_lattice(self, i):
        """Scalar index (1-based, scalar or array) -> lattice vectors (1-based)."""
        i = np.asarray(i)
        if np.any(i < 1) or np.any(i > self.N):
            raise IndexError("scalar index out of range")
        vec = np.unravel_index(i - 1, self.shape)
        return np.stack(vec, axis=-1) + 1

    def to_scalar(self, vec):
        vec = np.asarray(vec) - 1
        return np.ravel_multi_index(tuple(np.moveaxis(vec, -1, 0)), self.shape) + 1

    def to_dict(self):
        return {"d": self.d, "d_eff": self.d_eff, "n0": self.n0, "n_k": list(self.n_k)}


@dataclass
class Series:
    values: np.ndarray
    grid: SampleGrid
    generator: dict
    seed: int | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if len(self.values) != self.grid.N:
            raise ValueError(f"series length {len(self.values)} != grid size {self.grid.N}")

    def __len__(self):
        return len(self.values)


# -- truth-function registries ------------------------------------------------

MEAN_FUNCTIONS: dict[str, Callable] = {
    "zero": lambda x: np.zeros_like(x),
    "const": lambda x: np.full_like(x, 0.5),
    "sin": lambda x: np.sin(2 * np.pi * x),
    "poly": lambda x: 4 * x * (1 - x) - 0.5,
}
MEAN_SUP = {"zero": 0.0, "const": 0.5, "sin": 1.0, "poly": 0.5}

SIGMA_FUNCTIONS: dict[str, Callable] = {
    "zero": lambda x: np.zeros_like(x),
    "one": lambda x: np.ones_like(x),
    "small": lambda x: np.full_like(x, 0.1),
    "wave": lambda x: 0.5 + 0.25 * np.sin(2 * np.pi * x),
}

SQRT3 = math.sqrt(3.0)


def _envelope(m_id, sigma_id, pts=4097):
    # max over x of |m(x)| + sqrt(3) sigma(x); every registry function is smooth
    # with period 1 or a low-degree polynomial, so a dense grid is exact to ~1e-7
    x = np.linspace(0.0, 1.0, pts)
    m = MEAN_FUNCTIONS[m_id](x)
    s = SIGMA_FUNCTIONS[sigma_id](x)
    return float(np.max(np.maximum(np.abs(m + SQRT3 * s), np.abs(m - SQRT3 * s))))


@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray
    truth: dict = field(default_factory=dict)
    y_bound: float | None = None
    generator: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if len(self.x) != len(self.y):
            raise ValueError("x and y lengths differ")
        if self.y_bound is not None and len(self.y) and np.max(np.abs(self.y)) > self.y_bound:
            raise ValueError("|y| exceeds the declared bound L")

    def __len__(self):
        return len(self.y)

    def truth_fn(self, name):
        """Evaluable closed form of a truth record ('density', 'mean', 'variance', 'mode')."""
        return truth_function(self.truth[name])


def truth_function(rec):
    kind = rec["kind"]
    if kind == "uniform_density":
        return lambda x: np.ones_like(np.asarray(x, dtype=float))
    if kind == "arcsine_density":
        return lambda x: 1.0 / (np.pi * np.sqrt(np.asarray(x) * (1 - np.asarray(x))))
    if kind == "mean":
        return MEAN_FUNCTIONS[rec["id"]]
    if kind == "variance":
        f = SIGMA_FUNCTIONS[rec["id"]]
        return lambda x: f(np.asarray(x, dtype=float)) ** 2
    if kind == "mode_center":
        return MODE_CENTERS[rec["id"]]
    if kind == "mixture_mean":
        c = MODE_CENTERS[rec["id"]]
        return lambda x: c(x) + rec["w_far"] * rec["offset"]
    raise KeyError(f"unknown truth kind {kind!r}")


# -- generators ----------------------------------------------------------------

def _rng(seed):
    return np.random.default_rng(seed)


def _bits_to_orbit(bits, n):
    """x_t = sum_k bits[t+k] 2^-k for k = 1..64, truncated to the 53 leading bits."""
    bits = np.asarray(bits, dtype=np.uint8)
    if len(bits) < n + 64:
        raise ValueError("need at least n + 64 bits")
    # pad so the byte view covers t + 64 for every t < n
    need = (n + 64 + 7) // 8 + 1
    padded = np.zeros(need * 8, dtype=np.uint8)
    k = min(len(bits), need * 8)
    padded[:k] = bits[:k]
    by = np.packbits(padded).astype(np.uint64)
    out = np.empty(n, dtype=np.float64)
    nq = (n + 7) // 8
    word = np.zeros(nq, dtype=np.uint64)
    for j in range(8):
        word = (word << np.uint64(8)) | by[j: j + nq]
    nxt = by[8: 8 + nq]
    scale = 2.0 ** -53
    for s in range(8):
        # orbit point t = 8q + s starts at bit index t + 1 (1-based) = bit s of byte q
        if s == 0:
            u = word
        else:
            u = (word << np.uint64(s)) | (nxt >> np.uint64(8 - s))
        vals = (u >> np.uint64(11)).astype(np.float64) * scale
        idx = np.arange(s, n, 8)
        out[idx] = vals[: len(idx)]
    return out


def simulate_doubling_map(n, seed=None, bits=None):
    """Orbit of x -> 2x mod 1 as a shift on a fair-bit stream.

    Pass ``bits`` (length >= n + 64) to force the stream, e.g. all zeros.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if bits is None:
        bits = _rng(seed).integers(0, 2, size=n + 64, dtype=np.uint8)
    values = _bits_to_orbit(bits, n)
    return Series(values, SampleGrid.line(n), {"id": "doubling", "truth": {"kind": "uniform_density"}}, seed)


def logistic_step(x):
    return 4.0 * x * (1.0 - x)


def simulate_logistic_map(n, seed=None, burn_in=1000, x0=None):
    """Orbit of x -> 4x(1-x) after ``burn_in`` steps; invariant density is arcsine."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = _rng(seed)
    if x0 is None:
        x0 = rng.uniform()
        # 0, 1/2 and 1 land on the fixed point 0; the tiny band guards against near-hits
        while x0 in (0.0, 0.5, 1.0) or abs(x0 - 0.5) < 1e-12:
            x0 = rng.uniform()
    x = float(x0)
    for _ in range(burn_in):
        x = logistic_step(x)
    out = np.empty(n)
    for t in range(n):
        out[t] = x
        x = logistic_step(x)
    gen = {"id": "logistic", "burn_in": burn_in, "truth": {"kind": "arcsine_density"}}
    return Series(out, SampleGrid.line(n), gen, seed)


def logistic_density(x):
    x = np.asarray(x, dtype=float)
    return 1.0 / (np.pi * np.sqrt(x * (1 - x)))


def validate_chain(P, tol=1e-12):
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError("transition matrix must be square")
    if np.any(P < -tol) or np.any(np.abs(P.sum(axis=1) - 1) > 1e-9):
        raise ValueError("transition matrix rows must be probability vectors")
    k = P.shape[0]
    adj = P > 0
    # reachability closure by repeated boolean squaring
    reach = adj | np.eye(k, dtype=bool)
    for _ in range(max(1, int(math.ceil(math.log2(k))) + 1)):
        reach = reach | ((reach.astype(int) @ reach.astype(int)) > 0)
    if not reach.all():
        raise ValueError("chain is reducible")
    # primitive iff P^((k-1)^2+1) > 0 (Wielandt)
    pw = np.linalg.matrix_power(adj.astype(float), (k - 1) ** 2 + 1)
    if not (pw > 0).all():
        raise ValueError("chain is periodic")
    return P


def stationary_distribution(P, tol=1e-12, max_iter=1_000_000):
    """Solve pi P = pi by fixed-point iteration to L1 change < tol."""
    P = np.asarray(P, dtype=float)
    pi = np.full(P.shape[0], 1.0 / P.shape[0])
    for _ in range(max_iter):
        nxt = pi @ P
        nxt /= nxt.sum()
        if np.abs(nxt - pi).sum() < tol:
            return nxt
        pi = nxt
    raise RuntimeError("stationary iteration did not converge")


def simulate_markov_chain(P, states, n, seed=None):
    """Stationary-start chain; returns the sequence of state labels."""
    P = validate_chain(P)
    states = np.asarray(states, dtype=float)
    if len(states) != P.shape[0]:
        raise ValueError("one label per state required")
    if n < 1:
        raise ValueError("n must be >= 1")
    idx = _chain_indices(P, n, _rng(seed))
    gen = {"id": "markov", "P": P.tolist(), "states": states.tolist()}
    return Series(states[idx], SampleGrid.line(n), gen, seed)


def _chain_indices(P, n, rng):
    pi = stationary_distribution(P)
    cum = np.cumsum(P, axis=1)
    cum[:, -1] = 1.0
    u = rng.uniform(size=n)
    idx = np.empty(n, dtype=np.int64)
    s = int(np.searchsorted(np.cumsum(pi), u[0], side="right"))
    s = min(s, len(pi) - 1)
    idx[0] = s
    rows = [cum[i] for i in range(len(cum))]
    ss = np.searchsorted
    for t in range(1, n):
        s = int(ss(rows[s], u[t], side="right"))
        idx[t] = s
    return idx


def mixing_cells_matrix(k, rho):
    """(1 - rho) * uniform + rho * cyclic shift: doubly stochastic, phi(r) ~ rho^r."""
    P = np.full((k, k), (1.0 - rho) / k)
    P[np.arange(k), (np.arange(k) + 1) % k] += rho
    return P


def simulate_markov_jitter(n, seed=None, cells=64, rho=0.5):
    """Continuous-state process on [0,1]: a Markov chain over ``cells`` equal bins
    plus an iid uniform position inside the current bin.

    The chain is doubly stochastic, so the marginal law is exactly Uniform[0,1];
    as a function of a phi-mixing chain and iid noise the process is phi-mixing.
    """
    P = mixing_cells_matrix(cells, rho)
    rng = _rng(seed)
    idx = _chain_indices(P, n, rng)
    values = (idx + rng.uniform(size=n)) / cells
    gen = {"id": "markov_jitter", "cells": cells, "rho": rho, "truth": {"kind": "uniform_density"}}
    return Series(values, SampleGrid.line(n), gen, seed)


def simulate_lattice_field(grid: SampleGrid, R, seed=None):
    """Moving average of iid Uniform[-1,1] innovations over the sup-norm ball of radius R.

    Values are ordered by the grid's scalar index (row-major).
    """
    if R < 0:
        raise ValueError("R must be >= 0")
    if not grid.satisfies_assumption6():
        raise ValueError("grid violates log(N_hat) <= min n_k")
    shape = grid.shape
    ext = tuple(s + 2 * R for s in shape)
    eps = _rng(seed).uniform(-1.0, 1.0, size=ext)
    field_ = np.zeros(shape)
    for off in np.ndindex(*((2 * R + 1,) * grid.d)):
        sl = tuple(slice(o, o + s) for o, s in zip(off, shape))
        field_ += eps[sl]
    field_ /= (2 * R + 1) ** (grid.d / 2)
    gen = {"id": "lattice", "R": int(R)}
    return Series(field_.ravel(), grid, gen, seed)


PROCESSES = {
    "doubling": lambda n, seed: simulate_doubling_map(n, seed),
    "logistic": lambda n, seed: simulate_logistic_map(n, seed),
    "markov": lambda n, seed: simulate_markov_jitter(n, seed),
}


def simulate(process_id, n, seed):
    try:
        return PROCESSES[process_id](n, seed)
    except KeyError:
        raise ValueError(f"unknown process {process_id!r}") from None


def make_regression_dataset(x_series, m_id, sigma_id, L, seed=None):
    """Y = m(X) + sigma(X) eps with eps iid Uniform[-sqrt3, sqrt3]."""
    if m_id not in MEAN_FUNCTIONS or sigma_id not in SIGMA_FUNCTIONS:
        raise ValueError(f"unknown registry entry ({m_id!r}, {sigma_id!r})")
    x = x_series.values if isinstance(x_series, Series) else np.asarray(x_series, dtype=float)
    if np.any(x < 0) or np.any(x > 1):
        raise ValueError("x values must lie in [0,1]")
    env = _envelope(m_id, sigma_id)
    if env > L:
        raise ValueError(f"max|m| + sqrt3*max|sigma| = {env:.4f} exceeds L = {L}")
    eps = _rng(seed).uniform(-SQRT3, SQRT3, size=len(x))
    y = MEAN_FUNCTIONS[m_id](x) + SIGMA_FUNCTIONS[sigma_id](x) * eps
    truth = {"density": {"kind": "uniform_density"}, "mean": {"kind": "mean", "id": m_id},
             "variance": {"kind": "variance", "id": sigma_id}}
    if isinstance(x_series, Series):
        truth["density"] = x_series.generator.get("truth", truth["density"])
    gen = {"id": "regression", "m": m_id, "sigma": sigma_id, "seed": seed,
           "x_generator": getattr(x_series, "generator", None)}
    return Dataset(x, y, truth, float(L), gen)


# -- skewed conditional law for modal regression ------------------------------

MODE_CENTERS: dict[str, Callable] = {
    "flat": lambda x: np.full_like(np.asarray(x, dtype=float), 0.3),
    "wave": lambda x: 0.3 + 0.05 * np.sin(2 * np.pi * np.asarray(x, dtype=float)),
}


def triangle_sample(rng, size, half_width):
    # sum of two uniforms on [-w/2, w/2] is the symmetric triangle on [-w, w]
    return rng.uniform(-half_width / 2, half_width / 2, size) + rng.uniform(-half_width / 2, half_width / 2, size)


def make_modal_dataset(x_series, center_id="flat", seed=None, w_near=0.8, offset=0.4, half_width=0.1):
    """Y | X=x ~ w_near * tri(c(x)) + (1 - w_near) * tri(c(x) + offset).

    Triangles have half-width ``half_width``; with the defaults the bumps do not
    overlap, so the conditional mode is exactly c(x) and the conditional mean is
    c(x) + (1 - w_near) * offset.
    """
    x = x_series.values if isinstance(x_series, Series) else np.asarray(x_series, dtype=float)
    if offset < 2 * half_width:
        raise ValueError("bumps overlap; mode is no longer c(x)")
    rng = _rng(seed)
    far = rng.uniform(size=len(x)) >= w_near
    c = MODE_CENTERS[center_id](x)
    y = c + far * offset + triangle_sample(rng, len(x), half_width)
    truth = {"mode": {"kind": "mode_center", "id": center_id},
             "mean": {"kind": "mixture_mean", "id": center_id, "w_far": 1 - w_near, "offset": offset}}
    gen = {"id": "modal", "center": center_id, "w_near": w_near, "offset": offset,
           "half_width": half_width, "seed": seed}
    L = float(np.max(np.abs(MODE_CENTERS[center_id](np.linspace(0, 1, 4097)))) + offset + half_width)
    return Dataset(x, y, truth, L, gen)


# -- CSV / JSON sidecar -------------------------------------------------------

def _fmt(v):
    return repr(float(v))


def format_csv(x, y=None, index=None):
    """Write ``index,x_1..x_D[,y]`` with shortest round-trip floats."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    D = x.shape[1]
    cols = ["index"] + [f"x_{j + 1}" for j in range(D)] + (["y"] if y is not None else [])
    idx = np.arange(1, len(x) + 1) if index is None else index
    lines = [",".join(cols)]
    for i in range(len(x)):
        row = [str(int(idx[i]))] + [_fmt(v) for v in x[i]]
        if y is not None:
            row.append(_fmt(y[i]))
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def read_csv_text(text):
    """Parse the CSV produced by ``format_csv``; returns (index, x[N,D], y or None)."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty CSV")
    header = [h.strip() for h in lines[0].split(",")]
    if header[0] != "index":
        raise ValueError(f"bad CSV header: first column is {header[0]!r}, expected 'index'")
    xcols = [h for h in header[1:] if h != "y"]
    for j, h in enumerate(xcols):
        if h != f"x_{j + 1}":
            raise ValueError(f"bad CSV header: unexpected column {h!r}")
    if not xcols:
        raise ValueError("bad CSV header: no x_1 column")
    has_y = header[-1] == "y"
    if "y" in header[1:-1]:
        raise ValueError("bad CSV header: column 'y' must be last")
    rows = [ln.split(",") for ln in lines[1:]]
    for k, r in enumerate(rows):
        if len(r) != len(header):
            raise ValueError(f"row {k + 1} has {len(r)} fields, expected {len(header)}")
    arr = np.array([[float(v) for v in r] for r in rows], dtype=float).reshape(len(rows), len(header))
    index = arr[:, 0].astype(np.int64)
    x = arr[:, 1: 1 + len(xcols)]
    y = arr[:, -1] if has_y else None
    return index, x, y


def series_sidecar(series: Series):
    return {"kind": "series", "generator": series.generator, "grid": series.grid.to_dict(),
            "seed": series.seed}


def dataset_sidecar(ds: Dataset):
    return {"kind": "dataset", "generator": ds.generator, "truth": ds.truth, "y_bound": ds.y_bound}


def dumps_json(obj):
    return json.dumps(obj, sort_keys=True, default=_json_default)


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def dataset_from_csv(text, sidecar: dict | None = None):
    _, x, y = read_csv_text(text)
    if x.shape[1] == 1:
        x = x[:, 0]
    if y is None:
        y = np.zeros(len(x))
    side = sidecar or {}
    return Dataset(x, y, side.get("truth", {}), side.get("y_bound"), side.get("generator", {}))
