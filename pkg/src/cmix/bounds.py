"""Bernstein-type tail bounds for C-mixing processes and their blocking machinery."""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .processes import GEOMETRIC, MixingSpec, SampleGrid, stationary_distribution, validate_chain


@dataclass(frozen=True)
class ClassBounds:
    """Envelopes of a function class: sup-norm A, semi-norm B, variance sigma2, class variance sigmaF2."""

    A: float
    B: float = 0.0
    sigma2: float = 0.0
    sigmaF2: float = 0.0

    def __post_init__(self):
        if not self.A > 0:
            raise ValueError("A must be positive")
        if self.B < 0 or self.sigma2 < 0 or self.sigmaF2 < 0:
            raise ValueError("B, sigma2, sigmaF2 must be non-negative")
        if self.sigma2 > self.A ** 2 * (1 + 1e-12):
            raise ValueError("sigma2 cannot exceed A^2")


@dataclass
class BoundReport:
    bound: float
    raw: float
    N0: int
    n_ge_n0: bool
    params: dict = field(default_factory=dict)
    exponent: float = float("nan")
    flags: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def _report(prefactor, exponent, N, N0, params, flags=None):
    # exponent is the (non-negative) magnitude inside exp(-.)
    raw = prefactor * math.exp(-exponent)
    return BoundReport(min(raw, 1.0), raw, int(N0), bool(N >= N0), params, exponent, flags or {})


def _check_t(t):
    if not t > 0:
        raise ValueError("t must be positive")


def _min_n(pred, start=1):
    """Smallest integer n >= start with pred(n) true; pred must be monotone in n."""
    if pred(start):
        return start
    hi = start * 2
    while not pred(hi):
        hi *= 2
        if hi > 2 ** 62:
            raise OverflowError("threshold search did not terminate")
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if pred(mid):
            hi = mid
        else:
            lo = mid
    return hi


def geometric_n0(cb: ClassBounds, omega, m=1, d_eff=1):
    """Smallest N with (N/m)^(omega-1) * A/(A+B) >= 2^(d'-1); equality counts."""
    target = 2.0 ** (d_eff - 1) * (cb.A + cb.B) / cb.A
    # (N/m)^(omega-1) >= target  <=>  N >= m * target^(1/(omega-1)); guard the root's rounding
    guess = max(1, int(math.floor(m * target ** (1.0 / (omega - 1)))) - 2)
    return _min_n(lambda n: (n / m) ** (omega - 1) * cb.A / (cb.A + cb.B) >= 2.0 ** (d_eff - 1) * (1 - 1e-15), guess)


def geometric_bound(N, t, spec: MixingSpec, cb: ClassBounds, omega, grid: SampleGrid):
    """8m exp(-N t^2 / (2m ((omega/b) log_nu N)^(d'/gamma) (sigma^2 + tA)))."""
    _check_t(t)
    if spec.kind != GEOMETRIC:
        raise ValueError("geometric_bound needs a geometric MixingSpec")
    if not omega > 1:
        raise ValueError("omega must exceed 1")
    if N < 2:
        raise ValueError("N must be >= 2")
    m, d_eff = grid.m, grid.d_eff
    log_nu = math.log(N) / math.log(spec.nu)
    block = ((omega / spec.b) * log_nu) ** (d_eff / spec.gamma)
    expo = N * t * t / (2 * m * block * (cb.sigma2 + t * cb.A))
    N0 = geometric_n0(cb, omega, m, d_eff)
    params = {"family": "geometric", "N": N, "t": t, "omega": omega, "m": m, "d_eff": d_eff,
              "nu": spec.nu, "b": spec.b, "gamma": spec.gamma, **asdict(cb)}
    return _report(8.0 * m, expo, N, N0, params)


def geometric_bound_1d(N, t, b, gamma, cb: ClassBounds, omega):
    """Specialization nu = e, d' = d = 1."""
    _check_t(t)
    if not omega > 1:
        raise ValueError("omega must exceed 1")
    if N < 2:
        raise ValueError("N must be >= 2")
    expo = N * t * t / (2 * ((omega / b) * math.log(N)) ** (1.0 / gamma) * (cb.sigma2 + t * cb.A))
    params = {"family": "geometric_1d", "N": N, "t": t, "omega": omega, "b": b, "gamma": gamma, **asdict(cb)}
    return _report(8.0, expo, N, geometric_n0(cb, omega), params)


def algebraic_theta(alpha, d_eff, gamma):
    return 1.0 - (alpha + 1) * d_eff / (gamma + d_eff)


def algebraic_constants(cb: ClassBounds, alpha, spec: MixingSpec, grid: SampleGrid):
    theta = algebraic_theta(alpha, grid.d_eff, spec.gamma)
    C1 = grid.m * math.exp(1 + (2 ** grid.d_eff + 1) / cb.A)
    C2 = grid.m ** theta * spec.b ** (-1.0 / (spec.gamma + grid.d_eff))
    return theta, C1, C2


def algebraic_n0(cb: ClassBounds, alpha, m=1):
    """Smallest N with (N/m)^alpha > A (strict)."""
    return _min_n(lambda n: (n / m) ** alpha > cb.A)


def algebraic_bound(N, t, spec: MixingSpec, cb: ClassBounds, alpha, grid: SampleGrid):
    """C1 exp(-N^theta t^2 / (2 C2 (sigma^2 + tA)))."""
    _check_t(t)
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if not spec.gamma > alpha * grid.d_eff:
        raise ValueError("need gamma > alpha * d_eff (theta > 0)")
    if cb.B > N ** alpha:
        warnings.warn(f"B = {cb.B} exceeds N^alpha = {N ** alpha:.4g}", stacklevel=2)
    theta, C1, C2 = algebraic_constants(cb, alpha, spec, grid)
    expo = N ** theta * t * t / (2 * C2 * (cb.sigma2 + t * cb.A))
    params = {"family": "algebraic", "N": N, "t": t, "alpha": alpha, "m": grid.m, "d_eff": grid.d_eff,
              "b": spec.b, "gamma": spec.gamma, "theta": theta, "C1": C1, "C2": C2, **asdict(cb)}
    return _report(C1, expo, N, algebraic_n0(cb, alpha, grid.m), params)


def algebraic_fixed_b_constants(cb: ClassBounds, b, gamma):
    C3 = math.exp(1 + 2 * (cb.A + cb.B) / cb.A)
    C4 = b ** (-1.0 / (gamma + 1))
    return C3, C4


def algebraic_bound_1d(N, t, b, gamma, cb: ClassBounds):
    """Fixed-B, d = d' = 1 variant: C3 exp(-N^(gamma/(gamma+1)) t^2 / (2 C4 (sigma^2 + tA))); valid for all N."""
    _check_t(t)
    C3, C4 = algebraic_fixed_b_constants(cb, b, gamma)
    expo = N ** (gamma / (gamma + 1)) * t * t / (2 * C4 * (cb.sigma2 + t * cb.A))
    params = {"family": "algebraic_1d", "N": N, "t": t, "b": b, "gamma": gamma, "C3": C3, "C4": C4, **asdict(cb)}
    return _report(C3, expo, N, 1, params)


def hang_steinwart_n0(cb: ClassBounds, b, gamma, c=1.0):
    """max{min{N >= 3: N^2 >= 808c(3B+A)/A and N/(log N)^(2/gamma) >= 4}, e^(3/b)} with c = 1."""
    target = 808 * c * (3 * cb.B + cb.A) / cb.A

    def ratio_ok(n):
        return n / math.log(n) ** (2.0 / gamma) >= 4

    start = max(3, math.ceil(math.sqrt(target)))
    if start * start < target:
        start += 1
    if ratio_ok(start):
        n = start
    else:
        # N/(log N)^(2/gamma) falls until N = e^(2/gamma) and rises afterwards
        turn = max(start, int(math.exp(min(2.0 / gamma, 700.0))))
        n = _min_n(ratio_ok, turn)
    return int(max(n, math.ceil(math.exp(3.0 / b))))


def hang_steinwart_bound(N, t, b, gamma, cb: ClassBounds, c=1.0):
    """2 exp(-N t^2 / (8 (log N)^(2/gamma) (sigma^2 + tA/3))), the earlier geometric-C-mixing bound."""
    _check_t(t)
    if N < 3:
        raise ValueError("N must be >= 3")
    expo = N * t * t / (8 * math.log(N) ** (2.0 / gamma) * (cb.sigma2 + t * cb.A / 3))
    params = {"family": "hang_steinwart", "N": N, "t": t, "b": b, "gamma": gamma, "c": c, **asdict(cb)}
    return _report(2.0, expo, N, hang_steinwart_n0(cb, b, gamma, c), params)


# -- blocking -----------------------------------------------------------------

def block_gap_geometric(n_hat, spec: MixingSpec, omega):
    """ceil(((omega/b) log_nu n_hat)^(1/gamma)), at least 1."""
    if n_hat < 1:
        raise ValueError("n_hat must be >= 1")
    val = ((omega / spec.b) * math.log(n_hat) / math.log(spec.nu)) ** (1.0 / spec.gamma)
    # snap values within rounding of an integer before taking the ceiling
    near = round(val)
    if abs(val - near) < 1e-9:
        val = near
    return max(1, math.ceil(val))


def block_gap_algebraic(n_hat, spec: MixingSpec, alpha, d_eff=1):
    """ceil(n_hat^((alpha+1)/(gamma+d')) * b^(1/(gamma+d')))."""
    if n_hat < 1:
        raise ValueError("n_hat must be >= 1")
    val = n_hat ** ((alpha + 1) / (spec.gamma + d_eff)) * spec.b ** (1.0 / (spec.gamma + d_eff))
    near = round(val)
    if abs(val - near) < 1e-9 * max(1.0, val):
        val = near
    return max(1, math.ceil(val))


@dataclass
class Blocking:
    P: int
    n_k: tuple
    L: tuple
    r: tuple
    blocks: list  # list of int arrays of scalar indices (1-based over the diverging sub-grid)
    lattice: list  # matching arrays of lattice vectors, shape (|I_j|, d')

    @property
    def sizes(self):
        return np.array([len(b) for b in self.blocks])

    @property
    def weights(self):
        s = self.sizes
        return s / s.sum()


def progression(j, P, n):
    """Indices j, j+P, ... along one direction (1-based), L+1 terms if j <= r else L terms."""
    L, r = divmod(n, P)
    count = L + 1 if j <= r else L
    return j + P * np.arange(count)


def build_blocking(grid: SampleGrid | tuple, P):
    """Partition the diverging sub-grid into Cartesian products of arithmetic progressions.

    Block j = (j_1..j_d') collects lattice points whose k-th coordinate is
    congruent to j_k mod P.  Progressions that would be empty (P > n_k) are
    dropped, so with P > n_k every surviving progression has a single term.
    """
    if P < 1:
        raise ValueError("P must be >= 1")
    n_k = grid.n_k if isinstance(grid, SampleGrid) else tuple(int(v) for v in grid)
    P = int(P)
    per_dir = []
    for n in n_k:
        per_dir.append([progression(j, P, n) for j in range(1, P + 1) if len(progression(j, P, n))])
    shape = tuple(n_k)
    blocks, lattice = [], []
    for combo in itertools.product(*per_dir):
        mesh = np.meshgrid(*combo, indexing="ij")
        vecs = np.stack([m.ravel() for m in mesh], axis=-1)
        scal = np.ravel_multi_index(tuple((vecs - 1).T), shape) + 1
        order = np.argsort(scal)
        blocks.append(scal[order])
        lattice.append(vecs[order])
    L = tuple(n // P for n in n_k)
    r = tuple(n - (n // P) * P for n in n_k)
    return Blocking(P, tuple(n_k), L, r, blocks, lattice)


def min_block_gap(blocking: Blocking):
    """Smallest sup-distance between two distinct indices sharing a block (inf if none)."""
    best = math.inf
    for vecs in blocking.lattice:
        if len(vecs) < 2:
            continue
        tree = cKDTree(vecs)
        d, _ = tree.query(vecs, k=2, p=np.inf)
        best = min(best, float(d[:, 1].min()))
    return best


# -- exact covariance inequality on finite chains -----------------------------

def phi_mixing(P, r, pi=None):
    """max_s TV(P^r[s], pi) with TV(p, q) = sup_A |p(A) - q(A)| = 0.5 * ||p - q||_1."""
    P = np.asarray(P, dtype=float)
    if pi is None:
        pi = stationary_distribution(P)
    Pr = np.linalg.matrix_power(P, int(r))
    return float(0.5 * np.abs(Pr - pi[None, :]).sum(axis=1).max())


CALIBRATIONS = {"phi": 1.0, "2phi": 2.0}


def covariance_coefficient(P, r, pi=None, calibration="phi"):
    """C(r) = phi(r), or 2 phi(r) with ``calibration="2phi"``.

    2 phi(r) is the constant for which |Cov(f(Z_0), g(Z_r))| <= C(r) ||f||_L1 ||g||_inf
    holds for every signed g; phi(r) alone suffices when g >= 0.
    """
    if calibration not in CALIBRATIONS:
        raise ValueError(f"unknown calibration {calibration!r}")
    return CALIBRATIONS[calibration] * phi_mixing(P, r, pi)


@dataclass
class CovarianceCheck:
    lhs: float
    rhs: float
    holds: bool
    coefficient: float

    @property
    def slack(self):
        return self.rhs - self.lhs


def covariance_check(P, f_vals, g_vals, r, g_seminorm=0.0, init=None, tol=1e-12, calibration="phi"):
    """Exact check of |Cov(f(Z_0), g(Z_r))| <= C(r) ||f||_{L1(pi)} (||g||_inf + ||g||).

    ``g_seminorm`` is the declared semi-norm of g (0 for the zero semi-norm).
    ``init`` may give the law of Z_0; it must equal the stationary law.
    """
    P = validate_chain(P)
    pi = stationary_distribution(P)
    if init is not None and np.abs(np.asarray(init, dtype=float) - pi).sum() > 1e-9:
        raise ValueError("chain is not started from its stationary law")
    f = np.asarray(f_vals, dtype=float)
    g = np.asarray(g_vals, dtype=float)
    Pr = np.linalg.matrix_power(P, int(r))
    # centred form: exact zero for constant f, and no cancellation between E fg and Ef Eg
    lhs = abs(float((pi * (f - pi @ f)) @ (Pr @ g)))
    coef = covariance_coefficient(P, r, pi, calibration)
    rhs = coef * float(pi @ np.abs(f)) * (float(np.abs(g).max()) + g_seminorm)
    return CovarianceCheck(lhs, rhs, lhs <= rhs + tol, coef)


def covariance_table(P, F, G, lags, g_seminorms=None, calibration="phi"):
    """Batched ``covariance_check`` over rows of F, rows of G and a list of lags.

    Returns (lhs, rhs), each of shape (len(lags), len(F), len(G)).
    """
    P = validate_chain(P)
    pi = stationary_distribution(P)
    F = np.atleast_2d(np.asarray(F, dtype=float))
    G = np.atleast_2d(np.asarray(G, dtype=float))
    semi = np.zeros(len(G)) if g_seminorms is None else np.asarray(g_seminorms, dtype=float)
    Fc = pi[None, :] * (F - (F @ pi)[:, None])
    f_l1 = np.abs(F) @ pi
    g_c = np.abs(G).max(axis=1) + semi
    lhs, rhs = [], []
    for r in lags:
        Pr = np.linalg.matrix_power(P, int(r))
        lhs.append(np.abs(Fc @ (Pr @ G.T)))
        rhs.append(covariance_coefficient(P, r, pi, calibration) * np.outer(f_l1, g_c))
    return np.array(lhs), np.array(rhs)
