"""Kernel smoothers: density, conditional mean, two-step conditional variance,
conditional density and conditional mode.

Undefined values (empty kernel neighbourhood) are NaN, never 0.  All
estimators evaluate on an explicit grid of points.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import beta as beta_fn
from scipy.special import gamma as gamma_fn

_POWERS = {"epanechnikov": 1, "quartic": 2, "triweight": 3}
KERNELS = tuple(_POWERS)


@dataclass(frozen=True)
class KernelSpec:
    """Spherical polynomial kernel c_D (1 - |u|^2)^p on the unit ball.

    ``floor`` > 0 gives the flat-top variant max(K, floor * K(0)) on the
    support, renormalised to unit mass; it is bounded below on its support.
    """

    id: str = "epanechnikov"
    D: int = 1
    floor: float = 0.0

    def __post_init__(self):
        if self.id not in _POWERS:
            raise ValueError(f"unknown kernel {self.id!r}; choose from {sorted(_POWERS)}")
        if self.D < 1:
            raise ValueError("D must be >= 1")
        if not 0 <= self.floor < 1:
            raise ValueError("floor must lie in [0, 1)")

    @property
    def p(self):
        return _POWERS[self.id]

    @property
    def M(self):
        return 1.0

    @cached_property
    def _base_const(self):
        D, p = self.D, self.p
        return gamma_fn(D / 2 + p + 1) / (math.pi ** (D / 2) * gamma_fn(p + 1))

    @cached_property
    def _ball_volume(self):
        return math.pi ** (self.D / 2) / gamma_fn(self.D / 2 + 1)

    @cached_property
    def _norm(self):
        if self.floor == 0:
            return 1.0
        # mass of max(K, f K(0)) on the ball, radial integral done numerically
        r = np.linspace(0.0, 1.0, 200001)
        k = np.maximum(self._base_const * (1 - r ** 2) ** self.p, self.floor * self._base_const)
        surf = self.D * self._ball_volume
        return float(np.trapezoid(k * surf * r ** (self.D - 1), r))

    def radial(self, r):
        r = np.asarray(r, dtype=float)
        inside = r <= 1.0
        base = self._base_const * np.clip(1 - r * r, 0.0, None) ** self.p
        if self.floor:
            base = np.maximum(base, self.floor * self._base_const)
        return np.where(inside, base, 0.0) / self._norm

    def __call__(self, u):
        """K(u); ``u`` has shape (..., D), or (...) when D == 1."""
        u = np.asarray(u, dtype=float)
        if self.D == 1 and (u.ndim == 0 or u.shape[-1] != 1):
            r = np.abs(u)
        else:
            r = np.sqrt(np.sum(u * u, axis=-1))
        return self.radial(r)

    @property
    def kbar(self):
        return float(self.radial(0.0))

    @property
    def kmin(self):
        """inf of K over its support; positive only for the flat-top variant."""
        return float(self.floor * self._base_const / self._norm)

    @property
    def lip(self):
        """Lipschitz constant of the radial profile (on the open support for flat-top)."""
        p = self.p
        r = 1.0 / math.sqrt(2 * p - 1)
        return 2 * p * self._base_const * r * (1 - r * r) ** (p - 1) / self._norm

    def kappa(self, alpha):
        """integral of |u|^alpha K(u) du."""
        if self.floor:
            r = np.linspace(0.0, 1.0, 200001)
            surf = self.D * self._ball_volume
            return float(np.trapezoid(r ** alpha * self.radial(r) * surf * r ** (self.D - 1), r))
        surf = self.D * self._ball_volume
        return float(self._base_const * surf * 0.5 * beta_fn((alpha + self.D) / 2, self.p + 1))


def _as_points(x, D):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None] if D == 1 else x[None, :]
    if x.shape[-1] != D:
        raise ValueError(f"points have dimension {x.shape[-1]}, kernel expects {D}")
    return x


def interior_grid(h, n_points=101, margin_mult=1.0, M=1.0):
    """Evenly spaced 1-d grid on [M h, 1 - M h]."""
    lo = margin_mult * M * h
    if lo >= 0.5:
        raise ValueError(f"bandwidth {h} leaves no interior")
    return np.linspace(lo, 1 - lo, n_points)


# chunk size for (grid x data) kernel blocks
_BLOCK = 1 << 22


def kernel_sums(x, grid, h, kernel: KernelSpec, columns=None):
    """Return (S0, S) with S0[g] = sum_i K((x_i - g)/h) and S[g, j] = sum_i K_i columns[i, j].

    Data are sorted once so that each chunk of 1-d grid points only touches
    observations within the kernel's reach.
    """
    D = kernel.D
    xs = _as_points(x, D)
    gs = _as_points(grid, D)
    cols = None if columns is None else np.asarray(columns, dtype=float).reshape(len(xs), -1)
    G, n = len(gs), len(xs)
    S0 = np.zeros(G)
    S = np.zeros((G, 0 if cols is None else cols.shape[1]))
    reach = kernel.M * h
    if D == 1:
        order = np.argsort(xs[:, 0], kind="stable")
        xs, x1 = xs[order], xs[order, 0]
        if cols is not None:
            cols = cols[order]
        gorder = np.argsort(gs[:, 0], kind="stable")
    else:
        gorder = np.arange(G)
    step = max(1, _BLOCK // max(n, 1))
    for start in range(0, G, step):
        gi = gorder[start: start + step]
        lo_i, hi_i = 0, n
        if D == 1:
            lo_i = int(np.searchsorted(x1, gs[gi, 0].min() - reach, side="left"))
            hi_i = int(np.searchsorted(x1, gs[gi, 0].max() + reach, side="right"))
        if hi_i <= lo_i:
            continue
        diff = (xs[None, lo_i:hi_i, :] - gs[gi, None, :]) / h
        w = kernel.radial(np.sqrt(np.sum(diff * diff, axis=-1)) if D > 1 else np.abs(diff[..., 0]))
        S0[gi] = w.sum(axis=1)
        if cols is not None:
            for j in range(cols.shape[1]):
                S[gi, j] = (w * cols[None, lo_i:hi_i, j]).sum(axis=1)
    return S0, S


def kde(x, h, kernel: KernelSpec, grid):
    """(N h^D)^-1 sum_i K((X_i - x)/h)."""
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    n = len(np.asarray(x))
    if n == 0:
        raise ValueError("no data")
    S0, _ = kernel_sums(x, grid, h, kernel)
    return S0 / (n * h ** kernel.D)


def _ratio(num, den):
    out = np.full(num.shape, np.nan)
    ok = den > 0
    out[ok] = num[ok] / den[ok]
    return out


def nw_mean(x, y, h, kernel: KernelSpec, grid):
    """sum K_i Y_i / sum K_i; NaN where no observation is within reach."""
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    S0, S = kernel_sums(x, grid, h, kernel, np.asarray(y, dtype=float))
    out = _ratio(S[:, 0], S0)
    if np.all(np.isnan(out)):
        raise ValueError("estimate undefined at every grid point")
    return out


def two_step_variance(x, y, h, kernel: KernelSpec, grid, return_dropped=False):
    """Kernel smooth of squared residuals (Y_i - m_hat(X_i))^2, same h in both steps."""
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    y = np.asarray(y, dtype=float)
    m_at_x = nw_mean(x, y, h, kernel, x)
    ok = ~np.isnan(m_at_x)
    dropped = int((~ok).sum())
    if dropped:
        warnings.warn(f"{dropped} residuals dropped (first-step mean undefined)", stacklevel=2)
    xa = np.asarray(x, dtype=float)[ok]
    res = (y[ok] - m_at_x[ok]) ** 2
    S0, S = kernel_sums(xa, grid, h, kernel, res)
    out = _ratio(S[:, 0], S0)
    if np.all(np.isnan(out)):
        raise ValueError("estimate undefined at every grid point")
    return (out, dropped) if return_dropped else out


def conditional_density(x, y, h, kernel: KernelSpec, grid_x, grid_y, y_kernel: KernelSpec | None = None):
    """Matrix f_hat(y | x) of shape (len(grid_x), len(grid_y)); NaN rows where undefined."""
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    L = y_kernel or KernelSpec(kernel.id, 1)
    if L.D != 1:
        raise ValueError("response kernel must be one-dimensional")
    xs = _as_points(x, kernel.D)
    y = np.asarray(y, dtype=float)
    gx = _as_points(grid_x, kernel.D)
    gy = np.asarray(grid_y, dtype=float)
    n = len(xs)
    out = np.full((len(gx), len(gy)), np.nan)
    # response weights are shared across x rows: L[i, k] = L((Y_i - y_k)/h)
    Lmat = L.radial(np.abs(y[:, None] - gy[None, :]) / h)
    for start in range(0, len(gx), 64):
        sl = slice(start, start + 64)
        diff = (xs[None, :, :] - gx[sl, None, :]) / h
        Kx = kernel.radial(np.sqrt(np.sum(diff * diff, axis=-1)))
        den = Kx.sum(axis=1)
        num = Kx @ Lmat
        ok = den > 0
        rows = np.arange(len(gx))[sl][ok]
        # (N h^(D+1))^-1 num / ((N h^D)^-1 den) = num / (h den)
        out[rows] = num[ok] / (h * den[ok, None])
    if n == 0 or np.all(np.isnan(out)):
        raise ValueError("estimate undefined at every grid point")
    return out


def modal_regression(x, y, h, kernel: KernelSpec, grid_x, grid_y, y_kernel=None, return_density=False):
    """argmax over grid_y of f_hat(y | x), smallest y on ties; NaN where undefined."""
    dens = conditional_density(x, y, h, kernel, grid_x, grid_y, y_kernel)
    gy = np.asarray(grid_y, dtype=float)
    modes = np.full(dens.shape[0], np.nan)
    ok = ~np.isnan(dens[:, 0])
    # np.argmax returns the first maximal index, i.e. the smallest y when grid_y ascends
    order = np.argsort(gy, kind="stable")
    modes[ok] = gy[order][np.argmax(dens[ok][:, order], axis=1)]
    return (modes, dens) if return_density else modes


# -- bandwidth rules ----------------------------------------------------------

def bandwidth_geometric(N, alpha, D, gamma):
    """((log N)^((gamma+1)/gamma) / N)^(1/(2 alpha + D))."""
    if N < 2:
        raise ValueError("N must be >= 2")
    return (math.log(N) ** ((gamma + 1) / gamma) / N) ** (1.0 / (2 * alpha + D))


def bandwidth_optimal(N, alpha, D):
    """(log N / N)^(1/(2 alpha + D))."""
    if N < 2:
        raise ValueError("N must be >= 2")
    return (math.log(N) / N) ** (1.0 / (2 * alpha + D))


def bandwidth_mode(N, alpha, D):
    """(log N / N)^(1/(2 alpha + D + 1))."""
    if N < 2:
        raise ValueError("N must be >= 2")
    return (math.log(N) / N) ** (1.0 / (2 * alpha + D + 1))


def rate_exponent(alpha, D, mode=False):
    return alpha / (2 * alpha + D + (1 if mode else 0))


@dataclass
class SeminormBound:
    B: float
    omega_suggest: float


def kernel_seminorm_bound(kernel: KernelSpec, h):
    """Lipschitz semi-norm of u -> K((u - x)/h) is lip/h; omega = 2 covers B = O(1/h)."""
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    return SeminormBound(kernel.lip / h, 2.0)


def sup_error(estimates, truth, grid=None):
    """max |estimate - truth| over defined points, plus the count of undefined points.

    ``truth`` is either an array aligned with ``estimates`` or a callable of the grid.
    """
    est = np.asarray(estimates, dtype=float)
    tv = truth(np.asarray(grid)) if callable(truth) else np.asarray(truth, dtype=float)
    ok = ~np.isnan(est)
    undefined = int((~ok).sum())
    if not ok.any():
        return math.nan, undefined
    return float(np.max(np.abs(est[ok] - tv[ok]))), undefined
