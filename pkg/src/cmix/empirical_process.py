"""Chaining bounds for suprema of multiplier empirical processes.

Covers the kernel-translation covering bound, the entropy integral over
sqrt(log N(u^2)), side conditions C1-C4 / D1-D4, and the two 88 exp(-.) tail
bounds built on them.  Logarithms are natural throughout.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .bounds import BoundReport

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EntropySpec:
    """Covering bound N(tau) = max(1, (c / (tau h^(D+1)))^D) for {K((. - x)/h)}."""

    c: float = 1.0
    h: float = 1.0
    D: int = 1
    covering: Callable | None = None  # user-supplied tau -> N(tau) overrides the formula

    def __post_init__(self):
        if not (self.c > 0 and self.h > 0 and self.D >= 1):
            raise ValueError("need c > 0, h > 0, D >= 1")


@dataclass(frozen=True)
class ChainParams:
    N: float
    t: float
    L_N: float
    sigma2: float
    sigmaF2: float
    A: float
    B: float
    omega: float = 2.0
    b: float = 1.0
    gamma: float = 1.0
    d_eff: int = 1

    def __post_init__(self):
        for name in ("N", "t", "sigma2", "sigmaF2", "A", "b", "gamma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.B < 0:
            raise ValueError("B must be non-negative")
        if not self.omega > 1:
            raise ValueError("omega must exceed 1")


def covering_bound(tau, spec: EntropySpec):
    if not tau > 0:
        raise ValueError("tau must be positive")
    if spec.covering is not None:
        return max(1.0, float(spec.covering(tau)))
    return max(1.0, (spec.c / (tau * spec.h ** (spec.D + 1))) ** spec.D)


def log_covering(tau, spec: EntropySpec):
    """log N(tau) computed in log space so tiny tau does not overflow."""
    if spec.covering is not None:
        return math.log(covering_bound(tau, spec))
    return max(0.0, spec.D * (math.log(spec.c) - math.log(tau) - (spec.D + 1) * math.log(spec.h)))


def clamp_radius(spec: EntropySpec):
    """u above which N(u^2) = 1 for the built-in formula (integrand vanishes)."""
    return math.sqrt(spec.c / spec.h ** (spec.D + 1))


def adaptive_simpson(f, a, b, tol=1e-8, max_depth=60, panels=16):
    """Adaptive Simpson quadrature with Richardson correction.

    The range is first cut into ``panels`` equal pieces so a lucky agreement
    on one coarse panel cannot stop the refinement early.
    """
    if a == b:
        return 0.0
    edges = np.linspace(a, b, panels + 1)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        lo, hi = float(lo), float(hi)
        fa, fb, fm = f(lo), f(hi), f(0.5 * (lo + hi))
        whole = (hi - lo) / 6.0 * (fa + 4 * fm + fb)
        total += _simpson(f, lo, hi, fa, fm, fb, whole, tol / panels, max_depth)
    return total


def _simpson(f, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4 * frm + fb)
    delta = left + right - whole
    if depth <= 0 or abs(delta) <= 15 * tol:
        return left + right + delta / 15.0
    return (_simpson(f, a, m, fa, flm, fm, left, tol / 2, depth - 1)
            + _simpson(f, m, b, fm, frm, fb, right, tol / 2, depth - 1))


def dudley_integral(lower, upper, spec: EntropySpec, tol=1e-8):
    """Integral of sqrt(log N(u^2)) over [lower, upper]."""
    if not (0 < lower <= upper):
        raise ValueError("need 0 < lower <= upper")

    def integrand(u):
        return math.sqrt(log_covering(u * u, spec))

    if spec.covering is None:
        # the integrand has a square-root cusp where the clamp starts; integrate up to it
        upper = min(upper, clamp_radius(spec))
        if upper <= lower:
            return 0.0
    return adaptive_simpson(integrand, lower, upper, tol)


def _c2_lhs(p: ChainParams):
    return math.sqrt(p.N / math.log(p.N) ** (1.0 / p.gamma)) * p.t


def _rate_scale(p: ChainParams):
    return (p.b / p.omega) ** (1.0 / (2 * p.gamma))


@dataclass
class ConditionReport:
    flags: dict
    margins: dict

    def all(self):
        return all(self.flags.values())

    def to_dict(self):
        return {"flags": self.flags, "margins": self.margins}


def _floats(d):
    return {k: float(v) for k, v in d.items()}


def check_conditions_prop6(p: ChainParams, spec: EntropySpec):
    """Evaluate C1-C4 literally; margins are lhs - rhs oriented so that >= 0 means satisfied."""
    sigma, sigF = math.sqrt(p.sigma2), math.sqrt(p.sigmaF2)
    lhs2 = _c2_lhs(p)
    m1 = p.sigma2 * p.sigmaF2 / 10 - p.t * p.A * p.L_N
    m2 = lhs2 - 15 * sigma * sigF / _rate_scale(p)
    m3 = p.N ** (p.omega - 1) - (2 + 32 * p.B * p.L_N * sigF / (5 * p.A * p.t)) * 2 ** (p.d_eff - 1)
    lo, hi = 0.5 * (p.t / p.L_N) ** 0.25, sigF ** 0.25
    integral = dudley_integral(lo, hi, spec) if hi > lo else 0.0
    m4 = lhs2 - 60 * math.sqrt(10) * sigma * math.sqrt(sigF) / _rate_scale(p) * integral
    flags = {"C1": bool(m1 >= 0 and p.L_N >= 1), "C2": bool(m2 >= 0), "C3": bool(m3 >= 0), "C4": bool(m4 >= 0)}
    return ConditionReport(flags, _floats({"C1": m1, "C2": m2, "C3": m3, "C4": m4, "integral": integral}))


def check_conditions_cor7(p: ChainParams, spec: EntropySpec):
    """D1-D4: the sigma = 1, L_N = 1 version of C1-C4 with the modified C3 constant."""
    sigF = math.sqrt(p.sigmaF2)
    lhs2 = _c2_lhs(p)
    m1 = p.sigmaF2 / 10 - p.t * p.A
    m2 = lhs2 - 15 * sigF / _rate_scale(p)
    m3 = p.N ** (p.omega - 1) - (1.5 + 16 * p.B * sigF / (5 * p.A * p.t)) * 2 ** (p.d_eff - 1)
    lo, hi = p.t ** 0.25 / 2, sigF ** 0.25
    integral = dudley_integral(lo, hi, spec) if hi > lo else 0.0
    m4 = lhs2 - 60 * math.sqrt(10) * math.sqrt(sigF) / _rate_scale(p) * integral
    flags = {"D1": bool(m1 >= 0), "D2": bool(m2 >= 0), "D3": bool(m3 >= 0), "D4": bool(m4 >= 0)}
    return ConditionReport(flags, _floats({"D1": m1, "D2": m2, "D3": m3, "D4": m4, "integral": integral}))


def _chain_exponent(p: ChainParams, variance):
    return (p.b / p.omega) ** (1.0 / p.gamma) * p.N * p.t ** 2 / (2250 * math.log(p.N) ** (1.0 / p.gamma) * variance)


def _chain_report(p, expo, flags):
    raw = 88.0 * math.exp(-expo)
    params = {k: getattr(p, k) for k in p.__dataclass_fields__}
    return BoundReport(min(raw, 1.0), raw, 1, True, params, expo, flags)


def prop6_bound(p: ChainParams, spec: EntropySpec | None = None):
    """88 exp(-(b/omega)^(1/gamma) N t^2 / (2250 (log N)^(1/gamma) sigma^2 sigma_F^2)) with C1-C4 flags.

    Flags use ``spec`` (default ``EntropySpec()``).
    """
    flags = check_conditions_prop6(p, spec or EntropySpec()).flags
    return _chain_report(p, _chain_exponent(p, p.sigma2 * p.sigmaF2), flags)


def cor7_bound(p: ChainParams, spec: EntropySpec | None = None):
    """88 exp(-(b/omega)^(1/gamma) N t^2 / (2250 (log N)^(1/gamma) sigma_F^2))."""
    flags = check_conditions_cor7(p, spec or EntropySpec()).flags
    return _chain_report(p, _chain_exponent(p, p.sigmaF2), flags)


def greedy_cover_constant(h, kernel_fn, D=1, tau=None, step=1e-3):
    """Calibrate c by greedily covering {K((. - x)/h)/h^D : x in [0,1]} in sup-norm.

    Centers are scanned on a ``step`` grid; the returned c makes the covering
    formula reproduce the greedy count at radius ``tau``.
    """
    if D != 1:
        raise NotImplementedError("greedy calibration is implemented for D = 1")
    tau = tau if tau is not None else 0.1 / h
    centers = np.arange(0.0, 1.0 + step / 2, step)
    pts = np.linspace(-h, 1 + h, 4001)
    count, i = 0, 0
    while i < len(centers):
        ref = kernel_fn((pts - centers[i]) / h) / h
        j = i + 1
        while j < len(centers) and np.max(np.abs(kernel_fn((pts - centers[j]) / h) / h - ref)) <= tau:
            j += 1
        count += 1
        i = j
    c = count * tau * h ** (D + 1)
    log.info("greedy cover: %d balls at tau=%.4g, h=%.4g -> c=%.4g", count, tau, h, c)
    return c, count


def with_sigma2_one(p: ChainParams):
    return replace(p, sigma2=1.0)
