import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

import oracles
from cmix import processes as pr
from cmix import smoothers as sm


def close(a, b, tol=1e-12):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    nan = np.isnan(a)
    assert np.array_equal(nan, np.isnan(b))
    assert np.all(np.abs(a[~nan] - b[~nan]) <= tol * np.maximum(1, np.abs(b[~nan])))


# -- kernels ------------------------------------------------------------------

@pytest.mark.parametrize("kid", sm.KERNELS)
def test_kernel_unit_mass_1d(kid):
    k = sm.KernelSpec(kid, 1)
    mass, _ = integrate.quad(lambda u: float(k(u)), -1, 1, epsabs=1e-13)
    assert mass == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("kid", sm.KERNELS)
def test_kernel_unit_mass_2d(kid):
    k = sm.KernelSpec(kid, 2)
    mass, _ = integrate.quad(lambda r: float(k.radial(r)) * 2 * math.pi * r, 0, 1, epsabs=1e-13)
    assert mass == pytest.approx(1.0, abs=1e-10)


def test_kernel_constants_match_closed_forms():
    for (kid, D), c in oracles.CONSTANTS.items():
        assert sm.KernelSpec(kid, D).kbar == pytest.approx(c, rel=1e-14)


def test_epanechnikov_lipschitz_and_moments():
    k = sm.KernelSpec()
    assert k.lip == pytest.approx(1.5)
    assert k.kappa(2) == pytest.approx(0.2)
    assert k.kappa(1) == pytest.approx(integrate.quad(lambda u: abs(u) * float(k(u)), -1, 1)[0])
    assert k.kmin == 0.0


@pytest.mark.parametrize("kid", sm.KERNELS)
def test_lipschitz_constant_sampled(kid):
    k = sm.KernelSpec(kid, 1)
    u = np.linspace(-1.2, 1.2, 200001)
    slopes = np.abs(np.diff(k(u))) / np.diff(u)
    assert slopes.max() <= k.lip * (1 + 1e-9)
    assert slopes.max() >= k.lip * (1 - 1e-4)


def test_support_in_unit_ball():
    k = sm.KernelSpec("quartic", 2)
    assert k(np.array([[0.8, 0.7]]))[0] == 0.0
    assert k(np.array([[0.5, 0.5]]))[0] > 0


def test_flat_top_variant():
    k = sm.KernelSpec("epanechnikov", 1, floor=0.2)
    mass, _ = integrate.quad(lambda u: float(k(u)), -1, 1, points=[-0.9, 0.9], epsabs=1e-13)
    assert mass == pytest.approx(1.0, abs=1e-8)
    assert k.kmin == pytest.approx(0.2 * k.kbar)
    assert k(0.99) >= k.kmin > 0
    assert k(1.01) == 0.0


def test_kernel_rejects_unknown():
    with pytest.raises(ValueError):
        sm.KernelSpec("gaussian")


# -- KDE ----------------------------------------------------------------------

def test_kde_single_point():
    assert sm.kde([0.4], 0.1, sm.KernelSpec(), [0.4])[0] == pytest.approx(7.5)


def test_kde_integrates_to_one():
    x = np.random.default_rng(0).uniform(size=300)
    h = 0.07
    g = np.linspace(-h, 1 + h, 20001)
    f = sm.kde(x, h, sm.KernelSpec(), g)
    assert np.all(f >= 0)
    assert np.trapezoid(f, g) == pytest.approx(1.0, abs=1e-3)


def test_kde_doubling_center():
    x = pr.simulate_doubling_map(100_000, seed=11).values
    assert 0.97 <= sm.kde(x, 0.1, sm.KernelSpec(), [0.5])[0] <= 1.03


def test_kde_rejects_bad_bandwidth():
    with pytest.raises(ValueError):
        sm.kde([0.1], 0.0, sm.KernelSpec(), [0.1])


@given(st.floats(-5, 5))
def test_kde_location_equivariance(shift):
    rng = np.random.default_rng(1)
    x, g = rng.uniform(size=40), np.linspace(0, 1, 17)
    a = sm.kde(x, 0.2, sm.KernelSpec(), g)
    b = sm.kde(x + shift, 0.2, sm.KernelSpec(), g + shift)
    assert np.max(np.abs(a - b)) <= 1e-12 * max(1, abs(shift))


def test_kde_chunking_matches_single_block(monkeypatch):
    x = np.random.default_rng(2).uniform(size=5000)
    g = np.linspace(0.1, 0.9, 333)
    a = sm.kde(x, 0.05, sm.KernelSpec(), g)
    monkeypatch.setattr(sm, "_BLOCK", 5000 * 7)
    b = sm.kde(x, 0.05, sm.KernelSpec(), g)
    close(a, b, 1e-13)


# -- NW mean and variance -----------------------------------------------------

def test_nw_constant_response():
    rng = np.random.default_rng(3)
    x = rng.uniform(size=100)
    out = sm.nw_mean(x, np.full(100, 2.5), 0.05, sm.KernelSpec(), np.linspace(-0.2, 1.2, 50))
    ok = ~np.isnan(out)
    assert ok.any() and (~ok).any()
    assert np.allclose(out[ok], 2.5, rtol=0, atol=1e-14)


def test_nw_single_observation():
    assert sm.nw_mean([0.3], [1.7], 0.1, sm.KernelSpec(), [0.35])[0] == pytest.approx(1.7)


def test_nw_all_undefined_raises():
    with pytest.raises(ValueError, match="undefined"):
        sm.nw_mean([0.0], [1.0], 0.1, sm.KernelSpec(), [0.5, 0.9])


def test_nw_markov_sin_fixture():
    # threshold = 3x the median of 50 seeded reps (frozen)
    x = pr.simulate_markov_jitter(10_000, seed=21)
    ds = pr.make_regression_dataset(x, "sin", "small", 2.0, seed=22)
    h = sm.bandwidth_optimal(10_000, 1, 1)
    g = sm.interior_grid(h)
    err, und = sm.sup_error(sm.nw_mean(ds.x, ds.y, h, sm.KernelSpec(), g), ds.truth_fn("mean"), g)
    assert und == 0 and err < 0.1


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_nw_within_response_range(seed):
    rng = np.random.default_rng(seed)
    x, y = rng.uniform(size=30), rng.normal(size=30)
    out = sm.nw_mean(x, y, 0.15, sm.KernelSpec(), np.linspace(0, 1, 41))
    ok = ~np.isnan(out)
    assert np.all(out[ok] >= y.min() - 1e-12) and np.all(out[ok] <= y.max() + 1e-12)


def test_variance_noiseless_zero():
    x = np.random.default_rng(4).uniform(size=200)
    out = sm.two_step_variance(x, np.full(200, 0.3), 0.1, sm.KernelSpec(), np.linspace(0.1, 0.9, 9))
    assert np.allclose(out, 0.0, atol=1e-28)


def test_variance_unit_noise_center():
    x = pr.simulate_doubling_map(10_000, seed=5)
    ds = pr.make_regression_dataset(x, "zero", "one", 2.0, seed=6)
    h = sm.bandwidth_optimal(10_000, 1, 1)
    assert 0.9 <= sm.two_step_variance(ds.x, ds.y, h, sm.KernelSpec(), [0.5])[0] <= 1.1


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_variance_nonnegative_and_bounded(seed):
    rng = np.random.default_rng(seed)
    x, y = rng.uniform(size=40), rng.uniform(-2, 2, size=40)
    out = sm.two_step_variance(x, y, 0.1, sm.KernelSpec(), np.linspace(0, 1, 51))
    ok = ~np.isnan(out)
    assert np.all(out[ok] >= 0)
    assert np.all(out[ok] <= (y.max() - y.min()) ** 2)


def test_variance_never_drops_own_point():
    # the first step is evaluated at the sample points, where K(0) > 0
    x = np.array([0.0, 0.5, 1.0])
    out, dropped = sm.two_step_variance(x, [1.0, 2.0, 3.0], 0.1, sm.KernelSpec(), [0.5], return_dropped=True)
    assert dropped == 0 and out[0] == 0.0


def test_variance_drop_counter_with_flat_top_free_kernel(monkeypatch):
    # force an undefined first step by making the kernel vanish at the sample points
    calls = {}
    real = sm.nw_mean

    def fake(x, y, h, kernel, grid):
        out = real(x, y, h, kernel, grid)
        if len(grid) == len(x) and "done" not in calls:
            calls["done"] = True
            out = out.copy()
            out[0] = np.nan
        return out

    monkeypatch.setattr(sm, "nw_mean", fake)
    with pytest.warns(UserWarning, match="1 residuals dropped"):
        _, dropped = sm.two_step_variance([0.2, 0.25, 0.3], [1, 2, 3], 0.2, sm.KernelSpec(), [0.25],
                                          return_dropped=True)
    assert dropped == 1


# -- conditional density and mode --------------------------------------------

def test_conditional_density_single_observation():
    h = 0.2
    gy = np.linspace(-0.5, 1.5, 9)
    out = sm.conditional_density([0.5], [0.4], h, sm.KernelSpec(), [0.55], gy)
    close(out[0], [oracles.kernel("epanechnikov", 1, (0.4 - v) / h) / h for v in gy], 1e-14)


def test_conditional_density_columns_integrate_to_one():
    rng = np.random.default_rng(7)
    x, y = rng.uniform(size=200), rng.uniform(-1, 1, size=200)
    h = 0.1
    gy = np.linspace(-1 - h, 1 + h, 4001)
    dens = sm.conditional_density(x, y, h, sm.KernelSpec(), np.linspace(0, 1, 11), gy)
    ok = ~np.isnan(dens[:, 0])
    assert np.allclose(np.trapezoid(dens[ok], gy, axis=1), 1.0, atol=1e-3)


def test_mode_recovers_triangle_center():
    rng = np.random.default_rng(8)
    x = rng.uniform(size=20_000)
    y = 0.5 + pr.triangle_sample(rng, 20_000, 0.2)
    h = 0.1
    modes = sm.modal_regression(x, y, h, sm.KernelSpec(), [0.3, 0.5, 0.7], np.arange(0.2, 0.8, 1e-3))
    assert np.all(np.abs(modes - 0.5) < 0.02)


def test_mode_vs_mean_on_skewed_mixture():
    x = pr.simulate_markov_jitter(20_000, seed=9)
    ds = pr.make_modal_dataset(x, "flat", seed=10)
    h = sm.bandwidth_mode(20_000, 1, 1)
    g = np.array([0.3, 0.5, 0.7])
    modes = sm.modal_regression(ds.x, ds.y, h, sm.KernelSpec(), g, np.arange(-0.2, 1.0, 1e-3))
    means = sm.nw_mean(ds.x, ds.y, h, sm.KernelSpec(), g)
    assert np.all(np.abs(modes - 0.3) < 0.02)
    assert np.all(np.abs(means - 0.38) < 0.02)


def test_mode_attains_column_max_and_ties_smallest():
    rng = np.random.default_rng(11)
    x, y = rng.uniform(size=60), rng.uniform(size=60)
    gx, gy = np.linspace(0, 1, 15), np.linspace(-0.2, 1.2, 71)
    modes, dens = sm.modal_regression(x, y, 0.2, sm.KernelSpec(), gx, gy, return_density=True)
    for i in range(len(gx)):
        if np.isnan(modes[i]):
            continue
        k = int(np.where(gy == modes[i])[0][0])
        assert np.all(dens[i] <= dens[i, k])
        assert np.all(dens[i, :k] < dens[i, k])
    # exact tie: two symmetric observations give equal peaks
    m = sm.modal_regression([0.5, 0.5], [0.2, 0.8], 0.1, sm.KernelSpec(), [0.5], [0.2, 0.5, 0.8])
    assert m[0] == 0.2


# -- oracle equivalence (small instances) -------------------------------------

def _instance(rng, D=1):
    n = int(rng.integers(1, 51))
    x = rng.uniform(size=n) if D == 1 else rng.uniform(size=(n, D))
    y = rng.normal(size=n)
    h = float(rng.uniform(0.05, 0.6))
    gx = rng.uniform(-0.1, 1.1, size=int(rng.integers(1, 12)))
    if D > 1:
        gx = rng.uniform(-0.1, 1.1, size=(int(rng.integers(1, 12)), D))
    return x, y, h, gx


@pytest.mark.parametrize("kid", sm.KERNELS)
def test_estimators_match_naive_loops(kid):
    rng = np.random.default_rng(hash(kid) % 2 ** 32)
    k = sm.KernelSpec(kid, 1)
    for _ in range(20):
        x, y, h, gx = _instance(rng)
        gy = np.sort(rng.uniform(-3, 3, size=int(rng.integers(1, 30))))
        close(sm.kde(x, h, k, gx), oracles.kde(x, h, kid, 1, gx))
        ref = oracles.nw(x, y, h, kid, 1, gx)
        if np.all(np.isnan(ref)):
            continue
        close(sm.nw_mean(x, y, h, k, gx), ref)
        close(sm.two_step_variance(x, y, h, k, gx), oracles.variance(x, y, h, kid, 1, gx))
        close(sm.conditional_density(x, y, h, k, gx, gy), oracles.cond_density(x, y, h, kid, 1, gx, gy))
        close(sm.modal_regression(x, y, h, k, gx, gy), oracles.mode(x, y, h, kid, 1, gx, gy), 0)


def test_kde_2d_matches_naive_loops():
    rng = np.random.default_rng(12)
    for kid in sm.KERNELS:
        k = sm.KernelSpec(kid, 2)
        for _ in range(5):
            x, y, h, gx = _instance(rng, 2)
            close(sm.kde(x, h, k, gx), oracles.kde([tuple(v) for v in x], h, kid, 2, [tuple(v) for v in gx]))
            ref = oracles.nw([tuple(v) for v in x], y, h, kid, 2, [tuple(v) for v in gx])
            if not np.all(np.isnan(ref)):
                close(sm.nw_mean(x, y, h, k, gx), ref)


# -- bandwidths, grids, errors ------------------------------------------------

def test_bandwidth_hand_values():
    assert sm.bandwidth_geometric(1000, 1, 1, 1) == pytest.approx(0.3627, abs=1e-4)
    assert sm.bandwidth_optimal(1000, 1, 1) == pytest.approx(0.1904, abs=1e-4)
    assert sm.bandwidth_geometric(1000, 1, 1, 1e12) == pytest.approx(sm.bandwidth_optimal(1000, 1, 1), rel=1e-9)
    assert sm.bandwidth_mode(1000, 1, 1) == pytest.approx((math.log(1000) / 1000) ** 0.25)
    with pytest.raises(ValueError):
        sm.bandwidth_optimal(1, 1, 1)


def test_rate_exponents():
    assert sm.rate_exponent(1, 1) == pytest.approx(1 / 3)
    assert sm.rate_exponent(1, 1, mode=True) == pytest.approx(1 / 4)


def test_seminorm_bound():
    b = sm.kernel_seminorm_bound(sm.KernelSpec(), 0.1)
    assert b.B == pytest.approx(15.0) and b.omega_suggest == 2
    assert sm.kernel_seminorm_bound(sm.KernelSpec(), 1e9).B < 1e-8


def test_interior_grid():
    g = sm.interior_grid(0.1, 11)
    assert g[0] == pytest.approx(0.1) and g[-1] == pytest.approx(0.9)
    with pytest.raises(ValueError):
        sm.interior_grid(0.6)


def test_sup_error_cases():
    g = np.linspace(0, 1, 5)
    assert sm.sup_error(g ** 2, lambda v: v ** 2, g) == (0.0, 0)
    assert sm.sup_error([0.5], [0.2]) == (pytest.approx(0.3), 0)
    est = np.array([0.1, np.nan, 0.4])
    assert sm.sup_error(est, [0.0, 0.0, 0.0]) == (pytest.approx(0.4), 1)
    fine = np.linspace(0, 1, 101)
    f = lambda v: np.sin(7 * v)
    assert sm.sup_error(np.zeros(101), f, fine)[0] >= sm.sup_error(np.zeros(5), f, fine[::25])[0]
