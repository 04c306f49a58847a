import math

import mpmath as mp
import numpy as np
import pytest
from scipy import integrate

from unimod.brownian import BrownianPathStore, DeterministicPath
from unimod.errors import DomainError
from unimod.grr import (XiEstimate, admitted_horizon, certify_grr, check_constant_chain,
                        check_gaussian_identity, check_moment_bound, compute_xi, compute_xi_T,
                        constant_chain_rhs, double_integral, grr_rhs, grr_rhs_many, i2_closed_form,
                        i3_bound, i3_bound_half, i3_closed_form, moment_bounds)
from unimod.modcore import WSpec, f_eps

SPEC = WSpec(epsilon=0.5, c=2.0)

# 2 int_0^1 (1 - u)(e^{u/4} - 1) du = 32 (e^{1/4} - 1) - 9, cross-checked with scipy dblquad
XI_LINEAR = 0.08881333400772749


def test_linear_oracle_value():
    v, _ = integrate.dblquad(lambda s, t: math.expm1(abs(t - s) / 4.0), 0, 1, 0, 1,
                             epsabs=1e-10, epsrel=1e-10)
    assert v == pytest.approx(XI_LINEAR, abs=1e-8)  # dblquad's attainable accuracy
    assert 32.0 * math.expm1(0.25) - 9.0 == pytest.approx(XI_LINEAR, rel=1e-14)


def test_xi_linear_path():
    got = compute_xi_T(DeterministicPath(lambda t: t), SPEC, 1.0, 256).xi_T
    assert got == pytest.approx(XI_LINEAR, rel=1e-4)
    fine = compute_xi_T(DeterministicPath(lambda t: t), SPEC, 1.0, 4096).xi_T
    assert abs(fine - XI_LINEAR) < abs(got - XI_LINEAR)


def test_xi_zero_path():
    assert compute_xi_T(DeterministicPath(lambda t: 0.0), SPEC, 3.0, 64).xi_T == 0.0


def test_xi_domain():
    with pytest.raises(DomainError):
        compute_xi_T(BrownianPathStore(0), SPEC, 1.5, 256)
    with pytest.raises(DomainError):
        compute_xi_T(BrownianPathStore(0), SPEC, 1.0, 32)
    assert admitted_horizon(0.25) == 0.25
    assert admitted_horizon(3.0000000001) == 3.0
    with pytest.raises(DomainError):
        admitted_horizon(0.3)


def test_xi_weight_applied():
    s = BrownianPathStore(2)
    raw = double_integral(s, SPEC, 3.0, 128)
    assert compute_xi_T(s, SPEC, 3.0, 128).xi_T == pytest.approx(f_eps(SPEC, 3.0) * raw, rel=1e-15)


def test_double_integral_matches_naive():
    s = BrownianPathStore(4)
    n, T = 64, 2.0
    nodes = (np.arange(n) + 0.5) * T / n
    v = s.evaluate_many(nodes)
    d = np.abs(v[:, None] - v[None, :])
    lag = np.abs(nodes[:, None] - nodes[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        integrand = np.where(lag > 0, np.expm1(d ** 2 / (2 * SPEC.c * np.where(lag > 0, lag, 1.0))), 0.0)
    naive = integrand.sum() * (T / n) ** 2
    assert double_integral(s, SPEC, T, n) == pytest.approx(naive, rel=1e-12)


def test_xi_self_convergence_seed7():
    s = BrownianPathStore(7)
    a = compute_xi_T(s, SPEC, 1.0, 256).xi_T
    b = compute_xi_T(s, SPEC, 1.0, 512).xi_T
    assert abs(a - b) / b < 0.02


def test_xi_self_convergence_sweep():
    # Same store for both resolutions, so both quadratures see one path.
    worst = []
    for seed in range(20):
        s = BrownianPathStore(seed)
        for T in (0.125, 0.5, 1.0, 2.0, 4.0, 8.0):
            a = compute_xi_T(s, SPEC, T, 256).xi_T
            b = compute_xi_T(s, SPEC, T, 512).xi_T
            worst.append((abs(a - b) / b, seed, T))
    assert max(worst)[0] < 0.02, f"worst case {max(worst)}"


def test_compute_xi_truncation():
    s = BrownianPathStore(1)
    x4 = compute_xi(s, SPEC, T_max=4, n=64)
    x6 = compute_xi(s, SPEC, T_max=6, n=64)
    assert x4.xi_sup_truncated == max(x4.terms.values())
    assert x6.xi_sup_truncated >= x4.xi_sup_truncated
    assert x6.covers(1.0 / 6, 6.0) and not x4.covers(1.0 / 6, 6.0)


def _mp_rhs(c, B, h):
    f = lambda u: mp.sqrt(2 * mp.log(4 * B / u ** 2 + 1)) * mp.sqrt(c) / (2 * mp.sqrt(u))
    return float(8 * mp.quad(f, [0, mp.mpf("1e-8"), mp.mpf("1e-4"), h]))


def test_grr_rhs_reference():
    # mpmath tanh-sinh reference at 30 digits: 35.342717196493353...
    assert grr_rhs(SPEC, 1.0, 1.0) == pytest.approx(35.342717196493353, rel=1e-6)
    assert grr_rhs(SPEC, 0.3, 0.25) == pytest.approx(_mp_rhs(2, mp.mpf("0.3"), mp.mpf("0.25")), rel=1e-6)


def test_grr_rhs_properties():
    assert grr_rhs(SPEC, 0.0, 0.5) == 0.0
    Bs = [0.01, 0.1, 1.0, 10.0]
    hs = np.logspace(-6, 1, 30)
    for B in Bs:
        vals = grr_rhs_many(SPEC, B, hs)
        assert np.all(np.diff(vals) > 0)
        ratio = vals / np.sqrt(hs)
        assert np.all(np.diff(ratio) <= 1e-12 * ratio[:-1])
        single = [grr_rhs(SPEC, B, h) for h in hs[::7]]
        np.testing.assert_allclose(vals[::7], single, rtol=1e-9)
    for h in (0.01, 1.0):
        v = [grr_rhs(SPEC, B, h) for B in Bs]
        assert np.all(np.diff(v) > 0)
    with pytest.raises(DomainError):
        grr_rhs(SPEC, -1.0, 1.0)


def test_certify_constant_and_linear():
    c = certify_grr(DeterministicPath(lambda t: 1.5), SPEC, T=1.0, n=64, n_pairs=200)
    assert c.passed and c.B_T == 0.0 and c.max_violation == 0.0
    lin = certify_grr(DeterministicPath(lambda t: t), SPEC, T=1.0, n=256, n_pairs=1000)
    assert lin.passed and lin.max_violation < 0.0


@pytest.mark.parametrize("seed", range(5))
def test_certify_brownian(seed):
    c = certify_grr(BrownianPathStore(seed), SPEC, T=1.0, n=256, n_pairs=1000, pair_seed=seed)
    assert c.passed
    assert c.B_T >= 0.0


def test_gaussian_identity():
    r = check_gaussian_identity(1.0, 2.0, n_samples=200_000)
    assert r.target == pytest.approx(math.sqrt(2.0), rel=1e-15)
    assert abs(r.z_score) < 3
    small = check_gaussian_identity(1e-9, 2.0, n_samples=1000)
    assert small.target == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(DomainError):
        check_gaussian_identity(2.0, 2.0)
    with pytest.raises(DomainError):
        check_gaussian_identity(1.0, 2.0, method="bogus")


def test_gaussian_identity_heavy_tail():
    r = check_gaussian_identity(1.5, 2.0, n_samples=10 ** 6)
    assert r.method == "importance"
    assert r.target == 2.0
    assert abs(r.estimate - r.target) < 3 * r.se


def test_moment_bound_values():
    disp, der = moment_bounds(SPEC, 1.5, 2)
    assert disp == pytest.approx(16.0, rel=1e-14)
    assert der == pytest.approx(16.0, rel=1e-14)  # (T-1) = 1 makes the exponents irrelevant
    d3, r3 = moment_bounds(SPEC, 1.5, 3)
    assert d3 == pytest.approx(9 ** 1.5 / 2 ** 3.75 * 2.0, rel=1e-14)
    assert r3 == pytest.approx(9 ** 1.5 / 2 ** 4.5 * 2.0, rel=1e-14)
    di, ri = moment_bounds(SPEC, 1.5, 3, inverse=True)
    assert di == pytest.approx(4 ** 2.25 / 9 ** 1.5 * 2.0, rel=1e-14)
    assert ri == pytest.approx(4 ** 1.5 / 9 ** 1.5 * 2.0, rel=1e-14)


def test_moment_bound_small_run():
    rows = check_moment_bound(SPEC, 1.5, [2, 3], n_seeds=40, n=64)
    assert [r.T for r in rows] == [2.0, 3.0]
    for r in rows:
        assert r.weaker_bound == max(r.bound_displayed, r.bound_derived)
        assert r.mean >= 0.0
    inv = check_moment_bound(SPEC, 1.5, [2], n_seeds=20, n=64, inverse=True)
    assert inv[0].T == 0.5
    with pytest.raises(DomainError):
        check_moment_bound(SPEC, 0.5, [2], n_seeds=2)
    with pytest.raises(DomainError):
        check_moment_bound(SPEC, 1.5, [1], n_seeds=2)


def _xi_with(values):
    terms = {float(k): values for k in range(1, 9)}
    terms.update({1.0 / k: values for k in range(2, 9)})
    return XiEstimate(T=1.0, xi_T=values, xi_sup_truncated=values, T_max=8, terms=terms)


def test_constant_chain_examples():
    assert check_constant_chain(0.0, _xi_with(0.0), SPEC, (0.125, 8.0)).ok
    r = check_constant_chain(90.0, _xi_with(0.0), SPEC, (0.125, 8.0))
    assert r.lhs == 8100.0 and r.rhs == 8192.0 and r.ok
    assert constant_chain_rhs(SPEC, 1.0) == pytest.approx(512 * math.log(5.0) + 8192.0)
    with pytest.raises(DomainError):
        check_constant_chain(1.0, _xi_with(0.0), SPEC, (0.05, 8.0))
    with pytest.raises(DomainError):
        check_constant_chain(1.0, _xi_with(0.0), SPEC, (0.125, 9.0))


def _mp_i2_i3(c, eps, t, h):
    la = mp.log(t) + eps * abs(mp.log(t))
    g = lambda u: la - mp.log(u)
    # u = v^2 removes the 1/sqrt(u) endpoint singularity
    r = mp.sqrt(h)
    i3 = 16 * mp.sqrt(c) * mp.quad(lambda v: 1 / mp.sqrt(g(v * v)), [0, r])
    i2 = 16 * mp.sqrt(c) * mp.quad(lambda v: mp.sqrt(g(v * v)) - 1 / mp.sqrt(g(v * v)), [0, r])
    return float(i2), float(i3)


@pytest.mark.parametrize("t,h", [(1.0, 0.1), (3.0, 0.5), (0.2, 0.01), (10.0, 4.0)])
def test_i2_i3_against_quadrature(t, h):
    i2, i3 = _mp_i2_i3(2, 0.5, t, h)
    assert i2_closed_form(SPEC, t, h) == pytest.approx(i2, rel=1e-9)
    assert i3_closed_form(SPEC, t, h) == pytest.approx(i3, rel=1e-9)


def test_i3_bounds_on_grid():
    for eps in (0.1, 0.5, 0.9):
        spec = WSpec(epsilon=eps)
        for t in np.logspace(-3, 3, 25):
            log_a = math.log(t) + eps * abs(math.log(t))
            a = math.exp(log_a)
            for frac in np.logspace(-8, -1e-9, 30):
                h = a * frac
                assert i3_closed_form(spec, t, h) <= i3_bound(spec, h) * (1 + 1e-12)
                if frac <= 0.5:
                    assert i3_closed_form(spec, t, h) <= i3_bound_half(spec, h) * (1 + 1e-12)
