"""Acceptance criteria, one test each; every test prints a PASS/FAIL line.

The lines are also collected and repeated in pytest's terminal summary.
Run directly with ``python tests/test_acceptance.py`` for just the lines.
"""

import math
import time

import numpy as np
import pytest
from scipy import stats

from oracles import brute_modulus, brute_modulus_all
from unimod.brownian import BrownianPathStore, DeterministicPath, sample_grid
from unimod.cli import stability_models
from unimod.config import SECTION_DEFAULTS
from unimod.diffusion import certify_stability, simulate_coupled
from unimod.experiments import run_cor41, run_cor42
from unimod.grr import (certify_grr, check_constant_chain, check_gaussian_identity,
                        check_moment_bound, compute_xi)
from unimod.modcore import WSpec, scaling_factor, w_array
from unimod.modulus import estimate_M, levy_ratio, modulus_of_continuity, scaled_M_comparison

SPEC = WSpec(epsilon=0.5, c=2.0)
RESULTS: dict = {}


def record(n: int, name: str, ok: bool, detail: str):
    line = f"criterion {n:2d} [{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    RESULTS[n] = line
    print(line)
    return ok


def _se(x):
    return float(np.std(x, ddof=1) / math.sqrt(len(x)))


def test_c01_w_monotonicity():
    rng = np.random.default_rng(1)
    n = 100_000
    start = time.perf_counter()
    t = np.exp(rng.uniform(-10, 10, n))
    h = np.exp(rng.uniform(-10, 10, n))  # about half of these are clamp-branch (h > t)
    t2 = t * np.exp(rng.uniform(0, 5, n))
    h2 = h * np.exp(rng.uniform(0, 5, n))
    eps = rng.uniform(0.001, 0.999, n)
    lo = np.empty(n)
    hi = np.empty(n)
    for e in np.unique(np.round(eps, 3)):
        sel = np.round(eps, 3) == e
        spec = WSpec(epsilon=float(e))
        lo[sel] = w_array(spec, t[sel], h[sel])
        hi[sel] = w_array(spec, t2[sel], h2[sel])
    bad = int(np.sum(hi < lo * (1 - 1e-14)))
    elapsed = time.perf_counter() - start
    clamp = int(np.sum(h > t))
    ok = record(1, "w monotonicity", bad == 0 and elapsed < 1.0,
                f"{bad} violations over {n} quadruples ({clamp} clamp-branch), {elapsed:.2f}s")
    assert ok


def test_c02_scaling_sandwich():
    rng = np.random.default_rng(2)
    n = 100_000
    a = np.exp(rng.uniform(-12, 12, n))
    a[:1000] = 1.0
    t = np.exp(rng.uniform(-10, 10, n))
    h = np.exp(rng.uniform(-10, 10, n))
    eps = np.round(rng.uniform(0.001, 0.999, n), 3)
    bad = 0
    exact_bad = 0
    for e in np.unique(eps):
        sel = eps == e
        spec = WSpec(epsilon=float(e))
        r = w_array(spec, a[sel] * t[sel], a[sel] * h[sel]) / (np.sqrt(a[sel]) * w_array(spec, t[sel], h[sel]))
        f = 1.0 + np.sqrt(e * np.abs(np.log(a[sel])))
        bad += int(np.sum((r < (1 / f) * (1 - 1e-12)) | (r > f * (1 + 1e-12))))
        unit = a[sel] == 1.0
        exact_bad += int(np.sum(r[unit] != 1.0))
    assert scaling_factor(SPEC, 1.0) == 1.0
    ok = record(2, "scaling sandwich", bad == 0 and exact_bad == 0,
                f"{bad} violations over {n} draws, {exact_bad} inexact at a=1")
    assert ok


def test_c03_brownian_law():
    start = time.perf_counter()
    m = 10_000
    dt = 1.0 / m
    inc = np.diff(sample_grid(2024, np.arange(m + 1) * dt)) / math.sqrt(dt)
    ks_p = stats.kstest(inc, "norm").pvalue
    s = BrownianPathStore(77)
    coarse = np.linspace(0.0, 4.0, 33)
    first = s.evaluate_many(coarse).copy()
    s.evaluate_many(np.linspace(0.0, 4.0, 4097))
    s.evaluate_many(np.random.default_rng(1).uniform(0.0, 4.0, 500))
    bit_ok = np.array_equal(s.evaluate_many(coarse), first)
    prod = np.empty(100_000)
    for seed in range(prod.size):
        st = BrownianPathStore(seed)
        prod[seed] = st.evaluate(1.0) * st.evaluate(2.0)
    cov, se = prod.mean(), _se(prod)
    elapsed = time.perf_counter() - start
    ok = record(3, "Brownian engine law",
                ks_p > 0.01 and bit_ok and abs(cov - 1.0) < 3 * se and elapsed < 60,
                f"KS p={ks_p:.3f}, bridge bit-identity={bit_ok}, Cov={cov:.4f} (SE {se:.4f}), {elapsed:.1f}s")
    assert ok


def test_c04_grr_certificate():
    start = time.perf_counter()
    bad, worst = 0, -math.inf
    for seed in range(100):
        c = certify_grr(BrownianPathStore(seed), SPEC, T=1.0, n=256, n_pairs=1000, pair_seed=seed,
                        tolerance=1e-6)
        bad += int(not c.passed)
        worst = max(worst, c.max_rel_violation)
    lin = certify_grr(DeterministicPath(lambda t: t), SPEC, T=1.0, n=256, n_pairs=1000, tolerance=1e-6)
    elapsed = time.perf_counter() - start
    ok = record(4, "GRR certificate", bad == 0 and lin.passed and elapsed < 300,
                f"{bad}/100 seeds failing, worst relative excess {worst:.3g}, f(t)=t passed={lin.passed}, "
                f"{elapsed:.1f}s")
    assert ok


def test_c05_gaussian_identity():
    parts, ok = [], True
    for q, c in ((1.0, 2.0), (1.5, 2.0), (2.0, 3.0)):
        r = check_gaussian_identity(q, c, n_samples=10 ** 6, seed=5)
        good = abs(r.estimate - r.target) < 3 * r.se
        ok &= good
        parts.append(f"(q={q},c={c}) {r.estimate:.5f} vs {r.target:.5f} +- {r.se:.1e}")
    assert record(5, "Gaussian identity", ok, "; ".join(parts))


def test_c06_moment_bound():
    rows = check_moment_bound(SPEC, 1.5, [2, 3, 5], n_seeds=1000)
    parts = [f"T={r.T:g}: mean {r.mean:.4f}-3SE={r.mean - 3 * r.se:.4f}, displayed {r.bound_displayed:.4f}, "
             f"derived {r.bound_derived:.4f}" for r in rows]
    assert record(6, "moment bound", all(r.passed for r in rows), "; ".join(parts))


def test_c07_constant_chain():
    bad, worst = 0, 0.0
    for seed in range(64):
        s = BrownianPathStore(seed)
        b = estimate_M(s, SPEC, 0.125, 8.0, 7)
        xi = compute_xi(s, SPEC, T_max=8, n=256)
        chk = check_constant_chain(b.lower, xi, SPEC, (0.125, 8.0))
        bad += int(not chk.ok)
        worst = max(worst, chk.lhs / chk.rhs)
    assert record(7, "constant chain", bad == 0, f"{bad}/64 violations, max M^2/rhs = {worst:.4f}")


def test_c08_stability_certificate():
    start = time.perf_counter()
    p = {k: v[1] for k, v in SECTION_DEFAULTS["stability"].items()}
    model, model_bar = stability_models(p)
    fails, ratio = [], 0.0
    for seed in range(256):
        run = simulate_coupled(model, model_bar, BrownianPathStore(seed), 2.0 ** -10, 4.0, lbc_seed=seed)
        cert = certify_stability(run, SPEC, tolerance=1e-3)
        if not cert.passed:
            fails.append((seed, cert.broken_terms))
        ratio = max(ratio, cert.gamma / cert.rhs)
    same = certify_stability(simulate_coupled(model_bar, model_bar, BrownianPathStore(0), 2.0 ** -10, 4.0),
                             SPEC)
    elapsed = time.perf_counter() - start
    ok = record(8, "stability certificate", not fails and same.gamma == 0.0 and same.passed and elapsed < 600,
                f"{len(fails)}/256 failures {fails[:3]}, max gamma/rhs {ratio:.3g}, identical gamma={same.gamma}, "
                f"{elapsed:.1f}s")
    assert ok


def test_c09_time_only_rate():
    rep = run_cor41(seeds=range(32))
    f = rep.fit
    ok = record(9, "rate, time-only diffusion coefficient", -0.65 <= f.slope <= -0.35 and rep.trend_ok,
                f"corrected exponent {f.slope:.3f} (CI {f.ci_low:.3f}..{f.ci_high:.3f}), uncorrected "
                f"{rep.fit_uncorrected.slope:.3f}, Spearman rho={rep.spearman_rho:.2f} p={rep.spearman_p:.3f}, "
                f"tail ratio {rep.extra['tail_ratio']:.1e}")
    assert ok


def test_c10_vanishing_noise_rate():
    rep = run_cor42(seeds=range(32))
    f, g = rep.fit, rep.ode_fit
    ok = record(10, "rate, vanishing-noise scaling", -1.2 <= f.slope <= -0.8 and -0.65 <= g.slope <= -0.35,
                f"|X^N-Xbar^N| exponent {f.slope:.3f} (CI {f.ci_low:.3f}..{f.ci_high:.3f}), "
                f"ODE distance exponent {g.slope:.3f} (CI {g.ci_low:.3f}..{g.ci_high:.3f})")
    assert ok


def test_c11_scaled_M():
    bad, worst = 0, 0.0
    for seed in range(64):
        for a in (math.exp(-4.0), math.exp(4.0)):
            r = scaled_M_comparison(BrownianPathStore(seed), SPEC, a, (0.125, 8.0), 6)
            bad += int(not r.ok)
            worst = max(worst, r.scaled.lower / r.bound)
    assert record(11, "scaled-M bound", bad == 0, f"{bad}/128 violations, max lower/bound {worst:.3f}")


def test_c12_sliding_window_oracle():
    sizes = sorted(set(range(2, 129)) | set(range(129, 513, 7)) | {255, 256, 257, 511, 512})
    bad = checks = 0
    for p in range(50):
        base = np.random.default_rng(1000 + p).standard_normal(512).cumsum()
        for n in sizes:
            v = base[:n]
            ref = brute_modulus_all(v)
            for k in range(1, n):
                checks += 1
                if modulus_of_continuity(v, 1.0, k / (n - 1)) != ref[k - 1]:
                    bad += 1
        bad += int(brute_modulus(base[:40], 7) != brute_modulus_all(base[:40])[6])
    assert record(12, "sliding-window modulus oracle", bad == 0,
                  f"{bad} mismatches over {checks} (path, n, window) cases, n in {sizes[0]}..{sizes[-1]}")


def test_c13_levy_diagnostic():
    # Informational only: recorded, never gating.
    h = 2.0 ** -18
    grid = np.linspace(0.0, 1.0, 2 ** 18 + 1)
    ratios = [levy_ratio(sample_grid(seed, grid), h) for seed in range(64)]
    med = float(np.median(ratios))
    record(13, "Levy diagnostic (informational)", 0.7 <= med <= 1.3, f"median ratio {med:.3f} over 64 paths")
    assert math.isfinite(med)


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-s"]))
