"""Acceptance criteria, one test each; every criterion reports its sub-checks.

Run standalone with ``python tests/test_acceptance.py``.
"""

import math
import sys

import numpy as np
import pytest

from chargedpolymer.asymptotics import free_energy, lattice_large_delta, small_delta
from chargedpolymer.charge_model import ChargeModel
from chargedpolymer.errors import TruncationError
from chargedpolymer.observables import charge_density, critical_slope, speed, variances
from chargedpolymer.oracle import (enumerate_partition, ray_knight_check, series_coefficients,
                                   simulate_chain)
from chargedpolymer.phase_diagram import beta_critical, delta_critical, mu_of, mu_tilde_of
from chargedpolymer.rate_functions import rate_curve, rate_charge, rate_speed
from chargedpolymer.sturm_liouville import SLGrid, a_star, chi_value
from chargedpolymer.transfer_operator import derivatives_at, lambda_adaptive, solve

G = ChargeModel.gaussian()
PM1 = ChargeModel.lattice([-1, 1], [0.5, 0.5])
SERIES_CASES = [(G, 1.0, 0.5), (PM1, 0.7, 0.3)]


def rel(a, b):
    return abs(a - b) / abs(b)


def test_criterion_01_ray_knight(criterion):
    c = criterion(1, "Ray-Knight exactness", 30)
    for n in (2, 4, 6, 8, 10, 12):
        rep = ray_knight_check(n)
        c.check(f"TV n={n}", rep.tv_distance < 1e-10, f"{rep.tv_distance:.2e}")
    c.finish()


def test_criterion_02_series_bridge_loop(criterion):
    c = criterion(2, "generating-function exactness (bridge, loop)", 60)
    for model, d, b in SERIES_CASES:
        for kind in ("bridge", "loop"):
            coef = series_coefficients(model, d, b, 14, kind)
            worst = 0.0
            for n in range(1, 15):
                z = enumerate_partition(model, d, b, n, kind).z_star
                worst = max(worst, rel(coef[n], z) if z else abs(coef[n]))
            c.check(f"{model.kind.value} {kind}", worst <= 1e-9, f"max rel {worst:.2e}")
    c.finish()


def test_criterion_03_full_proportionality(criterion):
    c = criterion(3, "full-formula proportionality", 60)
    for model, d, b in SERIES_CASES:
        coef = series_coefficients(model, d, b, 14, "full")
        ratios = [coef[n] / enumerate_partition(model, d, b, n).z_star for n in range(1, 15)]
        spread = max(rel(r, ratios[0]) for r in ratios)
        c.check(f"{model.kind.value} kappa constant", spread <= 1e-9,
                f"kappa={ratios[0]:.15g}, spread {spread:.2e}")
    c.finish()


def test_criterion_04_spectral_consistency(criterion):
    c = criterion(4, "spectral consistency", 120)
    h = 1e-5
    worst = 0.0
    gap_ok = True
    for mu in (0.1, 0.5, 1.0):
        for d in (0.5, 1.0, 2.0):
            for b in (0.1, 0.3, 0.6):
                sol = lambda_adaptive(G, mu, d, b)
                n = sol.trunc_n
                hf = derivatives_at(G, mu, d, b, sol)
                lam = lambda m, dd, bb: solve(G, m, dd, bb, n).lam
                fd = ((lam(mu + h, d, b) - lam(mu - h, d, b)) / (2 * h),
                      (lam(mu, d + h, b) - lam(mu, d - h, b)) / (2 * h),
                      (lam(mu, d, b + h) - lam(mu, d, b - h)) / (2 * h))
                worst = max(worst, *(rel(x, y) for x, y in zip(hf, fd)))
                gap_ok &= lambda_adaptive(G, mu, d, b, tilde=True).lam < sol.lam
    c.check("Hellmann-Feynman vs FD", worst <= 1e-6, f"max rel {worst:.2e}")
    c.check("tilde lambda < lambda", gap_ok)
    convex = monotone = True
    for d, b in [(0.5, 0.1), (1.0, 0.3), (2.0, 0.6)]:
        for mu in (0.05, 0.5, 1.5):
            lo, mid, hi = (lambda_adaptive(G, m, d, b).lam for m in (mu - 1e-2, mu, mu + 1e-2))
            convex &= mid * mid <= lo * hi
            monotone &= lo > mid > hi
            blo, bhi = (lambda_adaptive(G, mu, d, x).lam for x in (b - 1e-2, b + 1e-2))
            monotone &= blo > mid > bhi
    c.check("log-convex in mu", convex)
    c.check("decreasing in mu and beta", monotone)
    c.finish()


def test_criterion_05_phase_diagram(criterion):
    c = criterion(5, "phase diagram", 120)
    try:
        bc_small = beta_critical(G, 0.01).value
        source = "root"
    except TruncationError as exc:
        # the bracket ends are a positive truncation lower bound and a converged negative value
        bc_small = exc.bracket[1]
        source = f"bracket {exc.bracket[0]:.3g}..{exc.bracket[1]:.3g}"
    c.check("beta_c(0.01) < 1e-3", bc_small < 1e-3, source)
    c.check("beta_c decreasing as delta -> 0", bc_small < beta_critical(G, 0.05).value)
    deltas = np.round(np.arange(0.1, 3.01, 0.1), 10)
    bc = np.array([beta_critical(G, d).value for d in deltas])
    c.check("strictly increasing on 0.1..3", np.all(np.diff(bc) > 0))
    c.check("convex on 0.1..3", np.all(bc[2:] - 2 * bc[1:-1] + bc[:-2] > 0))
    b200 = beta_critical(G, 1.0, trunc=200).value
    b400 = beta_critical(G, 1.0, trunc=400).value
    c.check("N=200 vs N=400 within 1e-4", abs(b200 - b400) <= 1e-4, f"{abs(b200 - b400):.1e}")
    c.check("beta_c(1) in (0.3, 0.4)", 0.3 < b400 < 0.4, f"beta_c(1) = {b400:.8f}")
    c.finish()


def test_criterion_06_free_energy_bound(criterion):
    c = criterion(6, "free-energy oracle bound", 30)
    rates = [math.log(enumerate_partition(G, 1.0, 0.2, n, "bridge").z_star) / n
             for n in (4, 8, 16)]
    mu = mu_of(G, 1.0, 0.2).value
    c.check("nondecreasing along 4, 8, 16", rates[0] <= rates[1] <= rates[2],
            ", ".join(f"{r:.5f}" for r in rates))
    c.check("below mu + 1e-6", max(rates) <= mu + 1e-6, f"mu = {mu:.6f}")
    c.finish()


def test_criterion_07_observables(criterion):
    c = criterion(7, "observables", 180)
    bc = beta_critical(G, 1.0).value
    betas = np.append(np.linspace(0.01, bc, 12)[:-1], bc)
    v = np.array([speed(G, 1.0, b) for b in betas])
    rho = np.array([charge_density(G, 1.0, b) for b in betas])
    top = int(np.argmax(v))
    c.check("v non-monotone in beta", 0 < top < len(v) - 1, f"max at beta={betas[top]:.3f}")
    c.check("rho monotone in beta", np.all(np.diff(rho) < 0))
    c.check("v, rho vanish in S", speed(G, 1.0, 0.8) == 0 and charge_density(G, 1.0, 0.8) == 0)
    c.check("v, rho positive at beta_c", v[-1] > 0 and rho[-1] > 0, f"v = {v[-1]:.4f}")
    r = charge_density(G, 1.0, 1e-4)
    c.check("rho(1, 1e-4) within 5% of 1", rel(r, 1.0) <= 0.05, f"{r:.5f}")
    via_mu, _, detail = variances(G, 1.0, 0.2, details=True)
    err = rel(detail["via_gamma"], via_mu)
    c.check("sigma_v^2 expressions agree to 1e-5", err <= 1e-5, f"{err:.1e}")
    c.finish()


def test_criterion_08_monte_carlo(criterion):
    c = criterion(8, "Monte Carlo cross-check", 60)
    est = simulate_chain(G, 1.0, 0.2, 10 ** 6, seed=20240601)
    target = 1.0 / speed(G, 1.0, 0.2)
    z = abs(est.mean_y - target) / est.stderr
    c.check("|mean_y - 1/v| <= 3 stderr", z <= 3, f"z = {z:.2f}")
    c.finish()


def test_criterion_09_rate_functions(criterion):
    c = criterion(9, "rate functions", 120)
    d, b = 1.0, 0.05
    mu, mu_t = mu_of(G, d, b).value, mu_tilde_of(G, d, b).value
    c.check("I^v(0) = mu - mu~", abs(rate_speed(G, d, b, 0.0) - (mu - mu_t)) <= 1e-8)
    c.check("I^rho(0) = mu", abs(rate_charge(G, d, b, 0.0) - mu) <= 1e-8)

    thetas = np.linspace(0, 1, 41)
    sv = rate_curve(G, d, b, "speed", thetas)
    slope = -math.log(lambda_adaptive(G, mu_t, d, b).lam)
    flat = sv.is_flat
    dev = np.max(np.abs(sv.values[flat] - (mu - mu_t) - slope * thetas[flat]))
    c.check("speed flat piece affine, slope -log lambda(mu~)", dev <= 1e-8, f"{dev:.1e}")
    d2 = sv.values[2:] - 2 * sv.values[1:-1] + sv.values[:-2]
    c.check("speed curve convex", np.all(d2 >= -1e-8))
    c.check("speed zero at v", abs(rate_speed(G, d, b, speed(G, d, b))) <= 1e-8)

    tp = np.linspace(0, 1.5, 31)
    ch = rate_curve(G, d, b, "charge", tp)
    dc = delta_critical(G, b).value
    dev = np.max(np.abs(ch.values[ch.is_flat] - mu - (dc - d) * tp[ch.is_flat]))
    c.check("charge flat piece affine, slope delta_c - delta", dev <= 1e-8, f"{dev:.1e}")
    d2 = ch.values[2:] - 2 * ch.values[1:-1] + ch.values[:-2]
    c.check("charge curve convex", np.all(d2 >= -1e-8))
    c.check("charge zero at rho", abs(rate_charge(G, d, b, charge_density(G, d, b))) <= 1e-8)
    c.finish()


def test_criterion_10_sturm_liouville(criterion):
    c = criterion(10, "Sturm-Liouville", 60)
    c.check("chi(0, 1) < 0", chi_value(0.0, 1.0) < 0)
    grid = np.linspace(-2.0, 3.0, 11)
    vals = np.array([chi_value(a, 1.0) for a in grid])
    c.check("increasing in a", np.all(np.diff(vals) > 0))
    c.check("convex in a", np.all(vals[2:] - 2 * vals[1:-1] + vals[:-2] > 0))
    worst = max(abs(chi_value(a, b) - b ** (1 / 3) * chi_value(a * b ** (-2 / 3), 1.0))
                for a, b in [(1.0, 2.0), (2.0, 0.5)])
    c.check("scaling law to 1e-4", worst <= 1e-4, f"{worst:.1e}")
    a2000 = a_star(1.0, SLGrid(points=2000))
    a4000 = a_star(1.0, SLGrid(points=4000))
    c.check("a* grid-stable m=2000 vs 4000", rel(a2000, a4000) <= 1e-3,
            f"{rel(a2000, a4000):.1e}")
    c.finish()


def test_criterion_11_asymptotics(criterion):
    c = criterion(11, "asymptotics", 600)
    sd = small_delta(G)
    c.check("small-delta ratio within 25% of -a*(1) at delta=0.05", sd.relative_error <= 0.25,
            f"ratio {sd.constant:.4f} vs {sd.reference:.4f}, off {sd.relative_error:.1%}")
    fe = free_energy(G)
    c.check("F log-log slope 2/3 +- 0.05", abs(fe.exponent - 2 / 3) <= 0.05,
            f"{fe.exponent:.4f}")
    c.check("F constant within 15% of a*(1)", fe.relative_error <= 0.15,
            f"off {fe.relative_error:.1%}")
    lat = lattice_large_delta(PM1)
    r5, r10 = (s["ratio"] for s in lat.samples)
    c.check("lattice beta_c/delta in [0.8, 1] at delta=5", 0.8 <= r5 <= 1.0, f"{r5:.4f}")
    c.check("lattice ratio increases toward 1 at delta=10", r5 < r10 <= 1.0, f"{r10:.4f}")
    bc = beta_critical(G, 1.0).value
    k = critical_slope(G, 1.0)
    ratio = mu_of(G, 1.0, bc - 1e-4).value / 1e-4
    c.check("F*/h within 2% of K at h=1e-4", rel(ratio, k) <= 0.02, f"{rel(ratio, k):.1e}")
    c.finish()


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-p", "no:cacheprovider"]))
