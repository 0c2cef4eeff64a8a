import math

import numpy as np
import pytest

from chargedpolymer.charge_model import ChargeModel, gstar
from chargedpolymer.errors import ConfigError, TruncationError
from chargedpolymer.transfer_operator import (build_operators, derivatives_at, dlambda,
                                              lambda_adaptive, q_kernel, solve,
                                              spectral_radius_nonsym, spectral_radius_sym)

G = ChargeModel.gaussian()
PM1 = ChargeModel.lattice([-1, 1], [0.5, 0.5])


def test_q_kernel_values():
    assert q_kernel(0, 0) == 1.0
    assert q_kernel(0, 3) == 0.0
    assert q_kernel(2, 1) == pytest.approx(0.25, abs=1e-15)
    # Q(i+1, j) = P(S_{i+j} = i - j) / 2 at (i, j) = (2, 1)
    assert q_kernel(3, 1) == pytest.approx(0.5 * 3 / 8, abs=1e-15)
    assert q_kernel(400, 500) > 0


def test_q_rows_sum_to_one():
    for i in range(65):
        total = math.fsum(q_kernel(i + 1, j) for j in range(4096))
        assert abs(total - 1.0) < 1e-10


def test_bundle_entries():
    b = build_operators(G, 0.0, 0.0, 0.5, 6)
    assert b.a_mat[0, 0] == pytest.approx(0.5 / math.sqrt(2.0), abs=1e-15)
    assert b.a_mat[0, 0] == pytest.approx(0.3535534, abs=1e-7)
    b = build_operators(PM1, 0.3, 0.7, 0.2, 8)
    assert np.allclose(b.a_mat, b.a_mat.T, rtol=1e-14, atol=0)
    assert np.all(b.a_mat > 0)
    assert np.all(b.a_tilde_mat[0] == 0)
    assert np.array_equal(b.a_tilde_mat[1:], b.a_mat[:-1])
    assert b.a_hat_mat[0, 0] == pytest.approx(0.5, abs=1e-15)
    ell = 3  # entry (1, 1) of A carries ell = i + j + 1
    expected = math.exp(-0.3 * ell + gstar(PM1, ell, 0.7, 0.2)) * q_kernel(2, 1)
    assert b.a_mat[1, 1] == pytest.approx(expected, rel=1e-14)


def test_bundle_validation():
    with pytest.raises(ConfigError):
        build_operators(G, -0.1, 1.0, 0.2, 4)
    with pytest.raises(ConfigError):
        build_operators(G, 0.0, 1.0, 0.0, 4)
    with pytest.raises(ConfigError):
        build_operators(PM1, 0.0, 1.0, 0.2, PM1.ell_max)


def test_one_by_one_bundle():
    b = build_operators(G, 0.2, 1.0, 0.5, 1)
    assert spectral_radius_sym(b).lam == pytest.approx(b.a_mat[0, 0], rel=1e-15)


def test_two_by_two_tilde_closed_form():
    b = build_operators(G, 0.3, 1.0, 0.5, 2)
    m = b.a_tilde_mat
    tr, det = np.trace(m), np.linalg.det(m)
    root = 0.5 * (tr + math.sqrt(tr * tr - 4 * det))
    assert spectral_radius_nonsym(b) == pytest.approx(root, abs=1e-12)


def test_perron_solution_invariants():
    b = build_operators(G, 0.0, 1.0, 0.2, 128)
    sol = spectral_radius_sym(b)
    nu = sol.eigvec
    assert np.all(nu > 0)
    assert np.linalg.norm(nu) == pytest.approx(1.0, abs=1e-12)
    assert np.linalg.norm(b.a_mat @ nu - sol.lam * nu) <= 1e-9 * sol.lam
    assert sol.residual <= 1e-9 * sol.lam


def test_subcritical_delta_zero():
    assert lambda_adaptive(G, 0.0, 0.0, 0.1).lam < 1.0


def test_truncation_stability():
    lam100 = solve(G, 0.0, 1.0, 0.2, 100).lam
    lam200 = solve(G, 0.0, 1.0, 0.2, 200).lam
    assert lam100 == pytest.approx(lam200, abs=1e-8)
    assert lam200 > 1.0
    # truncations are principal submatrices of a positive operator
    assert lam100 <= lam200


def test_adaptive_gap():
    sol = lambda_adaptive(G, 0.0, 1.0, 0.2)
    assert sol.trunc_gap <= 1e-9 * sol.lam
    assert lambda_adaptive(G, 2.0, 1.0, 0.2).lam < sol.lam
    assert 0 < lambda_adaptive(PM1, 0.0, 0.5, 0.1).lam < math.inf


def test_adaptive_cap():
    with pytest.raises(TruncationError):
        lambda_adaptive(G, 0.0, 1.0, 0.2, rel_tol=1e-30, n_cap=256)


def test_decay_at_large_mu():
    assert lambda_adaptive(G, 20.0, 1.0, 0.2).lam < 1e-6
    assert spectral_radius_nonsym(build_operators(G, 50.0, 1.0, 0.2, 64)) < 1e-10


GRID = [(mu, d, b) for mu in (0.1, 0.4) for d in (0.5, 1.5) for b in (0.1, 0.6)]


@pytest.mark.parametrize("model", [G, PM1], ids=["gaussian", "pm1"])
@pytest.mark.parametrize("mu, delta, beta", GRID)
def test_tilde_gap(model, mu, delta, beta):
    b = build_operators(model, mu, delta, beta, 96)
    assert spectral_radius_nonsym(b) < spectral_radius_sym(b).lam


@pytest.mark.parametrize("mu, delta, beta", GRID)
def test_hellmann_feynman_signs_and_fd(mu, delta, beta):
    b = build_operators(G, mu, delta, beta, 128)
    sol = spectral_radius_sym(b)
    d_mu, d_delta, d_beta = dlambda(b, sol)
    assert d_mu < 0 and d_beta < 0 and d_delta > 0
    h = 1e-5
    lam = lambda m, d, bb: solve(G, m, d, bb, 128).lam
    assert d_mu == pytest.approx((lam(mu + h, delta, beta) - lam(mu - h, delta, beta)) / (2 * h),
                                 rel=1e-6)
    assert d_delta == pytest.approx((lam(mu, delta + h, beta) - lam(mu, delta - h, beta)) / (2 * h),
                                    rel=1e-6)
    assert d_beta == pytest.approx((lam(mu, delta, beta + h) - lam(mu, delta, beta - h)) / (2 * h),
                                   rel=1e-6)


def test_derivatives_at_matches_dlambda():
    b = build_operators(PM1, 0.1, 0.7, 0.3, 64)
    sol = spectral_radius_sym(b)
    assert derivatives_at(PM1, 0.1, 0.7, 0.3, sol) == pytest.approx(dlambda(b, sol), rel=1e-14)


def test_log_convex_and_decreasing_in_mu():
    h = 1e-2
    for mu in (0.05, 0.3, 1.0, 2.0):
        lo, mid, hi = (solve(G, m, 1.0, 0.2, 128).lam for m in (mu - h, mu, mu + h))
        assert mid * mid <= lo * hi
        assert lo > mid > hi


def test_seeded_start_is_consistent():
    cold = solve(G, 0.0, 1.0, 0.05, 512)
    warm = solve(G, 0.0, 1.0, 0.05, 512, start=np.ones(512))
    assert cold.lam == pytest.approx(warm.lam, rel=1e-12)
