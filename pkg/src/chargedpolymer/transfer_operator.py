"""Truncated transfer operators A, A~, A^ and their Perron roots.

Indices run over 0..N-1.  With l = i+j+1 and G* the site weight,

    A(i, j)  = exp(-mu*l + G*(l)) Q(i+1, j)          (symmetric)
    A~(0, j) = 0,  A~(i, j) = A(i-1, j) for i >= 1
    A^(i, j) = exp(-mu*(l-1) + G*(l-1)) Q(i+1, j)

where Q is the critical geometric Galton-Watson kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.sparse.linalg import ArpackError, eigsh
from scipy.special import gammaln

from .charge_model import ChargeModel, gstar_table
from .errors import ConfigError, ConvergenceError, OverflowNumericalError, TruncationError

LOG2 = math.log(2.0)
RAYLEIGH_TOL = 1e-13
RESIDUAL_TOL = 1e-10
MAX_ITERS = 100_000
N_START = 64
N_CAP = 4096
# above this size power iteration is seeded with a Lanczos Perron vector
LANCZOS_MIN_N = 256
# exp() of anything above this risks overflow inside a matrix-vector product
_LOG_ENTRY_MAX = 600.0


def log_q_kernel(i: int, j: int) -> float:
    """log Q(i, j); -inf where Q vanishes."""
    if i < 0 or j < 0:
        raise ConfigError("Q is indexed by nonnegative integers")
    if i == 0:
        return 0.0 if j == 0 else -math.inf
    return (math.lgamma(i + j) - math.lgamma(i) - math.lgamma(j + 1)) - (i + j) * LOG2


def q_kernel(i: int, j: int) -> float:
    """Q(0, j) = 1{j=0};  Q(i, j) = C(i+j-1, i-1) 2^-(i+j) for i >= 1."""
    return math.exp(log_q_kernel(i, j))


@lru_cache(maxsize=8)
def _grid(n):
    k = np.add.outer(np.arange(n, dtype=np.int64), np.arange(n, dtype=np.int64))
    lfact = gammaln(np.arange(n) + 1.0)
    k.setflags(write=False)
    lfact.setflags(write=False)
    return k, lfact


def _log_hankel(model, mu, delta, beta, n, shift):
    """log entries exp(-mu*(k+shift) + G*(k+shift)) * C(k, i) 2^-(k+1), k = i+j."""
    if n < 1:
        raise ConfigError("truncation must be at least 1")
    ks = np.arange(2 * n - 1, dtype=float)
    g = gstar_table(model, 2 * n - 1, delta, beta)[0]
    h = -mu * (ks + shift) + g[shift:2 * n - 1 + shift] + gammaln(ks + 1.0) - (ks + 1.0) * LOG2
    k, lfact = _grid(n)
    return h[k] - lfact[:, None] - lfact[None, :]


def _exp_checked(log_entries, what):
    top = float(np.max(log_entries))
    if top > _LOG_ENTRY_MAX:
        raise OverflowNumericalError(f"{what} entries overflow (max log entry {top:.6g})", top)
    return np.exp(log_entries)


def a_matrix(model: ChargeModel, mu, delta, beta, n) -> np.ndarray:
    return _exp_checked(_log_hankel(model, mu, delta, beta, n, 1), "A")


def a_tilde_matrix(model: ChargeModel, mu, delta, beta, n) -> np.ndarray:
    log_a = _log_hankel(model, mu, delta, beta, n, 1)
    # A~ shares all but its last row with A; its diagonal A(i-1, i) bounds the Perron root
    out = np.zeros((n, n))
    if n > 1:
        diag = np.diagonal(log_a, offset=1)
        top = float(np.max(log_a[:-1]))
        if top > _LOG_ENTRY_MAX:
            raise OverflowNumericalError(
                f"A~ entries overflow (max log entry {top:.6g})", float(np.max(diag)))
        out[1:] = np.exp(log_a[:-1])
    return out


def a_hat_matrix(model: ChargeModel, mu, delta, beta, n) -> np.ndarray:
    return _exp_checked(_log_hankel(model, mu, delta, beta, n, 0), "A^")


@dataclass(frozen=True)
class OperatorBundle:
    trunc_n: int
    a_mat: np.ndarray
    a_tilde_mat: np.ndarray
    a_hat_mat: np.ndarray
    mu: float
    delta: float
    beta: float
    model: ChargeModel = field(repr=False)


def build_operators(model: ChargeModel, mu, delta, beta, trunc_n) -> OperatorBundle:
    if mu < 0 or delta < 0 or beta <= 0:
        raise ConfigError("operators need mu >= 0, delta >= 0 and beta > 0")
    if trunc_n < 1:
        raise ConfigError("trunc_n must be positive")
    if 2 * trunc_n - 1 > model.ell_max:
        raise ConfigError(f"trunc_n={trunc_n} needs G* beyond ell_max={model.ell_max}")
    return OperatorBundle(
        trunc_n,
        a_matrix(model, mu, delta, beta, trunc_n),
        a_tilde_matrix(model, mu, delta, beta, trunc_n),
        a_hat_matrix(model, mu, delta, beta, trunc_n),
        mu, delta, beta, model,
    )


@dataclass(frozen=True)
class SpectralSolution:
    lam: float
    eigvec: np.ndarray | None
    trunc_n: int
    residual: float
    trunc_gap: float = math.nan
    iterations: int = 0

    @property
    def log_lam(self) -> float:
        return math.log(self.lam) if self.lam > 0 else -math.inf


def _start_vector(n, start, skip_first=False):
    if start is None:
        x = np.ones(n)
    else:
        x = np.zeros(n)
        m = min(n, len(start))
        x[:m] = np.abs(start[:m])
        x[m:] = x[m - 1] * 1e-3 if m else 1.0
    if skip_first:
        x[0] = 0.0
    norm = np.linalg.norm(x)
    if norm == 0:
        x[1 if skip_first else 0:] = 1.0
        norm = np.linalg.norm(x)
    return x / norm


def _lanczos_seed(a, x):
    try:
        _, v = eigsh(a, k=1, which="LA", v0=x, tol=1e-14)
    except ArpackError:
        return x
    v = np.abs(v[:, 0])
    return v / np.linalg.norm(v)


def power_sym(a: np.ndarray, start=None, max_iters=MAX_ITERS) -> SpectralSolution:
    """Perron pair of a symmetric positive matrix by power iteration.

    Near criticality the spectral gap closes and plain iteration needs
    thousands of sweeps, so large matrices start from a Lanczos vector and the
    loop below only certifies it.
    """
    n = a.shape[0]
    x = _start_vector(n, start)
    if n >= LANCZOS_MIN_N:
        x = _lanczos_seed(a, x)
    lam_old = math.nan
    res = math.nan
    for it in range(1, max_iters + 1):
        y = a @ x
        lam = float(x @ y)
        if lam <= 0:
            return SpectralSolution(0.0, x, n, 0.0, iterations=it)
        res = float(np.linalg.norm(y - lam * x))
        if res <= RESIDUAL_TOL * lam and abs(lam - lam_old) <= RAYLEIGH_TOL * lam:
            return SpectralSolution(lam, x, n, res, iterations=it)
        x = y / np.linalg.norm(y)
        lam_old = lam
    raise ConvergenceError(f"power iteration did not converge in {max_iters} steps", res)


def power_nonneg(a: np.ndarray, start=None, skip_first=False, max_iters=MAX_ITERS):
    """Dominant eigenvalue of a nonnegative matrix by power iteration."""
    n = a.shape[0]
    x = _start_vector(n, start, skip_first)
    lam_old = math.nan
    res = math.nan
    for it in range(1, max_iters + 1):
        y = a @ x
        lam = float(np.linalg.norm(y))
        if lam == 0:
            return SpectralSolution(0.0, x, n, 0.0, iterations=it)
        res = float(np.linalg.norm(y - lam * x))
        if res <= RESIDUAL_TOL * lam and abs(lam - lam_old) <= RAYLEIGH_TOL * lam:
            return SpectralSolution(lam, x, n, res, iterations=it)
        x = y / lam
        lam_old = lam
    raise ConvergenceError(f"power iteration did not converge in {max_iters} steps", res)


def spectral_radius_sym(bundle: OperatorBundle, start=None) -> SpectralSolution:
    return power_sym(bundle.a_mat, start)


def spectral_radius_nonsym(bundle: OperatorBundle, start=None) -> float:
    return power_nonneg(bundle.a_tilde_mat, start, skip_first=True).lam


def solve(model, mu, delta, beta, n, tilde=False, start=None) -> SpectralSolution:
    """Perron root of the N x N truncation of A (or A~) without building a bundle."""
    if tilde:
        return power_nonneg(a_tilde_matrix(model, mu, delta, beta, n), start, skip_first=True)
    return power_sym(a_matrix(model, mu, delta, beta, n), start)


def lambda_adaptive(model: ChargeModel, mu, delta, beta, rel_tol=1e-9, tilde=False,
                    n_start=N_START, n_cap=N_CAP) -> SpectralSolution:
    """Double N until two successive truncations agree to ``rel_tol``."""
    n = n_start
    prev = solve(model, mu, delta, beta, n, tilde)
    while True:
        if 2 * n > n_cap:
            raise TruncationError(
                f"truncation did not converge by N={n} (mu={mu}, delta={delta}, beta={beta})",
                prev)
        cur = solve(model, mu, delta, beta, 2 * n, tilde, start=prev.eigvec)
        gap = abs(cur.lam - prev.lam)
        if gap <= rel_tol * cur.lam:
            return SpectralSolution(cur.lam, cur.eigvec, cur.trunc_n, cur.residual, gap,
                                    cur.iterations)
        prev = SpectralSolution(cur.lam, cur.eigvec, cur.trunc_n, cur.residual, gap,
                                cur.iterations)
        n *= 2


def derivatives_at(model, mu, delta, beta, solution: SpectralSolution, a=None):
    """Hellmann-Feynman derivatives (d_mu, d_delta, d_beta) of the Perron root of A."""
    n = solution.trunc_n
    if a is None:
        a = a_matrix(model, mu, delta, beta, n)
    nu = solution.eigvec
    k, _ = _grid(n)
    weights = np.bincount(k.ravel(), (a * np.outer(nu, nu)).ravel(), minlength=2 * n - 1)
    _, gd, gb = gstar_table(model, 2 * n - 1, delta, beta)
    ell = np.arange(1, 2 * n, dtype=float)
    return (-float(weights @ ell), float(weights @ gd[1:2 * n]), float(weights @ gb[1:2 * n]))


def dlambda(bundle: OperatorBundle, solution: SpectralSolution):
    return derivatives_at(bundle.model, bundle.mu, bundle.delta, bundle.beta, solution,
                          bundle.a_mat)
