"""Root problems of the phase diagram: mu, mu~, beta_c and delta_c.

All roots are of the form log lambda(x) = target along a one-parameter family
in which lambda is monotone.  Truncations give lower bounds for lambda (the
Perron root of a principal submatrix of a nonnegative matrix is smaller), so a
truncated value above the target settles the sign even when the truncation has
not converged.  Once a bracket is known the root is polished by Brent's method
at a single fixed truncation, chosen where lambda is largest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import NamedTuple

from scipy.optimize import brentq

from .charge_model import ChargeModel, tilt_stats
from .errors import BracketError, DomainError, NumericalError, OverflowNumericalError, TruncationError
from .transfer_operator import N_CAP, N_START, solve

ROOT_TOL = 1e-10
CRITICAL_BAND = 1e-8
MAX_DOUBLINGS = 60
TRUNC_REL_TOL = 1e-9
# a truncated log-lambda this far above target is a safe sign certificate
_CLEAR_MARGIN = 0.05


class Regime(str, Enum):
    BALLISTIC = "ballistic"
    SUBBALLISTIC = "subballistic"
    CRITICAL = "critical"


class RootResult(NamedTuple):
    value: float
    residual: float
    trunc_n: int


class _Family:
    """log lambda(x) - target along x -> (mu, delta, beta)."""

    def __init__(self, model, params, tilde=False, target=0.0, trunc=None, n_cap=N_CAP):
        self.model = model
        self.params = params
        self.tilde = tilde
        self.target = target
        self.trunc = trunc
        self.n_cap = n_cap
        self._warm = {}

    def at(self, x, n):
        mu, delta, beta = self.params(x)
        sol = solve(self.model, mu, delta, beta, n, self.tilde, self._warm.get(n))
        self._warm[n] = sol.eigvec
        return sol

    def value(self, x, n):
        return self.at(x, n).log_lam - self.target

    def probe(self, x):
        """Return (value, n) where n is the converged truncation or None.

        With n None the value is a lower bound that is already positive.
        """
        if self.trunc is not None:
            return self._guarded(x, self.trunc), self.trunc
        n = N_START
        prev = None
        while True:
            try:
                val = self.value(x, n)
            except OverflowNumericalError as exc:
                if exc.log_value - self.target > 0:
                    return exc.log_value - self.target, None
                raise
            if prev is not None and abs(math.expm1(val - prev)) <= TRUNC_REL_TOL:
                return val, n
            if val > _CLEAR_MARGIN:
                return val, None
            if 2 * n > self.n_cap:
                if val > 0:
                    return val, None
                mu, delta, beta = self.params(x)
                raise TruncationError(
                    f"cannot resolve lambda at mu={mu}, delta={delta}, beta={beta} "
                    f"with N <= {self.n_cap}")
            prev = val
            n *= 2

    def _guarded(self, x, n):
        try:
            return self.value(x, n)
        except OverflowNumericalError as exc:
            if exc.log_value - self.target > 0:
                return exc.log_value - self.target
            raise

    def sign(self, x):
        return self.probe(x)[0] > 0


def _polish(fam: _Family, pos, neg, tol):
    """Root between ``pos`` (value > 0) and ``neg`` (value <= 0)."""
    n = fam.trunc
    for _ in range(200):
        if n is not None:
            break
        val, n_conv = fam.probe(pos)
        if n_conv is not None:
            n = n_conv
            break
        mid = 0.5 * (pos + neg)
        try:
            positive = fam.sign(mid)
        except TruncationError as exc:
            raise TruncationError(f"{exc}; root only bracketed", exc.solution,
                                  (min(pos, neg), max(pos, neg))) from None
        if positive:
            pos = mid
        else:
            neg = mid
    if n is None:
        raise TruncationError("no converged truncation near the root",
                              bracket=(min(pos, neg), max(pos, neg)))
    f_pos = fam.value(pos, n)
    f_neg = fam.value(neg, n)
    if f_pos <= 0 or f_neg > 0:
        if abs(f_pos) <= tol:
            return RootResult(pos, abs(math.expm1(f_pos)) * math.exp(fam.target), n)
        raise BracketError(f"bracket lost its sign change at N={n}")
    if f_neg == 0:
        return RootResult(neg, 0.0, n)
    scale = max(abs(pos), abs(neg), 1e-300)
    x = brentq(lambda t: fam.value(t, n), min(pos, neg), max(pos, neg),
               xtol=1e-15 * scale, rtol=1e-15, maxiter=300)
    lam_err = abs(math.expm1(fam.value(x, n))) * math.exp(fam.target)
    if lam_err > tol * max(1.0, math.exp(fam.target)):
        raise NumericalError(f"root residual {lam_err:.3g} exceeds tolerance {tol:.3g}")
    return RootResult(x, lam_err, n)


def _mu_root(fam: _Family, tol):
    val, n = fam.probe(0.0)
    if val <= 0:
        return RootResult(0.0, 0.0, n if n is not None else N_START)
    lo, hi = 0.0, 1.0
    for _ in range(MAX_DOUBLINGS):
        if not fam.sign(hi):
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise BracketError("lambda(mu) stays above target after 60 doublings")
    return _polish(fam, lo, hi, tol)


def _check_point(delta, beta):
    if not (math.isfinite(delta) and math.isfinite(beta)):
        raise DomainError("delta and beta must be finite")
    if delta < 0 or beta <= 0:
        raise DomainError("the phase diagram lives on delta >= 0, beta > 0")


def mu_of(model: ChargeModel, delta, beta, tol=ROOT_TOL, trunc=None) -> RootResult:
    """mu(delta, beta): root of lambda(mu) = 1, or 0 when lambda(0) <= 1."""
    _check_point(delta, beta)
    fam = _Family(model, lambda m: (m, delta, beta), trunc=trunc)
    return _mu_root(fam, tol)


def mu_tilde_of(model: ChargeModel, delta, beta, tol=ROOT_TOL, trunc=None) -> RootResult:
    """mu~(delta, beta): root of lambda~(mu) = 1, or 0 when there is none."""
    _check_point(delta, beta)
    fam = _Family(model, lambda m: (m, delta, beta), tilde=True, trunc=trunc)
    return _mu_root(fam, tol)


def mu_of_target(model, delta, beta, target, tol=ROOT_TOL, trunc=None) -> RootResult:
    """Root of log lambda(mu) = target, or 0 when log lambda(0) <= target."""
    _check_point(delta, beta)
    fam = _Family(model, lambda m: (m, delta, beta), target=target, trunc=trunc)
    return _mu_root(fam, tol)


def beta_critical(model: ChargeModel, delta, tol=ROOT_TOL, trunc=None) -> RootResult:
    """beta_c(delta): root in beta of lambda_{delta,beta}(0) = 1."""
    if not math.isfinite(delta) or delta < 0:
        raise DomainError("delta must be finite and nonnegative")
    if delta == 0:
        return RootResult(0.0, 0.0, 0)
    return _beta_critical(model, float(delta), tol, trunc)


@lru_cache(maxsize=256)
def _beta_critical(model, delta, tol, trunc):
    fam = _Family(model, lambda b: (0.0, delta, b), trunc=trunc)
    if fam.sign(1.0):
        lo, hi = 1.0, 2.0
        for _ in range(MAX_DOUBLINGS):
            if not fam.sign(hi):
                break
            lo, hi = hi, 2.0 * hi
        else:
            raise BracketError("no upper bracket for beta_c")
        return _polish(fam, lo, hi, tol)
    hi, lo = 1.0, 0.5
    for _ in range(MAX_DOUBLINGS):
        if fam.sign(lo):
            break
        hi, lo = lo, 0.5 * lo
    else:
        raise BracketError("no lower bracket for beta_c")
    return _polish(fam, lo, hi, tol)


def delta_critical(model: ChargeModel, beta, tol=ROOT_TOL, trunc=None) -> RootResult:
    """delta_c(beta): inverse of beta_c, i.e. root in delta of lambda_{delta,beta}(0) = 1."""
    if not math.isfinite(beta) or beta <= 0:
        raise DomainError("beta must be finite and positive")
    return _delta_critical(model, float(beta), tol, trunc)


@lru_cache(maxsize=256)
def _delta_critical(model, beta, tol, trunc):
    fam = _Family(model, lambda d: (0.0, d, beta), trunc=trunc)
    # delta = 0 lies in the subballistic phase for every beta > 0
    lo, hi = 0.0, 1.0
    for _ in range(MAX_DOUBLINGS):
        if fam.sign(hi):
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise BracketError("no upper bracket for delta_c")
    return _polish(fam, hi, lo, tol)


@dataclass(frozen=True)
class PhasePoint:
    delta: float
    beta: float
    mu: float
    mu_tilde: float
    f_excess: float
    f_total: float
    regime: Regime
    residual: float
    trunc_n: int


def classify(model, delta, beta, mu, tol=ROOT_TOL, trunc=None) -> Regime:
    # mu ~ K (beta_c - beta) near the curve, so only small mu needs beta_c
    if mu > 1e-4:
        return Regime.BALLISTIC
    beta_c = beta_critical(model, delta, tol, trunc).value
    if abs(beta - beta_c) <= CRITICAL_BAND:
        return Regime.CRITICAL
    return Regime.BALLISTIC if mu > 0 else Regime.SUBBALLISTIC


def phase_point(model: ChargeModel, delta, beta, tol=ROOT_TOL, trunc=None) -> PhasePoint:
    mu = mu_of(model, delta, beta, tol, trunc)
    regime = classify(model, delta, beta, mu.value, tol, trunc)
    mu_value = 0.0 if regime is Regime.CRITICAL else mu.value
    mu_t = mu_tilde_of(model, delta, beta, tol, trunc).value if mu_value > 0 else 0.0
    mu_t = min(mu_t, mu_value)
    f = tilt_stats(model, delta)[0]
    return PhasePoint(delta, beta, mu_value, mu_t, mu_value, mu_value + f, regime,
                      mu.residual, mu.trunc_n)
