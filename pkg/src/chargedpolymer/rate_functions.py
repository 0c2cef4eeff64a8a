"""Large-deviation rate functions for the speed and the charge.

Writing mu' = mu(gamma) turns the supremum over gamma in I^v into

    I^v(theta) = mu + sup_{mu' >= mu~} [ -theta log lambda(mu') - mu' ],

whose objective is concave in mu' with derivative theta / v(mu') - 1, where
v(mu') = lambda / (-d lambda/dmu).  The flat piece is the boundary maximum at
mu' = mu~; otherwise the maximizer solves v(mu') = theta.  I^rho is handled
the same way over delta' >= delta_c(beta), with rho(delta') = theta'.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import brentq

from .charge_model import ChargeModel, gstar
from .errors import BracketError, DomainError
from .phase_diagram import delta_critical, mu_of, mu_of_target, mu_tilde_of
from .transfer_operator import derivatives_at, lambda_adaptive, solve

LOG2 = math.log(2.0)
MAX_DOUBLINGS = 60


class RateKind(str, Enum):
    SPEED = "speed"
    CHARGE = "charge"


def mu_gamma(model: ChargeModel, delta, beta, gamma, trunc=None) -> float:
    """Root in mu of lambda(mu) = exp(-gamma); 0 when lambda(0) < exp(-gamma)."""
    return mu_of_target(model, delta, beta, -gamma, trunc=trunc).value


class _SpeedRate:
    def __init__(self, model, delta, beta, trunc=None):
        self.model, self.delta, self.beta = model, delta, beta
        self.mu = mu_of(model, delta, beta, trunc=trunc).value
        self.mu_tilde = min(mu_tilde_of(model, delta, beta, trunc=trunc).value, self.mu)
        if trunc is None:
            ref = lambda_adaptive(model, self.mu_tilde, delta, beta)
        else:
            ref = solve(model, self.mu_tilde, delta, beta, trunc)
        self.n = ref.trunc_n
        self._warm = ref.eigvec
        self.log_lam_tilde = ref.log_lam
        self.v_tilde = self._speed_from(ref, self.mu_tilde)
        self.flat_slope = -self.log_lam_tilde
        self.boundary_value = self.mu - self.mu_tilde

    def _speed_from(self, sol, m):
        d_mu = derivatives_at(self.model, m, self.delta, self.beta, sol)[0]
        return sol.lam / -d_mu

    def _at(self, m):
        sol = solve(self.model, m, self.delta, self.beta, self.n, start=self._warm)
        self._warm = sol.eigvec
        return sol

    def speed_at(self, m):
        return self._speed_from(self._at(m), m)

    def __call__(self, theta):
        if theta < 0 or math.isnan(theta):
            raise DomainError("the speed rate function is defined for theta >= 0")
        if theta > 1:
            return math.inf
        if theta <= self.v_tilde:
            return self.boundary_value - theta * self.log_lam_tilde
        if theta == 1:
            # -log lambda(mu') - mu' -> log 2 - G*(1) as mu' -> infinity
            return self.mu + LOG2 - gstar(self.model, 1, self.delta, self.beta)
        lo = self.mu_tilde
        hi = max(2.0 * lo, 1.0)
        for _ in range(MAX_DOUBLINGS):
            if self.speed_at(hi) > theta:
                break
            lo, hi = hi, 2.0 * hi
        else:
            raise BracketError(f"no mu' with speed above {theta}")
        m = brentq(lambda t: self.speed_at(t) - theta, lo, hi, xtol=1e-14, rtol=1e-15)
        return self.mu - theta * self._at(m).log_lam - m


class _ChargeRate:
    def __init__(self, model, delta, beta, trunc=None):
        self.model, self.delta, self.beta, self.trunc = model, delta, beta, trunc
        self.mu = mu_of(model, delta, beta, trunc=trunc).value
        dc = delta_critical(model, beta, trunc=trunc)
        self.delta_c = dc.value
        sol = solve(model, 0.0, self.delta_c, beta, dc.trunc_n)
        d_mu, d_delta, _ = derivatives_at(model, 0.0, self.delta_c, beta, sol)
        self.rho_tilde = d_delta / -d_mu
        self.flat_slope = self.delta_c - delta
        self.boundary_value = self.mu
        self.ess_sup = model.ess_sup

    def rho_at(self, d):
        root = mu_of(self.model, d, self.beta, trunc=self.trunc)
        sol = solve(self.model, root.value, d, self.beta, root.trunc_n)
        d_mu, d_delta, _ = derivatives_at(self.model, root.value, d, self.beta, sol)
        return d_delta / -d_mu

    def __call__(self, theta):
        if theta < 0 or math.isnan(theta):
            raise DomainError("the charge rate function is defined for theta' >= 0")
        if theta > self.ess_sup:
            return math.inf
        if theta > 0.99 * self.ess_sup:
            raise DomainError(
                f"theta'={theta} is within 1% of the charge bound {self.ess_sup}; "
                "boundary behaviour there is not evaluated")
        if theta <= self.rho_tilde:
            return self.mu - theta * (self.delta - self.delta_c)
        lo = self.delta_c
        hi = max(2.0 * lo, 1.0)
        for _ in range(MAX_DOUBLINGS):
            if self.rho_at(hi) > theta:
                break
            lo, hi = hi, 2.0 * hi
        else:
            raise BracketError(f"no delta' with charge above {theta}")
        d = brentq(lambda t: self.rho_at(t) - theta, lo, hi, xtol=1e-14, rtol=1e-15)
        return self.mu + theta * (d - self.delta) - mu_of(self.model, d, self.beta,
                                                          trunc=self.trunc).value


def rate_speed(model: ChargeModel, delta, beta, theta, trunc=None) -> float:
    return _SpeedRate(model, delta, beta, trunc)(theta)


def rate_charge(model: ChargeModel, delta, beta, theta_prime, trunc=None) -> float:
    return _ChargeRate(model, delta, beta, trunc)(theta_prime)


@dataclass(frozen=True)
class RateCurve:
    kind: RateKind
    thetas: np.ndarray
    values: np.ndarray
    flat_end: float
    flat_slope: float
    boundary_value: float
    is_flat: np.ndarray = field(repr=False)


def rate_curve(model: ChargeModel, delta, beta, kind, theta_grid, trunc=None) -> RateCurve:
    kind = RateKind(kind)
    rate = (_SpeedRate if kind is RateKind.SPEED else _ChargeRate)(model, delta, beta, trunc)
    flat_end = rate.v_tilde if kind is RateKind.SPEED else rate.rho_tilde
    thetas = np.asarray(theta_grid, dtype=float)
    values = np.array([rate(t) for t in thetas])
    return RateCurve(kind, thetas, values, flat_end, rate.flat_slope, rate.boundary_value,
                     thetas <= flat_end)
