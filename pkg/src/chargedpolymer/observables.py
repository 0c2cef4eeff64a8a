"""Speed, charge, their CLT variances, flat-piece endpoints and the critical slope.

First derivatives of lambda come from the Perron vector (Hellmann-Feynman)
and are exact for the truncated matrix.  Second derivatives are central
differences of those first derivatives, taken at one fixed truncation and
Richardson-extrapolated over the steps h and h/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .charge_model import ChargeModel
from .errors import DomainError
from .phase_diagram import (ROOT_TOL, Regime, beta_critical, classify, delta_critical, mu_of,
                            mu_of_target, mu_tilde_of)
from .transfer_operator import derivatives_at, lambda_adaptive, solve

FD_STEP = 1e-4


def _hf(model, mu, delta, beta, n):
    """(lambda, d_mu, d_delta, d_beta) at truncation n."""
    sol = solve(model, mu, delta, beta, n)
    return (sol.lam,) + derivatives_at(model, mu, delta, beta, sol)


def _richardson(f, x, h):
    d1 = (f(x + h) - f(x - h)) / (2 * h)
    d2 = (f(x + h / 2) - f(x - h / 2)) / h
    return (4 * d2 - d1) / 3


def _anchor(model, delta, beta, trunc):
    """mu(delta, beta), the truncation to use and whether the point is in B."""
    root = mu_of(model, delta, beta, trunc=trunc)
    regime = classify(model, delta, beta, root.value, trunc=trunc)
    mu = 0.0 if regime is Regime.CRITICAL else root.value
    return mu, root.trunc_n, regime


def speed(model: ChargeModel, delta, beta, trunc=None) -> float:
    """v = 1 / (-d/dmu log lambda) at mu(delta, beta); 0 in the subballistic phase."""
    mu, n, regime = _anchor(model, delta, beta, trunc)
    if regime is Regime.SUBBALLISTIC:
        return 0.0
    lam, d_mu, _, _ = _hf(model, mu, delta, beta, n)
    return lam / -d_mu


def charge_density(model: ChargeModel, delta, beta, trunc=None) -> float:
    """rho = d mu / d delta, as a Hellmann-Feynman ratio."""
    mu, n, regime = _anchor(model, delta, beta, trunc)
    if regime is Regime.SUBBALLISTIC:
        return 0.0
    _, d_mu, d_delta, _ = _hf(model, mu, delta, beta, n)
    return d_delta / -d_mu


def _require_interior(model, delta, beta, trunc):
    beta_c = beta_critical(model, delta, trunc=trunc).value
    if not beta < beta_c * (1 - 1e-3):
        raise DomainError(
            f"variances need beta < beta_c(1 - 1e-3); beta={beta}, beta_c={beta_c:.10g}")


def variances(model: ChargeModel, delta, beta, trunc=None, details=False):
    """(sigma_v^2, sigma_rho^2) inside the ballistic phase.

    sigma_v^2 is computed twice, as v^3 d^2/dmu^2 log lambda and as the
    second gamma-derivative of mu(gamma); ``details=True`` also returns both.
    """
    _require_interior(model, delta, beta, trunc)
    root = mu_of(model, delta, beta, trunc=trunc)
    mu, n = root.value, root.trunc_n

    lam, d_mu, _, _ = _hf(model, mu, delta, beta, n)
    v = lam / -d_mu
    h_mu = min(FD_STEP * max(1.0, mu), 0.5 * mu)

    def dlog_mu(m):
        lam_m, d_m, _, _ = _hf(model, m, delta, beta, n)
        return d_m / lam_m

    via_mu = v ** 3 * _richardson(dlog_mu, mu, h_mu)

    def slope_gamma(g):
        m = mu_of_target(model, delta, beta, -g, trunc=n).value
        lam_m, d_m, _, _ = _hf(model, m, delta, beta, n)
        return lam_m / -d_m

    via_gamma = _richardson(slope_gamma, 0.0, FD_STEP)

    def rho_at(d):
        m = mu_of(model, d, beta, trunc=n).value
        _, d_m, d_d, _ = _hf(model, m, d, beta, n)
        return d_d / -d_m

    sigma_rho2 = _richardson(rho_at, delta, FD_STEP * max(1.0, abs(delta)))
    if details:
        return via_mu, sigma_rho2, {"via_mu": via_mu, "via_gamma": via_gamma}
    return via_mu, sigma_rho2


def tilde_endpoints(model: ChargeModel, delta, beta, trunc=None):
    """(v~, rho~): the speed at mu~ and the charge on the critical curve at beta."""
    if delta <= 0 or beta <= 0:
        raise DomainError("flat-piece endpoints live in the open quadrant")
    mu_t = mu_tilde_of(model, delta, beta, trunc=trunc).value
    if trunc is None:
        sol = lambda_adaptive(model, mu_t, delta, beta)
    else:
        sol = solve(model, mu_t, delta, beta, trunc)
    d_mu = derivatives_at(model, mu_t, delta, beta, sol)[0]
    v_tilde = sol.lam / -d_mu

    d_c = delta_critical(model, beta, trunc=trunc)
    _, d_mu_c, d_delta_c, _ = _hf(model, 0.0, d_c.value, beta, d_c.trunc_n)
    return v_tilde, d_delta_c / -d_mu_c


def critical_slope(model: ChargeModel, delta, trunc=None) -> float:
    """K_delta = d_beta lambda / d_mu lambda at (beta_c(delta), mu = 0)."""
    if delta <= 0:
        raise DomainError("critical slope needs delta > 0")
    bc = beta_critical(model, delta, trunc=trunc)
    _, d_mu, _, d_beta = _hf(model, 0.0, delta, bc.value, bc.trunc_n)
    return d_beta / d_mu


@dataclass(frozen=True)
class ObservableSet:
    v: float
    rho: float
    sigma_v2: float
    sigma_rho2: float
    v_tilde: float
    rho_tilde: float
    method_notes: str


def observables(model: ChargeModel, delta, beta, trunc=None) -> ObservableSet:
    """All observables at one point.

    Variances are nan outside the ballistic interior and the flat-piece
    endpoints are nan on the boundary delta = 0.
    """
    v = speed(model, delta, beta, trunc)
    rho = charge_density(model, delta, beta, trunc)
    notes = ["first derivatives: Hellmann-Feynman"]
    try:
        s_v, s_rho = variances(model, delta, beta, trunc)
        notes.append(f"second derivatives: Richardson FD, step {FD_STEP:g}")
    except DomainError:
        s_v = s_rho = math.nan
        notes.append("variances undefined off the ballistic interior")
    try:
        v_t, rho_t = tilde_endpoints(model, delta, beta, trunc)
    except DomainError:
        v_t = rho_t = math.nan
    return ObservableSet(v, rho, s_v, s_rho, v_t, rho_t, "; ".join(notes))


__all__ = ["ObservableSet", "ROOT_TOL", "charge_density", "critical_slope", "observables",
           "speed", "tilde_endpoints", "variances"]
