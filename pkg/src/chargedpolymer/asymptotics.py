"""Regression of numerically computed curves against their limiting laws.

Each regime evaluates a short sequence of points, fits a power law on log
scales and compares the fitted constant with an independently computed
reference (a Sturm-Liouville root, a lattice span or the critical slope).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .charge_model import ChargeModel, Kind, tilt_stats
from .errors import ConfigError
from .observables import critical_slope
from .phase_diagram import beta_critical, mu_of
from .sturm_liouville import a_star


class Regime(str, Enum):
    SMALL_DELTA = "small-delta"
    LATTICE_LARGE_DELTA = "lattice-large-delta"
    FREE_ENERGY = "free-energy"
    CRITICAL_SLOPE = "critical-slope"


@dataclass(frozen=True)
class AsymptoticReport:
    regime: Regime
    exponent: float
    constant: float
    reference: float
    relative_error: float
    reference_source: str
    samples: list = field(default_factory=list)


def _slope(x, y):
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def _report(regime, exponent, constant, reference, source, samples):
    rel = abs(constant / reference - 1.0)
    return AsymptoticReport(regime, exponent, constant, reference, rel, source, samples)


def small_delta(model: ChargeModel, deltas=(0.2, 0.1, 0.05)) -> AsymptoticReport:
    """(beta_c - delta^2/2) / (delta^2/2)^(4/3) against -a*(1)."""
    if model.kind is not Kind.GAUSSIAN:
        raise ConfigError("the small-delta law is calibrated for the Gaussian model")
    scale = np.array([0.5 * d * d for d in deltas])
    shift = np.array([beta_critical(model, d).value for d in deltas]) - scale
    ratios = shift / scale ** (4.0 / 3.0)
    samples = [{"delta": d, "beta_c": float(s + x), "ratio": float(r)}
               for d, s, x, r in zip(deltas, shift, scale, ratios)]
    return _report(Regime.SMALL_DELTA, _slope(scale, -shift), float(ratios[-1]), -a_star(1.0),
                   "-a_star(1) from the Sturm-Liouville solver", samples)


def lattice_large_delta(model: ChargeModel, deltas=(5.0, 10.0)) -> AsymptoticReport:
    """beta_c(delta) / delta against 1 / T for a lattice law of span T."""
    if model.kind is not Kind.LATTICE:
        raise ConfigError("the large-delta law needs a lattice charge model")
    bc = np.array([beta_critical(model, d).value for d in deltas])
    ratios = bc / np.asarray(deltas)
    samples = [{"delta": d, "beta_c": float(b), "ratio": float(r)}
               for d, b, r in zip(deltas, bc, ratios)]
    return _report(Regime.LATTICE_LARGE_DELTA, _slope(deltas, bc), float(ratios[-1]),
                   1.0 / model.lattice_span, "1/T from the lattice span", samples)


def free_energy(model: ChargeModel, delta=1.0, betas=None) -> AsymptoticReport:
    """-F(delta, beta) ~ A beta^(2/3) as beta -> 0, A = a*(rho_delta)."""
    betas = np.logspace(-4, -2, 5) if betas is None else np.asarray(betas, dtype=float)
    f, rho, _ = tilt_stats(model, delta)
    minus_f = np.array([-(mu_of(model, delta, b).value + f) for b in betas])
    # the constant is fitted with the exponent held at its limiting value
    constant = float(np.exp(np.mean(np.log(minus_f) - (2.0 / 3.0) * np.log(betas))))
    samples = [{"beta": float(b), "minus_F": float(y)} for b, y in zip(betas, minus_f)]
    return _report(Regime.FREE_ENERGY, _slope(betas, minus_f), constant, a_star(rho),
                   "a_star(rho_delta) from the Sturm-Liouville solver", samples)


def critical_slope_regime(model: ChargeModel, delta=1.0, hs=(1e-3, 1e-4)) -> AsymptoticReport:
    """F*(delta, beta_c - h) / h against K_delta."""
    bc = beta_critical(model, delta).value
    hs = np.asarray(hs, dtype=float)
    fstar = np.array([mu_of(model, delta, bc - h).value for h in hs])
    samples = [{"h": float(h), "F_star": float(y), "ratio": float(y / h)}
               for h, y in zip(hs, fstar)]
    return _report(Regime.CRITICAL_SLOPE, _slope(hs, fstar), float(fstar[-1] / hs[-1]),
                   critical_slope(model, delta), "K_delta as a Hellmann-Feynman ratio", samples)


RUNNERS = {
    Regime.SMALL_DELTA: small_delta,
    Regime.LATTICE_LARGE_DELTA: lattice_large_delta,
    Regime.FREE_ENERGY: free_energy,
    Regime.CRITICAL_SLOPE: critical_slope_regime,
}


def run(model: ChargeModel, regime) -> AsymptoticReport:
    return RUNNERS[Regime(regime)](model)
