"""Charge distributions and the site weight G*_{delta,beta}(ell).

G*(ell) = log E[exp(delta*Omega - beta*Omega**2)] where Omega is a sum of ell
i.i.d. charges.  Gaussian charges have a closed form; lattice charges are
handled exactly by convolving the law of a single charge on its lattice.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import cached_property, lru_cache, reduce

import numpy as np
from scipy.signal import fftconvolve

from .errors import ConfigError, OverflowNumericalError

MOMENT_TOL = 1e-9
PROB_SUM_TOL = 1e-12
SPAN_TOL = 1e-12
GAUSSIAN_ELL_MAX = 100_000
LATTICE_ELL_MAX = 20_000

# Above this many multiply-adds a convolution switches to FFT.
_DIRECT_CONV_LIMIT = 1 << 22


class Kind(str, Enum):
    GAUSSIAN = "gaussian"
    LATTICE = "lattice"


@dataclass(frozen=True)
class OmegaLaw:
    """Exact law of Omega_ell on its lattice (zero-probability points dropped)."""

    ell: int
    support: np.ndarray
    probs: np.ndarray


@dataclass(frozen=True)
class ChargeModel:
    """Law of a single charge omega_1, standardized to mean 0 and variance 1.

    Build instances with :meth:`gaussian`, :meth:`lattice` or
    :meth:`from_descriptor`; the constructor only validates.
    """

    kind: Kind
    lattice_support: tuple = ()
    lattice_probs: tuple = ()
    lattice_span: float = float("nan")
    ell_max: int = GAUSSIAN_ELL_MAX
    _steps: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        if self.kind is Kind.GAUSSIAN:
            if self.lattice_support or self.lattice_probs:
                raise ConfigError("gaussian model takes no lattice table")
            return
        values = np.asarray(self.lattice_support, dtype=float)
        probs = np.asarray(self.lattice_probs, dtype=float)
        if values.ndim != 1 or values.size == 0 or values.size != probs.size:
            raise ConfigError("lattice values and probs must be non-empty lists of equal length")
        if not (np.all(np.isfinite(values)) and np.all(np.isfinite(probs))):
            raise ConfigError("lattice values and probs must be finite")
        if np.any(probs <= 0) or np.any(probs > 1):
            raise ConfigError("lattice probs must lie in (0, 1]")
        if abs(probs.sum() - 1.0) > PROB_SUM_TOL:
            raise ConfigError(f"lattice probs must sum to 1 (got {probs.sum():.17g})")
        if np.any(np.diff(values) <= 0):
            raise ConfigError("lattice values must be distinct")
        mean = float(probs @ values)
        var = float(probs @ (values - mean) ** 2)
        if abs(mean) > MOMENT_TOL:
            raise ConfigError(f"charge mean must be 0 (got {mean:.3g}); use standardize=True")
        if abs(var - 1.0) > MOMENT_TOL:
            raise ConfigError(f"charge variance must be 1 (got {var:.17g}); use standardize=True")
        span = self.lattice_span
        if not (span > 0):
            raise ConfigError("lattice span must be positive")
        steps = values / span
        if np.max(np.abs(steps - np.round(steps))) > SPAN_TOL * max(1.0, np.max(np.abs(steps))):
            raise ConfigError("every lattice value must be an integer multiple of the span")
        if not self._steps:
            object.__setattr__(self, "_steps", tuple(int(k) for k in np.round(steps)))

    # -- construction -----------------------------------------------------

    @classmethod
    def gaussian(cls) -> "ChargeModel":
        return cls(Kind.GAUSSIAN)

    @classmethod
    def lattice(cls, values, probs, standardize=False, ell_max=LATTICE_ELL_MAX) -> "ChargeModel":
        values = np.asarray(values, dtype=float)
        probs = np.asarray(probs, dtype=float)
        if values.shape != probs.shape or values.ndim != 1:
            raise ConfigError("lattice values and probs must be lists of equal length")
        order = np.argsort(values)
        values, probs = values[order], probs[order]
        if standardize:
            if np.any(probs < 0) or probs.sum() <= 0:
                raise ConfigError("lattice probs must be nonnegative with positive total")
            probs = probs / probs.sum()
            mean = probs @ values
            sd = math.sqrt(probs @ (values - mean) ** 2)
            if sd == 0:
                raise ConfigError("a one-point charge law cannot be standardized")
            values = (values - mean) / sd
        span = _lattice_span(values)
        return cls(Kind.LATTICE, tuple(values.tolist()), tuple(probs.tolist()), span, int(ell_max))

    @classmethod
    def discretized_normal(cls, points=2000, width=10.0) -> "ChargeModel":
        """Standard normal restricted to ``points`` equally spaced lattice sites."""
        k = np.arange(points) - (points - 1) / 2.0
        x = k * (2 * width / (points - 1))
        w = np.exp(-0.5 * x * x)
        # for even counts the sites are odd multiples of half a step: still a lattice
        return cls.lattice(x, w / w.sum(), standardize=True)

    @classmethod
    def from_descriptor(cls, desc) -> "ChargeModel":
        """Build from ``{"kind": "gaussian"}`` or ``{"kind": "lattice", ...}``."""
        if not isinstance(desc, dict) or "kind" not in desc:
            raise ConfigError('model descriptor must be an object with a "kind" field')
        kind = desc["kind"]
        if kind == "gaussian":
            extra = set(desc) - {"kind"}
            if extra:
                raise ConfigError(f"unexpected fields for gaussian model: {sorted(extra)}")
            return cls.gaussian()
        if kind == "lattice":
            try:
                values = [float(v) for v in desc["values"]]
                probs = [float(p) for p in desc["probs"]]
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError('lattice model needs numeric "values" and "probs" lists') from exc
            kwargs = {"standardize": bool(desc.get("standardize", False))}
            if "ell_max" in desc:
                kwargs["ell_max"] = int(desc["ell_max"])
            return cls.lattice(values, probs, **kwargs)
        if kind in ("continuous", "density"):
            raise ConfigError("continuous non-Gaussian charge laws are not supported")
        raise ConfigError(f"unknown model kind {kind!r}")

    @classmethod
    def load(cls, path) -> "ChargeModel":
        try:
            with open(path, encoding="utf-8") as fh:
                desc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read model file {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"model file {path} is not valid JSON: {exc}") from exc
        return cls.from_descriptor(desc)

    def descriptor(self) -> dict:
        if self.kind is Kind.GAUSSIAN:
            return {"kind": "gaussian"}
        return {"kind": "lattice", "values": list(self.lattice_support),
                "probs": list(self.lattice_probs)}

    # -- lattice helpers --------------------------------------------------

    @cached_property
    def _base(self):
        """(k_min, probability vector over lattice indices k_min..k_max)."""
        kmin, kmax = min(self._steps), max(self._steps)
        p = np.zeros(kmax - kmin + 1)
        for k, q in zip(self._steps, self.lattice_probs):
            p[k - kmin] += q
        return kmin, p

    @property
    def ess_sup(self) -> float:
        if self.kind is Kind.GAUSSIAN:
            return math.inf
        return max(self.lattice_support)

    def _check_ell(self, ell):
        if ell < 0:
            raise ConfigError("ell must be nonnegative")
        if ell > self.ell_max:
            raise ConfigError(f"ell={ell} exceeds ell_max={self.ell_max} for this model")


def _lattice_span(values) -> float:
    """Largest T with every value in T*Z, found via rational ratios."""
    nz = [v for v in values if abs(v) > 1e-14]
    if not nz:
        raise ConfigError("lattice support must contain a nonzero value")
    ref = min(nz, key=abs)
    fracs = []
    for v in nz:
        fr = Fraction(v / ref).limit_denominator(10_000)
        if abs(float(fr) - v / ref) > 1e-9 * max(1.0, abs(v / ref)):
            raise ConfigError("lattice values are not commensurate (no lattice span exists)")
        fracs.append(fr)
    den = reduce(math.lcm, (f.denominator for f in fracs), 1)
    num = reduce(math.gcd, (abs(f.numerator * (den // f.denominator)) for f in fracs), 0)
    return abs(ref) / den * num


def _convolve(a, b):
    if a.size * b.size <= _DIRECT_CONV_LIMIT:
        return np.convolve(a, b)
    out = fftconvolve(a, b)
    np.clip(out, 0.0, None, out=out)
    return out


def omega_law(model: ChargeModel, ell: int) -> OmegaLaw:
    """Exact law of Omega_ell by binary-exponent convolution."""
    if model.kind is not Kind.LATTICE:
        raise ConfigError("omega_law is only defined for lattice models")
    model._check_ell(ell)
    kmin, base = model._base
    result = np.array([1.0])
    power = base
    n = ell
    while n:
        if n & 1:
            result = _convolve(result, power)
        n >>= 1
        if n:
            power = _convolve(power, power)
    support = (np.arange(result.size) + ell * kmin) * model.lattice_span
    keep = result > 0
    return OmegaLaw(ell, support[keep], result[keep])


def _tilted(support, probs, delta, beta):
    """(log-mean weight, tilted mean, tilted second moment) for a finite law."""
    expo = delta * support - beta * support * support + np.log(probs)
    top = expo.max()
    w = np.exp(expo - top)
    total = w.sum()
    return top + math.log(total), float(w @ support) / total, float(w @ (support * support)) / total


def _check_params(delta, beta):
    if not (math.isfinite(delta) and math.isfinite(beta)):
        raise ConfigError("delta and beta must be finite")
    if beta < 0:
        raise ConfigError("beta must be nonnegative")


def gstar(model: ChargeModel, ell: int, delta: float, beta: float) -> float:
    """G*_{delta,beta}(ell) = log E[exp(delta*Omega_ell - beta*Omega_ell**2)]."""
    _check_params(delta, beta)
    model._check_ell(ell)
    if ell == 0:
        return 0.0
    if model.kind is Kind.GAUSSIAN:
        s = 1.0 + 2.0 * beta * ell
        value = -0.5 * math.log(s) + 0.5 * delta * delta * ell / s
    else:
        law = omega_law(model, ell)
        value = _tilted(law.support, law.probs, delta, beta)[0]
    if not math.isfinite(value):
        raise OverflowNumericalError(f"G*({ell}) is not finite at delta={delta}, beta={beta}")
    return value


def gstar_grad(model: ChargeModel, ell: int, delta: float, beta: float):
    """(dG*/ddelta, dG*/dbeta): tilted mean of Omega and minus its tilted second moment."""
    _check_params(delta, beta)
    model._check_ell(ell)
    if ell == 0:
        return 0.0, 0.0
    if model.kind is Kind.GAUSSIAN:
        s = 1.0 + 2.0 * beta * ell
        d_delta = delta * ell / s
        d_beta = -ell / s - (delta * ell / s) ** 2
    else:
        law = omega_law(model, ell)
        _, m1, m2 = _tilted(law.support, law.probs, delta, beta)
        d_delta, d_beta = m1, -m2
    if not (math.isfinite(d_delta) and math.isfinite(d_beta)):
        raise OverflowNumericalError(f"G* gradient at ell={ell} is not finite")
    return d_delta, d_beta


def gstar_table(model: ChargeModel, ell_top: int, delta: float, beta: float):
    """Arrays (G*, dG*/ddelta, dG*/dbeta) for ell = 0..ell_top.

    Lattice tables are built by growing Omega one charge at a time, which is
    cheaper than independent convolution powers when every ell is needed.
    The arrays are shared through a cache and must not be modified.
    """
    _check_params(delta, beta)
    model._check_ell(ell_top)
    return _gstar_table(model, int(ell_top), float(delta), float(beta))


@lru_cache(maxsize=64)
def _gstar_table(model, ell_top, delta, beta):
    ell = np.arange(ell_top + 1, dtype=float)
    if model.kind is Kind.GAUSSIAN:
        s = 1.0 + 2.0 * beta * ell
        g = -0.5 * np.log(s) + 0.5 * delta * delta * ell / s
        gd = delta * ell / s
        gb = -ell / s - gd * gd
    else:
        g = np.zeros(ell_top + 1)
        gd = np.zeros(ell_top + 1)
        gb = np.zeros(ell_top + 1)
        kmin, base = model._base
        span = model.lattice_span
        p = np.array([1.0])
        for n in range(1, ell_top + 1):
            p = _convolve(p, base)
            keep = p > 0
            omega = ((np.arange(p.size) + n * kmin) * span)[keep]
            g[n], m1, m2 = _tilted(omega, p[keep], delta, beta)
            gd[n], gb[n] = m1, -m2
    if not (np.all(np.isfinite(g)) and np.all(np.isfinite(gd)) and np.all(np.isfinite(gb))):
        raise OverflowNumericalError(f"G* table is not finite at delta={delta}, beta={beta}")
    for arr in (g, gd, gb):
        arr.setflags(write=False)
    return g, gd, gb


def tilt_stats(model: ChargeModel, delta: float):
    """(f(delta), rho_delta, var0) = (-log M(delta), mean and variance under the tilt)."""
    if not math.isfinite(delta):
        raise ConfigError("delta must be finite")
    if model.kind is Kind.GAUSSIAN:
        f = -0.5 * delta * delta
        if not math.isfinite(f):
            raise OverflowNumericalError(f"M(delta) overflows at delta={delta}")
        return f, float(delta), 1.0
    v = np.asarray(model.lattice_support)
    p = np.asarray(model.lattice_probs)
    log_m, m1, m2 = _tilted(v, p, delta, 0.0)
    if not math.isfinite(log_m):
        raise OverflowNumericalError(f"M(delta) overflows at delta={delta}")
    return float(-log_m), float(m1), float(max(m2 - m1 * m1, 0.0))


def load_model(source) -> ChargeModel:
    """Accept a ChargeModel, a descriptor dict or a path to a JSON descriptor."""
    if isinstance(source, ChargeModel):
        return source
    if isinstance(source, dict):
        return ChargeModel.from_descriptor(source)
    return ChargeModel.load(source)
