"""Top eigenvalue chi(a, b) of  L g = (2ax - 4bx^2) g + g' + x g''  on (0, inf).

In self-adjoint form the operator is (x g')' + (2ax - 4bx^2) g.  It is
discretized by finite volumes on cell centres x_i = (i + 1/2) h of [0, L],
which makes the flux through x = 0 vanish naturally, with g(L) = 0.  The
result is a symmetric tridiagonal matrix whose largest eigenvalue is found by
LAPACK bisection, so only the top pair is ever computed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq

from .charge_model import ChargeModel, tilt_stats
from .errors import BracketError, ConfigError, DomainError, DomainTooSmallError

DEFAULT_L = 30.0
DEFAULT_M = 16000
BOUNDARY_MASS_TOL = 1e-8
MAX_EXTENSIONS = 4


@dataclass(frozen=True)
class SLGrid:
    x_max: float = DEFAULT_L
    points: int = DEFAULT_M

    def __post_init__(self):
        if self.points < 500:
            raise ConfigError(f"grid needs at least 500 points, got {self.points}")
        if not self.x_max > 0 or self.spacing > 0.05:
            raise ConfigError(f"grid spacing {self.spacing:.4g} must lie in (0, 0.05]")

    @property
    def spacing(self) -> float:
        return self.x_max / self.points

    @property
    def x(self) -> np.ndarray:
        return (np.arange(self.points) + 0.5) * self.spacing

    def halved(self) -> "SLGrid":
        return SLGrid(self.x_max, self.points // 2)

    def doubled(self) -> "SLGrid":
        return SLGrid(2 * self.x_max, 2 * self.points)


@dataclass(frozen=True)
class SLSolution:
    a: float
    b: float
    chi: float
    eigfun: np.ndarray
    grid: SLGrid
    refinement_gap: float


def _top_pair(a, b, grid: SLGrid, vectors=True):
    h = grid.spacing
    x = grid.x
    faces = np.arange(grid.points + 1) * h
    diag = -(faces[:-1] + faces[1:]) / h ** 2 + 2 * a * x - 4 * b * x ** 2
    off = faces[1:-1] / h ** 2
    m = grid.points
    if not vectors:
        return eigh_tridiagonal(diag, off, eigvals_only=True, select="i",
                                select_range=(m - 1, m - 1))[0], None
    w, v = eigh_tridiagonal(diag, off, select="i", select_range=(m - 1, m - 1))
    return w[0], v[:, 0]


def _chi_value(a, b, grid):
    return _top_pair(a, b, grid, vectors=False)[0]


def chi(a, b, grid: SLGrid | None = None, extend=True) -> SLSolution:
    """Largest eigenvalue and positive unit eigenfunction of L^{a,b}."""
    if not b > 0:
        raise DomainError("chi needs b > 0")
    grid = grid or SLGrid()
    for _ in range(MAX_EXTENSIONS + 1):
        value, vec = _top_pair(a, b, grid)
        g = np.abs(vec)
        x = grid.x
        g /= math.sqrt(trapezoid(g ** 2, x))
        tail = x >= grid.x_max - 5 * grid.spacing
        mass = trapezoid(g[tail] ** 2, x[tail])
        if mass <= BOUNDARY_MASS_TOL:
            gap = abs(value - _chi_value(a, b, grid.halved()))
            return SLSolution(a, b, float(value), g, grid, float(gap))
        if not extend:
            break
        grid = grid.doubled()
    raise DomainTooSmallError(
        f"eigenfunction mass {mass:.3g} near x={grid.x_max:g} at a={a}, b={b}; enlarge x_max")


def chi_value(a, b, grid: SLGrid | None = None) -> float:
    return chi(a, b, grid).chi


def a_star(b, grid: SLGrid | None = None, tol=1e-8) -> float:
    """Zero in a of the increasing map a -> chi(a, b)."""
    if not b > 0:
        raise DomainError("a_star needs b > 0")
    f = lambda a: chi_value(a, b, grid)
    lo, hi = -1.0, 1.0
    for _ in range(60):
        if f(lo) < 0:
            break
        lo *= 2
    else:
        raise BracketError("chi stays positive as a decreases")
    for _ in range(60):
        if f(hi) > 0:
            break
        lo, hi = hi, 2 * hi
    else:
        raise BracketError("chi stays negative as a increases")
    root = brentq(f, lo, hi, xtol=1e-14, rtol=1e-15)
    if abs(f(root)) > tol:
        raise BracketError(f"|chi(a*)| = {abs(f(root)):.3g} exceeds {tol:g}")
    return root


@dataclass(frozen=True)
class ScalingConstants:
    A: float
    B: float
    C: float
    C_scaling_law: float


def scaling_constants(model: ChargeModel, delta, grid: SLGrid | None = None) -> ScalingConstants:
    """Weak-coupling constants built from a*(rho_delta), rho_delta = E^delta[omega]."""
    if not delta > 0:
        raise DomainError("scaling constants need delta > 0")
    _, rho, rho_prime = tilt_stats(model, delta)
    a0 = a_star(rho, grid)
    step = 1e-3
    dchi = (chi_value(a0 + step, rho, grid) - chi_value(a0 - step, rho, grid)) / (2 * step)
    rho_p = tilt_stats(model, delta + step)[1]
    rho_m = tilt_stats(model, delta - step)[1]
    c_fd = -(a_star(rho_p, grid) - a_star(rho_m, grid)) / (2 * step)
    c_law = -(2.0 / 3.0) * a_star(1.0, grid) * rho ** (-1.0 / 3.0) * rho_prime
    return ScalingConstants(a0, 1.0 / dchi, c_fd, c_law)
