"""Exact and Monte Carlo ground truth at small sizes.

* exhaustive enumeration of all 2^n simple random walk paths,
* edge-crossing laws against the branching-process product formula,
* power-series coefficients of the grand-canonical matrix expressions,
* simulation of the tilted edge-crossing Markov chain.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from typing import NamedTuple

import numpy as np

from .charge_model import ChargeModel, gstar_table
from .errors import ConfigError, DomainError, TruncationError
from .phase_diagram import Regime, classify, mu_of
from .transfer_operator import N_CAP, a_matrix, log_q_kernel, q_kernel, solve

ENUM_CAP = 22
CROSSING_CAP = 14
SERIES_CAP = 16
_BLOCK = 1 << 16


class Restriction(str, Enum):
    FREE = "free"
    BRIDGE = "bridge"
    LOOP = "loop"


class SeriesKind(str, Enum):
    BRIDGE = "bridge"
    LOOP = "loop"
    FULL = "full"


# ---------------------------------------------------------------- enumeration

def _path_blocks(n):
    """Yield (B, n) arrays of positions S_1..S_n covering all 2^n paths in order."""
    shifts = np.arange(n, dtype=np.int64)
    total = 1 << n
    for start in range(0, total, _BLOCK):
        k = np.arange(start, min(start + _BLOCK, total), dtype=np.int64)
        steps = 2 * ((k[:, None] >> shifts) & 1) - 1
        yield np.cumsum(steps, axis=1)


def _local_time_counts(pos, n):
    """Visit counts per site for each row of positions, sites shifted by n."""
    rows = pos.shape[0]
    width = 2 * n + 1
    flat = (np.arange(rows)[:, None] * width + pos + n).ravel()
    return np.bincount(flat, minlength=rows * width).reshape(rows, width)


def _mask(pos, restriction):
    if restriction is Restriction.FREE:
        return None
    if restriction is Restriction.BRIDGE:
        return (pos.min(axis=1) > 0) & (pos.max(axis=1) <= pos[:, -1])
    return (pos.min(axis=1) >= 0) & (pos[:, -1] == 0)


@dataclass(frozen=True)
class EnumerationReport:
    n: int
    restriction: Restriction
    z_star: float
    per_path_count: int
    delta: float
    beta: float
    model: dict = field(repr=False)


def enumerate_partition(model: ChargeModel, delta, beta, n, restriction="free"):
    """Z*_n = E[exp(sum_x G*(L_n(x))); restriction] over all 2^n paths."""
    restriction = Restriction(restriction)
    if not 0 <= n <= ENUM_CAP:
        raise ConfigError(f"enumeration supports 0 <= n <= {ENUM_CAP}, got {n}")
    if n == 0:
        return EnumerationReport(0, restriction, 1.0, 1, delta, beta, model.descriptor())
    g = np.asarray(gstar_table(model, n, delta, beta)[0])
    partial = []
    for pos in _path_blocks(n):
        weights = np.exp(g[_local_time_counts(pos, n)].sum(axis=1))
        mask = _mask(pos, restriction)
        partial.append(float(weights.sum() if mask is None else weights[mask].sum()))
    z = math.fsum(partial) / 2.0 ** n
    return EnumerationReport(n, restriction, z, 1 << n, delta, beta, model.descriptor())


def bridge_superadditivity(model: ChargeModel, delta, beta, n_total=20) -> float:
    """min over m + n <= n_total of log Z_{m+n} - log Z_m - log Z_n for bridges."""
    logz = [0.0] + [math.log(enumerate_partition(model, delta, beta, k, "bridge").z_star)
                    for k in range(1, n_total + 1)]
    return min(logz[m + k] - logz[m] - logz[k]
               for m in range(1, n_total) for k in range(1, n_total - m + 1))


# -------------------------------------------------------------- crossing laws

def _trim(profile):
    profile = list(profile)
    while profile and profile[-1] == 0:
        profile.pop()
    return tuple(profile)


def path_crossings(path):
    """(m+, m-, L_0, S_n) for a path S_1..S_n started at 0, signed endpoint.

    Paths ending below 0 are reflected first, so the profiles always refer
    to the walk with a nonnegative endpoint.
    """
    x = int(path[-1]) if len(path) else 0
    sign = -1 if x < 0 else 1
    walk = [0] + [sign * int(s) for s in path]
    up = defaultdict(int)
    down = defaultdict(int)
    for a, b in zip(walk, walk[1:]):
        low = min(a, b)
        if low >= 0:
            up[low] += 1
        else:
            down[-low - 1] += 1
    mplus = _trim(up[y] // 2 for y in range(max(up, default=-1) + 1))
    mminus = _trim(down[y] // 2 for y in range(max(down, default=-1) + 1))
    ell = sum(1 for s in walk[1:] if s == 0)
    return mplus, mminus, ell, x


@dataclass(frozen=True)
class CrossingLaw:
    n: int
    table: dict

    @property
    def total_mass(self) -> float:
        return math.fsum(self.table.values())


def edge_crossing_law(n) -> CrossingLaw:
    """Exact law of (m+, m-, L_0, S_n) by enumeration; keys use trimmed profiles."""
    if not 0 <= n <= CROSSING_CAP:
        raise ConfigError(f"crossing enumeration supports n <= {CROSSING_CAP}")
    table = defaultdict(float)
    if n == 0:
        table[((), (), 0, 0)] = 1.0
        return CrossingLaw(0, dict(table))
    p = 2.0 ** -n
    for pos in _path_blocks(n):
        for row in pos:
            table[path_crossings(row)] += p
    return CrossingLaw(n, dict(table))


def rho_start(ell, a, b) -> float:
    """Fair-coin split of ell individuals into a (+) and b (-)."""
    if a < 0 or b < 0 or a + b != ell:
        return 0.0
    return math.comb(ell, a) / 2.0 ** ell


def branching_law(ell, x, mplus, mminus) -> float:
    """Probability of the profiles under the two-species branching process.

    The + species receives one immigrant's worth of offspring at each of the
    generations 0..x-1.
    """
    mplus, mminus = _trim(mplus), _trim(mminus)
    p0 = mplus[0] if mplus else 0
    q0 = mminus[0] if mminus else 0
    prob = rho_start(ell, p0, q0)
    if prob == 0.0:
        return 0.0
    x = abs(x)
    length = max(len(mplus), x) + 1
    mp = list(mplus) + [0] * (length - len(mplus))
    for y in range(length - 1):
        prob *= q_kernel(mp[y] + 1, mp[y + 1]) if y < x else q_kernel(mp[y], mp[y + 1])
    mm = list(mminus) + [0]
    for y in range(len(mm) - 1):
        prob *= q_kernel(mm[y], mm[y + 1])
    return prob


def _compositions(total, parts, positive):
    """All tuples of ``parts`` integers summing to ``total`` (positive or weak)."""
    if parts == 0:
        if total == 0:
            yield ()
        return
    lo = 1 if positive else 0
    free = total - lo * parts
    if free < 0:
        return
    for cuts in combinations(range(free + parts - 1), parts - 1):
        bounds = (-1,) + cuts + (free + parts - 1,)
        yield tuple(bounds[i + 1] - bounds[i] - 1 + lo for i in range(parts))


def _plus_profiles(total, x):
    """Profiles reachable with immigration below x: weak on [0, x), then a positive run."""
    for head in range(total + 1):
        for first in _compositions(head, x, positive=False):
            rest = total - head
            for k in range(rest + 1):
                for run in _compositions(rest, k, positive=True):
                    yield _trim(first + run)


def _minus_profiles(total):
    for k in range(total + 1):
        yield from _compositions(total, k, positive=True)


def branching_table(n) -> dict:
    """Branching-formula measure on keys (m+, m-, ell, signed x) for walks of length n."""
    table = {}
    for x in range(-n, n + 1, 2):
        xi = (n - abs(x)) // 2
        for plus_total in range(xi + 1):
            for mp in set(_plus_profiles(plus_total, abs(x))):
                for mm in _minus_profiles(xi - plus_total):
                    ell = (mp[0] if mp else 0) + (mm[0] if mm else 0)
                    p = branching_law(ell, x, mp, mm)
                    if p > 0:
                        table[(mp, mm, ell, x)] = p
    return table


class RayKnightReport(NamedTuple):
    n: int
    tv_distance: float
    enumerated_mass: float
    branching_mass: float


def ray_knight_check(n) -> RayKnightReport:
    """Total variation distance between the enumerated and branching laws."""
    if n % 2:
        raise DomainError("the crossing comparison is run on even n")
    enum = edge_crossing_law(n).table
    branch = branching_table(n)
    keys = enum.keys() | branch.keys()
    tv = 0.5 * math.fsum(abs(enum.get(k, 0.0) - branch.get(k, 0.0)) for k in keys)
    return RayKnightReport(n, tv, math.fsum(enum.values()), math.fsum(branch.values()))


def crossing_path_count(ell, x, mplus, mminus) -> int:
    """Number of paths with the given crossing profiles, as a product of allocations."""
    def alloc(i, j):
        return int(j == 0) if i == 0 else math.comb(i + j - 1, i - 1)

    mplus, mminus = _trim(mplus), _trim(mminus)
    p0 = mplus[0] if mplus else 0
    q0 = mminus[0] if mminus else 0
    if p0 + q0 != ell:
        return 0
    x = abs(x)
    length = max(len(mplus), x) + 1
    mp = list(mplus) + [0] * (length - len(mplus))
    count = math.comb(ell, p0)
    for y in range(length - 1):
        count *= alloc(mp[y] + 1, mp[y + 1]) if y < x else alloc(mp[y], mp[y + 1])
    mm = list(mminus) + [0]
    for y in range(len(mm) - 1):
        count *= alloc(mm[y], mm[y + 1])
    return count


# --------------------------------------------------------------------- series
# A series matrix is an array of shape (degree + 1, N, N): coefficient k of
# t^k in slot k.

def series_mul(a, b):
    deg = a.shape[0] - 1
    out = np.zeros_like(a)
    for i in range(deg + 1):
        if not a[i].any():
            continue
        for j in range(deg + 1 - i):
            out[i + j] += a[i] @ b[j]
    return out


def series_identity(deg, n):
    out = np.zeros((deg + 1, n, n))
    out[0] = np.eye(n)
    return out


def series_geometric(a):
    """(1 - a)^{-1} for a series matrix without constant term."""
    if a[0].any():
        raise ConfigError("geometric series needs a vanishing constant term")
    deg, n = a.shape[0] - 1, a.shape[1]
    out = series_identity(deg, n)
    power = out.copy()
    for _ in range(deg):
        power = series_mul(power, a)
        out += power
    return out


def series_matrices(model: ChargeModel, delta, beta, n_max):
    """Series versions of A, A~ and A^ at mu = 0 with N = n_max + 1."""
    n = n_max + 1
    g = np.asarray(gstar_table(model, 2 * n, delta, beta)[0])
    a = np.zeros((n_max + 1, n, n))
    at = np.zeros_like(a)
    ah = np.zeros_like(a)
    for i in range(n):
        for j in range(n):
            k = i + j
            if k + 1 <= n_max:
                a[k + 1, i, j] = math.exp(g[k + 1] + log_q_kernel(i + 1, j))
            if k <= n_max:
                ah[k, i, j] = math.exp(g[k] + log_q_kernel(i + 1, j))
                if i >= 1:
                    at[k, i, j] = math.exp(g[k] + log_q_kernel(i, j))
    return a, at, ah


def series_coefficients(model: ChargeModel, delta, beta, n_max, kind="bridge") -> np.ndarray:
    """Coefficients c_0..c_{n_max} of the (0,0) entry of a grand-canonical expression.

    bridge: A (1 - A)^{-1}
    loop:   2 A^ (1 - A~)^{-1}, with c_0 = 1 for the empty loop
    full:   (1 - A~^T)^{-1} A^ (1 + A)(1 - A)^{-1} (1 - A~)^{-1}
    """
    kind = SeriesKind(kind)
    if not 0 <= n_max <= SERIES_CAP:
        raise ConfigError(f"series extraction supports n_max <= {SERIES_CAP}")
    a, at, ah = series_matrices(model, delta, beta, n_max)
    if kind is SeriesKind.BRIDGE:
        return series_mul(a, series_geometric(a))[:, 0, 0].copy()
    if kind is SeriesKind.LOOP:
        c = 2.0 * series_mul(ah, series_geometric(at))[:, 0, 0]
        c[0] = 1.0
        return c
    eye = series_identity(n_max, a.shape[1])
    left = series_geometric(np.transpose(at, (0, 2, 1)))
    out = series_mul(left, ah)
    out = series_mul(out, eye + a)
    out = series_mul(out, series_geometric(a))
    out = series_mul(out, series_geometric(at))
    return out[:, 0, 0].copy()


# ------------------------------------------------------------------ sampling

class ChainEstimate(NamedTuple):
    mean_y: float
    var_y: float
    stderr: float
    var_stderr: float


def simulate_chain(model: ChargeModel, delta, beta, steps, seed, batches=1000,
                   trunc=None) -> ChainEstimate:
    """Sample the tilted crossing chain Q(i,j) = A(i,j) nu(j) / nu(i) at mu(delta, beta).

    Each visited state m contributes an increment Y = 2m + 1.  ``var_y`` is the
    long-run variance from batch means and ``stderr`` the standard error of
    ``mean_y``.
    """
    if steps < batches or steps % batches:
        raise ConfigError("steps must be a positive multiple of batches")
    root = mu_of(model, delta, beta, trunc=trunc)
    if classify(model, delta, beta, root.value, trunc=trunc) is not Regime.BALLISTIC:
        raise DomainError("the chain is sampled in the ballistic phase only")
    n = root.trunc_n
    while True:
        sol = solve(model, root.value, delta, beta, n)
        a = a_matrix(model, root.value, delta, beta, n)
        nu = sol.eigvec
        kernel = a * nu[None, :] / (sol.lam * nu[:, None])
        rows = kernel.sum(axis=1)
        # states below this carry stationary mass < 1e-16 and are never reached
        live = nu >= 1e-8 * nu.max()
        deviation = float(np.max(np.abs(rows[live] - 1.0)))
        if deviation < 1e-8:
            break
        if trunc is not None or 2 * n > N_CAP:
            raise TruncationError(f"row sums deviate from 1 by {deviation:.3g}; enlarge N")
        n *= 2
    cdf = np.cumsum(kernel / rows[:, None], axis=1)
    cdf[:, -1] = 1.0
    rng = np.random.default_rng(seed)
    start = np.cumsum(nu ** 2)
    state = int(np.searchsorted(start / start[-1], rng.random(), side="right"))
    u = rng.random(steps)
    visited = np.empty(steps, dtype=np.int64)
    for t in range(steps):
        visited[t] = state
        state = int(np.searchsorted(cdf[state], u[t], side="right"))
    y = 2.0 * visited + 1.0
    mean_y = float(y.mean())
    batch_means = y.reshape(batches, -1).mean(axis=1)
    size = steps // batches
    var_y = float(batch_means.var(ddof=1) * size)
    return ChainEstimate(mean_y, var_y, math.sqrt(var_y / steps),
                         var_y * math.sqrt(2.0 / (batches - 1)))
