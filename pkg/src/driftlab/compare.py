"""Distributional and pathwise comparison checks.

Three layers, weakest to strongest:
  - dominance_check: first-order stochastic dominance of the weighted
    terminal law over a reference ensemble, per coordinate, with bootstrap
    confidence bounds.  This is the distribution-level consequence of a
    pathwise ordering, not the ordering itself.
  - pathwise_compare: knot-by-knot ordering of two coupled ensembles,
    restricted to knots before each path's stopping time.
  - kolmogorov_scaling: the 3rd-moment increment scaling fit whose slope
    should sit near 3/2 for the processes this library produces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import ALIVE, DriftFn, PathBatch, TimeGrid, _philox_key, chunk_bounds
from .errors import (
    ConfigurationError,
    DegenerateWeightsError,
    InputError,
    UnsupportedRegimeError,
)
from .integrate import ExplosionInfo, euler_maruyama
from .zdual import WeightedSampleSet

_Z95 = 1.959963984540054

TOL_FLOOR = 0.01

DEFAULT_BOOT = 500

_BOOT_CHUNK = 64


@dataclass(frozen=True)
class WeightedECDF:
    """Right-continuous step CDF of a weighted one-dimensional sample."""

    values: np.ndarray = field(repr=False)
    cumulative: np.ndarray = field(repr=False)  # len(values) + 1, starts at 0

    def __call__(self, q) -> np.ndarray:
        idx = np.searchsorted(self.values, np.asarray(q, dtype=float), side="right")
        return self.cumulative[idx]


def weighted_ecdf(samples: WeightedSampleSet, coordinate: int = 0,
                  ess_floor: float = 2.0) -> WeightedECDF:
    """Weighted empirical CDF of one coordinate of a terminal sample set."""
    if not (0 <= coordinate < samples.values.shape[1]):
        raise InputError(f"coordinate {coordinate} out of range")
    if samples.ess < ess_floor:
        raise DegenerateWeightsError(
            f"effective sample size {samples.ess:.2f} below floor {ess_floor}")
    v = samples.values[:, coordinate]
    order = np.argsort(v, kind="stable")
    w = samples.weights[order]
    cum = np.concatenate([[0.0], np.cumsum(w)])
    cum /= cum[-1]
    return WeightedECDF(values=v[order], cumulative=cum)


def _weighted_quantiles(v, w, qs):
    order = np.argsort(v, kind="stable")
    vs = v[order]
    cw = np.cumsum(w[order])
    cw = cw / cw[-1]
    idx = np.searchsorted(cw, qs, side="left")
    return vs[np.minimum(idx, vs.size - 1)]


@dataclass(frozen=True)
class CoordinateGaps:
    """Probe-level dominance statistics for one coordinate."""

    coordinate: int
    probes: np.ndarray = field(repr=False)
    f_z: np.ndarray = field(repr=False)
    f_y: np.ndarray = field(repr=False)
    gap: np.ndarray = field(repr=False)       # F_Z - F_Y; <= 0 under dominance
    gap_lower: np.ndarray = field(repr=False)
    gap_upper: np.ndarray = field(repr=False)

    @property
    def max_gap(self) -> float:
        return float(np.max(self.gap))

    @property
    def max_upper(self) -> float:
        return float(np.max(self.gap_upper))


@dataclass(frozen=True)
class DominanceReport:
    """Outcome of the weighted stochastic-dominance check.

    "dominates" requires the bootstrap upper bound of F_Z - F_Y to stay
    below the effective tolerance at every probe of every coordinate;
    "violated" requires the lower bound to clear it somewhere; anything
    else is inconclusive.  `equality` flags the two-sided case where the
    whole confidence envelope fits inside the tolerance band.
    """

    verdict: str
    equality: bool
    coordinates: tuple
    knot: int
    tol: float
    tol_effective: float
    ess: float
    n_boot: int
    surviving_fraction: float
    note: str = ""

    @property
    def max_gap(self) -> float:
        if not self.coordinates:
            return math.nan
        return max(c.max_gap for c in self.coordinates)


def dominance_check(Z_samples: WeightedSampleSet, Y_paths: PathBatch, knot: int,
                    probes=None, tol: float = 0.02, n_boot: int = DEFAULT_BOOT,
                    boot_seed: int = 0) -> DominanceReport:
    """First-order dominance of the weighted Z-law over the Y ensemble.

    Comparison is restricted to Y paths whose value at `knot` precedes their
    stopping time; the surviving fraction is reported.  Tolerance widens to
    ESS^(-1/2) once that exceeds TOL_FLOOR, so weight degeneracy cannot buy
    a confident verdict.
    """
    if not (0 <= knot < Y_paths.grid.n_knots):
        raise InputError(f"knot {knot} outside the grid")
    if Z_samples.knot != knot:
        raise InputError(
            f"sample set was taken at knot {Z_samples.knot}, not {knot}")
    dim = Z_samples.values.shape[1]
    if Y_paths.dim != dim:
        raise InputError("dimension mismatch between sample set and paths")
    valid = (Y_paths.status == ALIVE) | (Y_paths.status > knot)
    surviving = float(np.mean(valid))
    ess = Z_samples.ess
    extra = 1.0 / math.sqrt(ess) if ess > 0 else math.inf
    tol_eff = max(tol, extra) if extra > TOL_FLOOR else tol
    if not np.any(valid):
        return DominanceReport(
            verdict="inconclusive", equality=False, coordinates=(), knot=knot,
            tol=tol, tol_effective=tol_eff, ess=ess, n_boot=n_boot,
            surviving_fraction=0.0,
            note="all comparison paths stopped before the requested knot")
    yv = Y_paths.values[valid, knot, :]
    zv = Z_samples.values
    zw = Z_samples.weights
    nz, ny = zv.shape[0], yv.shape[0]
    coords = []
    dominates_all, violated_any, equal_all = True, False, True
    for d in range(dim):
        if probes is None:
            qz = _weighted_quantiles(zv[:, d], zw, np.arange(0.05, 0.951, 0.05))
            qy = np.quantile(yv[:, d], np.arange(0.1, 0.91, 0.1))
            pr = np.unique(np.concatenate([qz, qy]))
        else:
            pr = np.unique(np.asarray(probes, dtype=float))
        zin = (zv[:, d][:, np.newaxis] <= pr[np.newaxis, :])
        wz = zin * zw[:, np.newaxis]              # (nz, P)
        yin = (yv[:, d][:, np.newaxis] <= pr[np.newaxis, :]).astype(float)
        f_z = np.sum(wz, axis=0) / np.sum(zw)
        f_y = np.mean(yin, axis=0)
        gap = f_z - f_y
        boot = np.empty((n_boot, pr.size))
        pz = np.full(nz, 1.0 / nz)
        py = np.full(ny, 1.0 / ny)
        for c, (lo, hi) in enumerate(chunk_bounds(n_boot, _BOOT_CHUNK)):
            rng = np.random.Generator(np.random.Philox(
                key=_philox_key(boot_seed + d, c)))
            cz = rng.multinomial(nz, pz, size=hi - lo).astype(float)
            cy = rng.multinomial(ny, py, size=hi - lo).astype(float)
            num = cz @ wz
            den = cz @ zw
            boot[lo:hi] = num / den[:, np.newaxis] - (cy @ yin) / ny
        gap_lo = np.quantile(boot, 0.025, axis=0)
        gap_hi = np.quantile(boot, 0.975, axis=0)
        coords.append(CoordinateGaps(coordinate=d, probes=pr, f_z=f_z, f_y=f_y,
                                     gap=gap, gap_lower=gap_lo, gap_upper=gap_hi))
        if np.max(gap_hi) > tol_eff:
            dominates_all = False
        if np.max(gap_lo) > tol_eff:
            violated_any = True
        if max(np.max(np.abs(gap_lo)), np.max(np.abs(gap_hi))) > tol_eff:
            equal_all = False
    if violated_any:
        verdict = "violated"
    elif dominates_all:
        verdict = "dominates"
    else:
        verdict = "inconclusive"
    note = ""
    if surviving < 1.0:
        note = f"comparison restricted to {surviving:.3f} of paths surviving at the knot"
    return DominanceReport(
        verdict=verdict, equality=equal_all and verdict == "dominates",
        coordinates=tuple(coords), knot=knot, tol=tol, tol_effective=tol_eff,
        ess=ess, n_boot=n_boot, surviving_fraction=surviving, note=note)


@dataclass(frozen=True)
class ViolationStats:
    """Pathwise ordering violations of a >= b - slack, pre-stopping knots only."""

    counts: np.ndarray          # per coordinate
    max_magnitude: np.ndarray   # per coordinate; 0.0 where no violation
    n_comparisons: int
    slack: float
    min_gap: np.ndarray = field(repr=False)  # per knot, per coordinate, over valid paths

    @property
    def total(self) -> int:
        return int(np.sum(self.counts))


def pathwise_compare(a: PathBatch, b: PathBatch,
                     up_to: ExplosionInfo | None = None,
                     slack: float = 1e-12) -> ViolationStats:
    """Count knots where the coupled ensemble `a` drops below `b` - slack.

    Both batches must come from the same increments (coupling is the caller's
    contract); knots at or past any stopping time (either batch's, or the
    explosion info's) are excluded.
    """
    if a.values.shape != b.values.shape:
        raise InputError("path batches have mismatched shapes")
    n, K, dim = a.values.shape
    stop = np.full(n, K, dtype=np.int64)
    for status in (a.status, b.status, None if up_to is None else up_to.status):
        if status is None:
            continue
        s = np.where(status == ALIVE, K, status)
        stop = np.minimum(stop, s)
    knot_idx = np.arange(K)[np.newaxis, :]
    valid = knot_idx < stop[:, np.newaxis]          # (n, K)
    diff = a.values - b.values                       # (n, K, dim)
    viol = (diff < -slack) & valid[:, :, np.newaxis]
    counts = np.sum(viol, axis=(0, 1))
    mags = np.where(viol, -diff - slack, 0.0)
    max_mag = np.max(mags, axis=(0, 1))
    masked = np.where(valid[:, :, np.newaxis], diff, np.inf)
    min_gap = np.min(masked, axis=0)
    return ViolationStats(counts=counts, max_magnitude=max_mag,
                          n_comparisons=int(np.sum(valid)) * dim, slack=slack,
                          min_gap=min_gap)


@dataclass(frozen=True)
class ScalingFit:
    """OLS fit of log E||X_t - X_s||^3 against log|t - s|."""

    slope: float
    intercept: float
    stderr: float
    lags: np.ndarray
    moments: np.ndarray
    n_paths: int

    @property
    def ci(self) -> tuple[float, float]:
        return (self.slope - _Z95 * self.stderr, self.slope + _Z95 * self.stderr)

    @property
    def ci_width(self) -> float:
        lo, hi = self.ci
        return hi - lo


def default_knot_pairs(grid: TimeGrid, n_lags: int = 6, base_knot: int | None = None):
    """Knot pairs whose lags span one decade at the short end of the grid.

    The cubed-increment bound is a small-lag statement: at long lags the
    drift contribution bends the log-log curve upward, so the decade is
    anchored near the grid's resolution rather than its horizon.
    """
    lo = max(2, round(grid.n_steps / 64))
    hi = 10 * lo
    if base_knot is None:
        base_knot = grid.n_steps // 4
    if base_knot + hi > grid.n_steps:
        raise ConfigurationError("grid too coarse for a decade of lags")
    counts = np.unique(np.round(np.geomspace(lo, hi, n_lags)).astype(int))
    if counts.size < n_lags:  # rounding collisions on coarse grids
        counts = np.unique(np.round(np.linspace(lo, hi, n_lags)).astype(int))
    return [(base_knot, base_knot + int(c)) for c in counts]


def kolmogorov_scaling(drift: DriftFn, x0, grid: TimeGrid, knot_pairs,
                       n_paths: int, seed: int,
                       chunk_size: int = 16384) -> ScalingFit:
    """Fit the cubed-increment scaling exponent of the strong solution.

    Requires a globally Lipschitz drift (strong regime, no explosions) and at
    least 4 distinct lags.
    """
    if not drift.is_globally_lipschitz:
        raise UnsupportedRegimeError(
            "scaling fit is defined on the globally Lipschitz sub-catalog")
    pairs = [(int(i), int(j)) for i, j in knot_pairs]
    lags = []
    for i, j in pairs:
        if not (0 <= i < grid.n_knots and 0 <= j < grid.n_knots) or i == j:
            raise ConfigurationError(f"knot pair ({i}, {j}) invalid for this grid")
        lags.append(abs(j - i) * grid.dt)
    if np.unique(lags).size < 4:
        raise ConfigurationError("need at least 4 distinct lags")
    dim = drift.dim
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    sums = [[] for _ in pairs]
    total = 0
    sd = math.sqrt(grid.dt)
    from .core import IncrementBatch
    for c, (lo, hi) in enumerate(chunk_bounds(n_paths, chunk_size)):
        rng = np.random.Generator(np.random.Philox(key=_philox_key(seed, c)))
        draws = rng.normal(0.0, sd, size=(hi - lo, grid.n_steps, dim))
        inc = IncrementBatch(grid=grid, n_paths=hi - lo, dim=dim, seed=seed,
                             chunk_size=chunk_size, increments=draws)
        sol = euler_maruyama(drift, x0, inc)
        vals = sol.paths.values
        for p, (i, j) in enumerate(pairs):
            d = vals[:, j, :] - vals[:, i, :]
            sums[p].append(float(np.sum(np.linalg.norm(d, axis=1) ** 3)))
        total += hi - lo
    moments = np.array([math.fsum(s) / total for s in sums])
    lx = np.log(np.asarray(lags))
    ly = np.log(moments)
    n = lx.size
    mx, my = lx.mean(), ly.mean()
    sxx = np.sum((lx - mx) ** 2)
    slope = float(np.sum((lx - mx) * (ly - my)) / sxx)
    intercept = float(my - slope * mx)
    resid = ly - (intercept + slope * lx)
    dof = max(n - 2, 1)
    stderr = float(np.sqrt(np.sum(resid ** 2) / dof / sxx))
    return ScalingFit(slope=slope, intercept=intercept, stderr=stderr,
                      lags=np.asarray(lags), moments=moments, n_paths=total)
