"""Euler time stepping for dY = b(Y) dt + dB with explosion bookkeeping.

One scheme only: additive noise makes the Milstein correction vanish, so
Euler already has strong order one here.  Blow-up is tracked against a ladder
of norm thresholds; a path is frozen once it clears the top rung (or the
drift stops being finite), and the per-rung first-crossing knots let callers
see the exit times stabilize as the rung grows, which is how the local
solution's lifetime is defined.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import ALIVE, DriftFn, IncrementBatch, PathBatch, TimeGrid
from .errors import ConfigurationError, InputError

THRESHOLD_LADDER = (1e1, 1e2, 1e3, 1e4)

NEVER = -1


@dataclass(frozen=True)
class ExplosionInfo:
    """Per-path, per-rung first crossings of the norm ladder.

    first_crossing[p, l] is the first knot where ||Y|| exceeded thresholds[l]
    (NEVER if it stayed below); status mirrors PathBatch.status: ALIVE, or
    the knot where the path was frozen.
    """

    grid: TimeGrid
    thresholds: tuple
    first_crossing: np.ndarray = field(repr=False)
    status: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.first_crossing.shape != (self.status.shape[0], len(self.thresholds)):
            raise InputError("first_crossing must be (n_paths, n_levels)")
        self.first_crossing.flags.writeable = False
        self.status.flags.writeable = False

    @property
    def n_paths(self) -> int:
        return self.status.shape[0]

    @property
    def n_exploded(self) -> int:
        return int(np.count_nonzero(self.status != ALIVE))

    @property
    def surviving_fraction(self) -> float:
        return 1.0 - self.n_exploded / self.n_paths

    def exit_time_summary(self) -> list[dict]:
        """Per rung: crossing fraction and quantiles of the crossing time."""
        out = []
        dt = self.grid.dt
        for level_index, level in enumerate(self.thresholds):
            knots = self.first_crossing[:, level_index]
            crossed = knots != NEVER
            entry = {"threshold": float(level),
                     "crossed_fraction": float(np.mean(crossed))}
            if np.any(crossed):
                times = knots[crossed] * dt
                entry.update(median_time=float(np.median(times)),
                             q10_time=float(np.quantile(times, 0.10)),
                             q90_time=float(np.quantile(times, 0.90)))
            else:
                entry.update(median_time=None, q10_time=None, q90_time=None)
            out.append(entry)
        return out


@dataclass(frozen=True)
class EulerSolution:
    """Euler path ensemble together with its explosion record."""

    paths: PathBatch
    explosion: ExplosionInfo


def euler_maruyama(drift: DriftFn, x0, inc: IncrementBatch,
                   thresholds: tuple = THRESHOLD_LADDER) -> EulerSolution:
    """March Y_{k+1} = Y_k + b(Y_k) dt + dB_k, freezing exploded paths.

    A path freezes at the knot where its norm first exceeds the top rung, or
    where the drift evaluates non-finite (frozen at the last finite value);
    frozen paths carry that value to the horizon and never move again.
    """
    if tuple(thresholds) != tuple(sorted(thresholds)) or len(thresholds) == 0:
        raise ConfigurationError("thresholds must be a nonempty increasing ladder")
    grid = inc.grid
    dt = grid.dt
    n, M, d = inc.n_paths, grid.n_steps, inc.dim
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.size != d:
        raise InputError(f"x0 has dimension {x0.size}, increments have {d}")
    top = float(thresholds[-1])
    values = np.empty((n, grid.n_knots, d))
    values[:, 0, :] = x0
    status = np.full(n, ALIVE, dtype=np.int64)
    first = np.full((n, len(thresholds)), NEVER, dtype=np.int64)

    cur = values[:, 0, :].copy()
    norm0 = float(np.linalg.norm(x0))
    for level_index, level in enumerate(thresholds):
        if norm0 > level:
            first[:, level_index] = 0
    if norm0 > top:
        status[:] = 0
    moving = status == ALIVE

    for k in range(M):
        with np.errstate(invalid="ignore", over="ignore"):
            b = drift(cur)
            stepped = cur + b * dt + inc.increments[:, k, :]
        bad = ~np.isfinite(stepped).all(axis=1)
        nxt = np.where((moving & ~bad)[:, np.newaxis], stepped, cur)
        with np.errstate(invalid="ignore", over="ignore"):
            norms = np.sqrt(np.sum(nxt * nxt, axis=1))
        for level_index, level in enumerate(thresholds):
            crossing = moving & (first[:, level_index] == NEVER) & (norms > level)
            first[crossing, level_index] = k + 1
        dying = moving & (bad | (norms > top))
        first[dying & bad] = np.where(
            first[dying & bad] == NEVER, k + 1, first[dying & bad])
        status[dying] = k + 1
        moving &= ~dying
        values[:, k + 1, :] = nxt
        cur = nxt

    paths = PathBatch(grid=grid, origin=x0, values=values, status=status)
    info = ExplosionInfo(grid=grid, thresholds=tuple(float(t) for t in thresholds),
                         first_crossing=first, status=status.copy())
    return EulerSolution(paths=paths, explosion=info)


def coupled_solve(drifts: list, x0, inc: IncrementBatch,
                  thresholds: tuple = THRESHOLD_LADDER) -> list[EulerSolution]:
    """One Euler solution per drift, all driven by the same increments.

    Shared noise is the coupling needed for pathwise comparison; everything
    else is independent per drift.
    """
    if not drifts:
        raise InputError("coupled_solve needs at least one drift")
    return [euler_maruyama(b, x0, inc, thresholds) for b in drifts]


def ode_flow_error(drift: DriftFn, x0, grid: TimeGrid, reference) -> float:
    """Max terminal error of the zero-noise Euler flow against a reference map.

    reference(t, x0) gives the exact flow; used as a convergence probe for
    affine drifts where the flow is known in closed form.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    cur = x0.copy()
    worst = 0.0
    for k in range(grid.n_steps):
        cur = cur + drift(cur[np.newaxis, :])[0] * grid.dt
        exact = np.atleast_1d(reference(grid.knots[k + 1], x0))
        worst = max(worst, float(np.max(np.abs(cur - exact))))
    return worst
