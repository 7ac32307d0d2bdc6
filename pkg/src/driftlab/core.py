"""Domain types shared by every other module: uniform time grids, the drift
catalog, seedable Brownian increment batches, and path ensembles.

All sampling here is a pure function of (seed, shape parameters).  Increments
are generated chunk-by-chunk from counter-based Philox streams keyed on
(seed, chunk index), so regenerating any chunk, in any order and on any
worker, reproduces bit-identical draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError, InputError, ResourceLimitError

# Storage guard for a single increment batch (float64 bytes).
MAX_BATCH_BYTES = 4 * 2**30

DEFAULT_CHUNK_SIZE = 65_536

DRIFT_KINDS = ("constant", "linear", "tanh", "sine", "shifted_sine",
               "polynomial", "grid_table", "envelope")

ALIVE = -1


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition 0 = t_0 < t_1 < ... < t_M = T of the horizon."""

    horizon: float
    n_steps: int

    def __post_init__(self):
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ConfigurationError(f"horizon must be positive, got {self.horizon}")
        if self.n_steps < 1:
            raise ConfigurationError(f"n_steps must be >= 1, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def n_knots(self) -> int:
        return self.n_steps + 1

    @property
    def knots(self) -> np.ndarray:
        return self.dt * np.arange(self.n_knots)

    def index_of(self, t: float, tol: float = 1e-9) -> int:
        """Knot index for time t; raises if t is off the grid."""
        k = round(t / self.dt)
        if not (0 <= k <= self.n_steps) or abs(k * self.dt - t) > tol * max(1.0, self.horizon):
            raise ConfigurationError(f"time {t} is not a knot of grid(T={self.horizon}, M={self.n_steps})")
        return int(k)

    def refine(self, factor: int) -> "TimeGrid":
        return TimeGrid(self.horizon, self.n_steps * factor)


@dataclass(frozen=True)
class DriftSpec:
    """Declarative description of a drift b: R^n -> R^n from the catalog.

    kind selects the family; the parameter fields used depend on kind:

    - "constant":      vector (n,)
    - "linear":        matrix (n, n), offset (n,)           b(x) = Ax + c
    - "tanh":          amplitude, scale                     b_i(x) = a*tanh(s*x_i)
    - "sine":          amplitude, scale, phase              b_i(x) = a*sin(s*x_i + p)
    - "shifted_sine":  offset_scalar, amplitude, scale      b_i(x) = c + a*sin(s*x_i)
    - "polynomial":    coefficients (ascending powers)      b_i(x) = sum_k c_k x_i^k
    - "grid_table":    box (n, 2), table values; multilinear interpolation
                       inside the box, clamped to the boundary value outside

    Bounded kinds carry an explicit sup-norm bound on ||b||.
    """

    kind: str
    dim: int
    vector: np.ndarray | None = None
    matrix: np.ndarray | None = None
    offset: np.ndarray | None = None
    amplitude: float = 1.0
    scale: float = 1.0
    phase: float = 0.0
    offset_scalar: float = 0.0
    coefficients: np.ndarray | None = None
    box: np.ndarray | None = None
    table: np.ndarray | None = None
    component_tables: tuple = ()

    def __post_init__(self):
        if self.kind not in DRIFT_KINDS:
            raise ConfigurationError(f"unknown drift kind {self.kind!r}")
        if self.dim < 1:
            raise ConfigurationError("drift dim must be >= 1")
        if self.kind == "constant" and (self.vector is None or len(self.vector) != self.dim):
            raise ConfigurationError("constant drift needs a vector of length dim")
        if self.kind == "linear":
            if self.matrix is None or np.shape(self.matrix) != (self.dim, self.dim):
                raise ConfigurationError("linear drift needs an (n, n) matrix")
            if self.offset is None or len(self.offset) != self.dim:
                raise ConfigurationError("linear drift needs an offset vector of length dim")
        if self.kind == "polynomial" and self.coefficients is None:
            raise ConfigurationError("polynomial drift needs coefficients")
        if self.kind == "grid_table":
            _validate_grid_table(self.dim, self.box, self.table)

    # -- classmethod constructors -------------------------------------------

    @classmethod
    def constant(cls, vector) -> "DriftSpec":
        v = np.asarray(vector, dtype=float).reshape(-1)
        return cls(kind="constant", dim=v.size, vector=v)

    @classmethod
    def linear(cls, matrix, offset) -> "DriftSpec":
        A = np.asarray(matrix, dtype=float)
        c = np.asarray(offset, dtype=float).reshape(-1)
        return cls(kind="linear", dim=c.size, matrix=A, offset=c)

    @classmethod
    def tanh(cls, dim: int, amplitude: float = 1.0, scale: float = 1.0) -> "DriftSpec":
        return cls(kind="tanh", dim=dim, amplitude=amplitude, scale=scale)

    @classmethod
    def sine(cls, dim: int, amplitude: float = 1.0, scale: float = 1.0, phase: float = 0.0) -> "DriftSpec":
        return cls(kind="sine", dim=dim, amplitude=amplitude, scale=scale, phase=phase)

    @classmethod
    def shifted_sine(cls, dim: int, offset_scalar: float = 2.0, amplitude: float = 1.0,
                     scale: float = 1.0) -> "DriftSpec":
        return cls(kind="shifted_sine", dim=dim, offset_scalar=offset_scalar,
                   amplitude=amplitude, scale=scale)

    @classmethod
    def polynomial(cls, coefficients, dim: int = 1) -> "DriftSpec":
        return cls(kind="polynomial", dim=dim,
                   coefficients=np.asarray(coefficients, dtype=float).reshape(-1))

    @classmethod
    def grid_table(cls, box, table) -> "DriftSpec":
        box = np.asarray(box, dtype=float)
        if box.ndim == 1:
            box = box.reshape(1, 2)
        return cls(kind="grid_table", dim=box.shape[0], box=box,
                   table=np.asarray(table, dtype=float))

    # -- derived attributes --------------------------------------------------

    @property
    def sup_norm_bound(self) -> float | None:
        """Explicit bound on sup_x ||b(x)||, when the kind guarantees one."""
        per = self.component_bound
        return None if per is None else per * math.sqrt(self.dim)

    @property
    def component_bound(self) -> float | None:
        if self.kind == "constant":
            return float(np.max(np.abs(self.vector)))
        if self.kind == "tanh" or self.kind == "sine":
            return abs(self.amplitude)
        if self.kind == "shifted_sine":
            return abs(self.offset_scalar) + abs(self.amplitude)
        if self.kind == "grid_table":
            return float(np.max(np.abs(self.table)))
        return None

    @property
    def is_globally_lipschitz(self) -> bool:
        if self.kind in ("constant", "linear", "tanh", "sine", "shifted_sine",
                         "grid_table", "envelope"):
            return True
        if self.kind == "polynomial":
            return self.coefficients.size <= 2
        return False


def _validate_grid_table(dim, box, table):
    if box is None or table is None:
        raise ConfigurationError("grid_table drift needs box and table")
    box = np.asarray(box, dtype=float)
    if box.shape != (dim, 2):
        raise ConfigurationError(f"grid_table box must have shape ({dim}, 2)")
    if np.any(box[:, 0] >= box[:, 1]):
        raise ConfigurationError("grid_table box axes must be increasing (lo < hi)")
    table = np.asarray(table)
    if table.ndim != dim + 1 or table.shape[-1] != dim:
        raise ConfigurationError(
            f"grid_table values must have shape (m_1, ..., m_{dim}, {dim})")
    if min(table.shape[:-1]) < 2:
        raise ConfigurationError("grid_table needs >= 2 samples per axis")


class DriftFn:
    """Evaluable drift: maps points (..., dim) to vectors (..., dim)."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], dim: int,
                 spec: DriftSpec | None = None,
                 sup_norm_bound: float | None = None,
                 is_globally_lipschitz: bool = False):
        self._fn = fn
        self.dim = dim
        self.spec = spec
        self.sup_norm_bound = sup_norm_bound
        self.is_globally_lipschitz = is_globally_lipschitz

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.shape[-1] != self.dim:
            raise InputError(f"drift expects trailing dimension {self.dim}, got shape {pts.shape}")
        return self._fn(pts)


def build_drift(spec: DriftSpec) -> DriftFn:
    """Compile a DriftSpec into its evaluation closure.

    Evaluation is total on R^n: the grid_table kind clamps points to the box
    boundary before interpolation (a documented modeling approximation).
    """
    n = spec.dim
    if spec.kind == "constant":
        c = spec.vector.copy()

        def fn(pts, c=c):
            return np.broadcast_to(c, pts.shape).copy()
    elif spec.kind == "linear":
        A, c = spec.matrix.copy(), spec.offset.copy()

        def fn(pts, A=A, c=c):
            return pts @ A.T + c
    elif spec.kind == "tanh":
        a, s = spec.amplitude, spec.scale

        def fn(pts, a=a, s=s):
            return a * np.tanh(s * pts)
    elif spec.kind == "sine":
        a, s, p = spec.amplitude, spec.scale, spec.phase

        def fn(pts, a=a, s=s, p=p):
            return a * np.sin(s * pts + p)
    elif spec.kind == "shifted_sine":
        c0, a, s = spec.offset_scalar, spec.amplitude, spec.scale

        def fn(pts, c0=c0, a=a, s=s):
            return c0 + a * np.sin(s * pts)
    elif spec.kind == "polynomial":
        coeffs = spec.coefficients[::-1].copy()  # np.polyval wants descending

        def fn(pts, coeffs=coeffs):
            return np.polyval(coeffs, pts)
    elif spec.kind == "grid_table":
        fn = _grid_table_fn(spec)
    else:
        raise ConfigurationError(f"build_drift cannot compile kind {spec.kind!r}")
    return DriftFn(fn, n, spec=spec, sup_norm_bound=spec.sup_norm_bound,
                   is_globally_lipschitz=spec.is_globally_lipschitz)


def _grid_table_fn(spec: DriftSpec):
    box = spec.box
    table = spec.table
    n = spec.dim
    axes = [np.linspace(box[d, 0], box[d, 1], table.shape[d]) for d in range(n)]
    for ax in axes:
        if np.any(np.diff(ax) <= 0):
            raise ConfigurationError("grid_table axes must be strictly increasing")
    from scipy.interpolate import RegularGridInterpolator
    interp = RegularGridInterpolator(axes, table, method="linear",
                                     bounds_error=False, fill_value=None)

    def fn(pts):
        flat = pts.reshape(-1, n)
        clamped = np.clip(flat, box[:, 0], box[:, 1])
        return interp(clamped).reshape(pts.shape)

    return fn


@dataclass(frozen=True)
class TestFunctionSpec:
    """Deterministic f: [0, T] -> R^n from the square-integrable catalog.

    kinds: "constant" (value vector), "piecewise_constant" (breakpoints in
    [0, T] and one value vector per piece), "fourier" (cosine/sine coefficient
    rows over a base period).  Every catalog member is bounded on [0, T].
    """

    __test__ = False  # keep pytest collection away from the Test* name

    kind: str
    dim: int
    value: np.ndarray | None = None
    breakpoints: np.ndarray | None = None
    pieces: np.ndarray | None = None
    mean: np.ndarray | None = None
    cos_coeffs: np.ndarray | None = None
    sin_coeffs: np.ndarray | None = None
    period: float = 1.0

    @classmethod
    def constant(cls, value) -> "TestFunctionSpec":
        v = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(kind="constant", dim=v.size, value=v)

    @classmethod
    def piecewise_constant(cls, breakpoints, pieces) -> "TestFunctionSpec":
        bp = np.asarray(breakpoints, dtype=float)
        pc = np.atleast_2d(np.asarray(pieces, dtype=float))
        if pc.shape[0] != bp.size + 1:
            raise ConfigurationError("need one piece more than breakpoints")
        if bp.size and np.any(np.diff(bp) <= 0):
            raise ConfigurationError("breakpoints must be strictly increasing")
        return cls(kind="piecewise_constant", dim=pc.shape[1], breakpoints=bp, pieces=pc)

    @classmethod
    def fourier(cls, mean, cos_coeffs, sin_coeffs, period: float) -> "TestFunctionSpec":
        m = np.atleast_1d(np.asarray(mean, dtype=float))
        cc = np.atleast_2d(np.asarray(cos_coeffs, dtype=float))
        sc = np.atleast_2d(np.asarray(sin_coeffs, dtype=float))
        if cc.shape != sc.shape or cc.shape[1] != m.size:
            raise ConfigurationError("fourier coefficient shapes disagree")
        return cls(kind="fourier", dim=m.size, mean=m, cos_coeffs=cc,
                   sin_coeffs=sc, period=period)

    def evaluate(self, times: np.ndarray) -> np.ndarray:
        """Values f(t) with shape (len(times), dim)."""
        t = np.asarray(times, dtype=float).reshape(-1)
        if self.kind == "constant":
            return np.broadcast_to(self.value, (t.size, self.dim)).copy()
        if self.kind == "piecewise_constant":
            idx = np.searchsorted(self.breakpoints, t, side="right")
            return self.pieces[idx]
        # fourier
        out = np.broadcast_to(self.mean, (t.size, self.dim)).copy()
        for m in range(self.cos_coeffs.shape[0]):
            ang = 2.0 * np.pi * (m + 1) * t / self.period
            out += np.outer(np.cos(ang), self.cos_coeffs[m])
            out += np.outer(np.sin(ang), self.sin_coeffs[m])
        return out

    @property
    def sup_bound(self) -> float:
        if self.kind == "constant":
            return float(np.linalg.norm(self.value))
        if self.kind == "piecewise_constant":
            return float(np.max(np.linalg.norm(self.pieces, axis=1)))
        amp = np.abs(self.mean) + np.sum(np.abs(self.cos_coeffs), axis=0) \
            + np.sum(np.abs(self.sin_coeffs), axis=0)
        return float(np.linalg.norm(amp))


@dataclass(frozen=True)
class IncrementBatch:
    """Per-path, per-step, per-coordinate Gaussian draws with variance dt.

    Reproducibility contract: identical (seed, grid, n_paths, dim, chunk_size)
    give bit-identical draws.  Chunk c of paths is generated from its own
    Philox stream keyed by (seed, c), so chunks are order-independent.
    """

    grid: TimeGrid
    n_paths: int
    dim: int
    seed: int
    chunk_size: int
    increments: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.increments.shape != (self.n_paths, self.grid.n_steps, self.dim):
            raise InputError("increment array shape does not match metadata")
        self.increments.flags.writeable = False

    def with_increments(self, increments: np.ndarray) -> "IncrementBatch":
        """Same metadata, different draws (testing hook, e.g. scaled noise)."""
        return IncrementBatch(self.grid, self.n_paths, self.dim, self.seed,
                              self.chunk_size, np.array(increments))


def _philox_key(seed: int, chunk_index: int) -> int:
    return (int(seed) << 64) | int(chunk_index)


def chunk_bounds(n_paths: int, chunk_size: int):
    """[(start, stop)] partition of path indices into generation chunks."""
    return [(s, min(s + chunk_size, n_paths)) for s in range(0, n_paths, chunk_size)]


def sample_increments(grid: TimeGrid, n_paths: int, dim: int, seed: int,
                      chunk_size: int = DEFAULT_CHUNK_SIZE) -> IncrementBatch:
    """Draw the Brownian increments for n_paths over the grid.

    Raises ResourceLimitError if the requested storage exceeds the budget.
    """
    if n_paths < 1 or dim < 1:
        raise ConfigurationError("n_paths and dim must be positive")
    if not (0 <= seed < 2**63):
        raise ConfigurationError("seed must be a nonnegative 63-bit integer")
    nbytes = 8 * n_paths * grid.n_steps * dim
    if nbytes > MAX_BATCH_BYTES:
        raise ResourceLimitError(
            f"increment batch would need {nbytes / 2**30:.1f} GiB "
            f"(limit {MAX_BATCH_BYTES / 2**30:.1f} GiB)")
    out = np.empty((n_paths, grid.n_steps, dim))
    sd = math.sqrt(grid.dt)
    for c, (lo, hi) in enumerate(chunk_bounds(n_paths, chunk_size)):
        rng = np.random.Generator(np.random.Philox(key=_philox_key(seed, c)))
        out[lo:hi] = rng.normal(0.0, sd, size=(hi - lo, grid.n_steps, dim))
    return IncrementBatch(grid=grid, n_paths=n_paths, dim=dim, seed=seed,
                          chunk_size=chunk_size, increments=out)


@dataclass(frozen=True)
class PathBatch:
    """Path ensemble on a grid: values (n_paths, n_knots, dim).

    status[p] is ALIVE (-1) or the knot index where path p was stopped
    (explosion); values past a stopped knot are frozen and must not be
    interpreted.  driving, when present, holds the path's own step increments
    exactly as generated (cumulative sums reintroduce rounding, so consumers
    that need exact increments read driving instead of differencing values).
    Batches are immutable once built.
    """

    grid: TimeGrid
    origin: np.ndarray
    values: np.ndarray = field(repr=False)
    status: np.ndarray = field(repr=False)
    driving: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        n_paths = self.values.shape[0]
        if self.values.shape[1] != self.grid.n_knots:
            raise InputError("path values must cover every knot")
        if self.status.shape != (n_paths,):
            raise InputError("status must have one entry per path")
        if self.driving is not None:
            if self.driving.shape != (n_paths, self.grid.n_steps, self.values.shape[2]):
                raise InputError("driving increments must be (n_paths, n_steps, dim)")
            self.driving.flags.writeable = False
        self.values.flags.writeable = False
        self.status.flags.writeable = False

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[2]

    @property
    def alive(self) -> np.ndarray:
        return self.status == ALIVE

    def alive_at(self, knot: int) -> np.ndarray:
        """Paths not yet stopped strictly before `knot`."""
        return (self.status == ALIVE) | (self.status >= knot)

    def step_increments(self) -> np.ndarray:
        """Exact driving increments when stored, else value differences."""
        if self.driving is not None:
            return self.driving
        return np.diff(self.values, axis=1)


def accumulate_paths(inc: IncrementBatch, x0) -> PathBatch:
    """Brownian ensemble started at x0: values[k] = x0 + sum_{j<k} dB_j."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.size != inc.dim:
        raise InputError(f"x0 has dimension {x0.size}, increments have {inc.dim}")
    values = np.empty((inc.n_paths, inc.grid.n_knots, inc.dim))
    values[:, 0, :] = x0
    np.cumsum(inc.increments, axis=1, out=values[:, 1:, :])
    values[:, 1:, :] += x0
    status = np.full(inc.n_paths, ALIVE, dtype=np.int64)
    return PathBatch(grid=inc.grid, origin=x0, values=values, status=status,
                     driving=inc.increments)


def brownian_ensemble(grid: TimeGrid, n_paths: int, dim: int, seed: int, x0=0.0,
                      chunk_size: int = DEFAULT_CHUNK_SIZE) -> PathBatch:
    """Sample increments and accumulate in one call."""
    if np.ndim(x0) == 0:
        x0 = np.full(dim, float(x0))
    return accumulate_paths(sample_increments(grid, n_paths, dim, seed, chunk_size), x0)
