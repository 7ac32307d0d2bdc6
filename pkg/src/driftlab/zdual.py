"""Monte Carlo realizations of the duality operator.

The operator of interest acts on path functionals by reweight-and-shift:
pair(X, Y) = E[X(B) w_T Y(S)], with B the Brownian ensemble from the origin,
w_T the drift's terminal stochastic exponential, and S the drift-shifted
ensemble.  Specializing X to a path coordinate at a knot gives the weak
solution's coordinate process; keeping X general gives the operator itself,
whose algebra (normalization, linearity, positivity, left inverse of the
shift, Jensen) is what the statistical tests in this module exercise.

Everything streams over path chunks keyed by (seed, chunk index), so runs of
any size are reproducible and merge order never matters.  Chunk totals are
combined with math.fsum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    DEFAULT_CHUNK_SIZE,
    ALIVE,
    DriftFn,
    IncrementBatch,
    PathBatch,
    TestFunctionSpec,
    TimeGrid,
    chunk_bounds,
    _philox_key,
)
from .errors import (
    ConfigurationError,
    DegenerateWeightsError,
    InputError,
    UnsupportedRegimeError,
)
from .girsanov import log_weight_steps, shift_paths, stochastic_exponential
from .integrate import euler_maruyama

_Z95 = 1.959963984540054


# -- scalar maps and the functional catalog ----------------------------------


@dataclass(frozen=True)
class ScalarMap:
    """Named scalar function u -> phi(u) with range/shape metadata.

    The metadata is what the operator tests key on: bounded maps make legal
    cylinder factors, nonnegative maps make legal positivity probes, convex
    maps make legal Jensen tests.
    """

    name: str
    threshold: float = 0.0
    lo: float = -1.0
    hi: float = 1.0
    slope: float = 1.0
    intercept: float = 0.0

    _BOUNDED = ("sin", "cos", "tanh", "gauss", "indicator_ge", "clip")
    _NONNEG = ("gauss", "indicator_ge", "square", "abs", "relu")
    _CONVEX = ("identity", "affine", "square", "abs", "relu")

    def __post_init__(self):
        known = set(self._BOUNDED) | set(self._NONNEG) | set(self._CONVEX)
        if self.name not in known:
            raise ConfigurationError(f"unknown scalar map {self.name!r}")

    def __call__(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.name == "identity":
            return u
        if self.name == "affine":
            return self.slope * u + self.intercept
        if self.name == "sin":
            return np.sin(u)
        if self.name == "cos":
            return np.cos(u)
        if self.name == "tanh":
            return np.tanh(u)
        if self.name == "gauss":
            return np.exp(-u * u)
        if self.name == "indicator_ge":
            return (u >= self.threshold).astype(float)
        if self.name == "clip":
            return np.clip(u, self.lo, self.hi)
        if self.name == "square":
            return u * u
        if self.name == "abs":
            return np.abs(u)
        return np.maximum(u, 0.0)  # relu

    @property
    def bounded(self) -> bool:
        return self.name in self._BOUNDED

    @property
    def nonnegative(self) -> bool:
        if self.name == "clip":
            return self.lo >= 0.0
        return self.name in self._NONNEG

    @property
    def convex(self) -> bool:
        return self.name in self._CONVEX


@dataclass(frozen=True)
class CylinderTerm:
    """One factor phi(<vector, path(t)> + shift) of a cylinder functional."""

    map: ScalarMap
    time: float
    vector: tuple
    shift: float = 0.0


@dataclass(frozen=True)
class FunctionalSpec:
    """Declarative path functional from the closed-form catalog.

    kinds: "one"; "exp_f" (terminal stochastic exponential of a deterministic
    test function); "cylinder" (product of scalar maps of linear readouts at
    knot times); "combo" (linear combination of children); "product".
    Cylinder times must be grid knots at evaluation.
    """

    kind: str
    f: TestFunctionSpec | None = None
    terms: tuple = ()
    children: tuple = ()
    coefficients: tuple = ()

    # -- constructors --------------------------------------------------------

    @classmethod
    def one(cls) -> "FunctionalSpec":
        return cls(kind="one")

    @classmethod
    def exponential(cls, f: TestFunctionSpec) -> "FunctionalSpec":
        return cls(kind="exp_f", f=f)

    @classmethod
    def cylinder(cls, *terms: CylinderTerm) -> "FunctionalSpec":
        if not terms:
            raise ConfigurationError("cylinder functional needs at least one term")
        return cls(kind="cylinder", terms=tuple(terms))

    @classmethod
    def coordinate(cls, time: float, index: int, dim: int) -> "FunctionalSpec":
        """The path coordinate at a time: identity readout of one component."""
        e = tuple(1.0 if j == index else 0.0 for j in range(dim))
        return cls.cylinder(CylinderTerm(map=ScalarMap("identity"), time=time, vector=e))

    @classmethod
    def combination(cls, coefficients, children) -> "FunctionalSpec":
        if len(coefficients) != len(children) or not children:
            raise ConfigurationError("combination needs matching coefficients and children")
        return cls(kind="combo", children=tuple(children),
                   coefficients=tuple(float(c) for c in coefficients))

    @classmethod
    def product(cls, *children: "FunctionalSpec") -> "FunctionalSpec":
        if not children:
            raise ConfigurationError("product needs at least one child")
        return cls(kind="product", children=tuple(children))

    # -- metadata ------------------------------------------------------------

    @property
    def bounded(self) -> bool:
        if self.kind == "one":
            return True
        if self.kind == "exp_f":
            return False
        if self.kind == "cylinder":
            return all(t.map.bounded for t in self.terms)
        return all(c.bounded for c in self.children)

    @property
    def nonnegative(self) -> bool:
        """Conservative: True only when the structure forces Y >= 0."""
        if self.kind in ("one", "exp_f"):
            return True
        if self.kind == "cylinder":
            return all(t.map.nonnegative for t in self.terms)
        if self.kind == "combo":
            return (all(c.nonnegative for c in self.children)
                    and all(c >= 0 for c in self.coefficients))
        return all(c.nonnegative for c in self.children)


def evaluate_functional(spec: FunctionalSpec, paths: PathBatch) -> np.ndarray:
    """Per-path value of the functional on an ensemble: shape (n_paths,)."""
    if spec.kind == "one":
        return np.ones(paths.n_paths)
    if spec.kind == "exp_f":
        f = spec.f
        if f.dim != paths.dim:
            raise InputError(f"test function dim {f.dim} does not match paths dim {paths.dim}")
        gamma = f.evaluate(paths.grid.knots[:-1])
        steps = log_weight_steps(paths.step_increments(), gamma, paths.grid.dt)
        with np.errstate(over="ignore"):
            return np.exp(np.sum(steps, axis=1))
    if spec.kind == "cylinder":
        out = np.ones(paths.n_paths)
        for term in spec.terms:
            vec = np.asarray(term.vector, dtype=float)
            if vec.size != paths.dim:
                raise InputError(f"cylinder readout dim {vec.size} does not match paths")
            k = paths.grid.index_of(term.time)
            readout = paths.values[:, k, :] @ vec + term.shift
            out = out * term.map(readout)
        return out
    if spec.kind == "combo":
        out = np.zeros(paths.n_paths)
        for c, child in zip(spec.coefficients, spec.children):
            out += c * evaluate_functional(child, paths)
        return out
    out = np.ones(paths.n_paths)
    for child in spec.children:
        out = out * evaluate_functional(child, paths)
    return out


# -- estimates ---------------------------------------------------------------


@dataclass(frozen=True)
class EstimateWithCI:
    """Point estimate with standard error; scalar or per-coordinate arrays."""

    estimate: object
    std_error: object
    n_effective: float
    confidence: float = 0.95

    def __post_init__(self):
        if np.any(np.asarray(self.std_error) < 0):
            raise InputError("standard error must be nonnegative")

    def interval(self):
        est = np.asarray(self.estimate, dtype=float)
        se = np.asarray(self.std_error, dtype=float)
        return est - _Z95 * se, est + _Z95 * se


@dataclass(frozen=True)
class PairingEstimate:
    """Both readings of a pairing: self-normalized headline and raw mean.

    The raw mean is the defining identity verbatim; the self-normalized
    version divides by the mean weight (which targets 1), trading an O(1/n)
    bias for variance.  normalized is the headline.
    """

    normalized: EstimateWithCI
    unnormalized: EstimateWithCI
    mean_weight: float
    n_paths: int
    n_invalid: int


class _PairingAccumulator:
    """Streaming sums for ratio estimates a-bar / w-bar with delta-method SE."""

    def __init__(self, width: int):
        self.width = width
        self.sa, self.sa2, self.saw = [], [], []
        self.sw, self.sw2 = [], []
        self.n = 0
        self.n_invalid = 0

    def add(self, a: np.ndarray, w: np.ndarray, valid: np.ndarray):
        a = a if a.ndim == 2 else a[:, np.newaxis]
        keep = valid & np.isfinite(w) & np.isfinite(a).all(axis=1)
        self.n_invalid += int(a.shape[0] - np.count_nonzero(keep))
        a, w = a[keep], w[keep]
        self.n += a.shape[0]
        self.sa.append(np.sum(a, axis=0))
        self.sa2.append(np.sum(a * a, axis=0))
        self.saw.append(np.sum(a * w[:, np.newaxis], axis=0))
        self.sw.append(float(np.sum(w)))
        self.sw2.append(float(np.sum(w * w)))

    def _fsum_vec(self, chunks) -> np.ndarray:
        return np.array([math.fsum(float(c[i]) for c in chunks)
                         for i in range(self.width)])

    def result(self, squeeze: bool) -> PairingEstimate:
        if self.n < 2:
            raise DegenerateWeightsError("fewer than two usable paths")
        n = self.n
        sa, sa2, saw = (self._fsum_vec(x) for x in (self.sa, self.sa2, self.saw))
        sw, sw2 = math.fsum(self.sw), math.fsum(self.sw2)
        if sw2 <= 0:
            raise DegenerateWeightsError("weights collapsed to zero")
        ess = sw * sw / sw2
        mean_a, mean_w = sa / n, sw / n
        var_a = np.maximum(sa2 / n - mean_a**2, 0.0) * (n / (n - 1))
        se_raw = np.sqrt(var_a / n)
        ratio = sa / sw
        resid2 = np.maximum(sa2 - 2 * ratio * saw + ratio**2 * sw2, 0.0)
        se_norm = np.sqrt(resid2 / (n - 1) / n) / mean_w

        def pack(est, se):
            if squeeze:
                return EstimateWithCI(float(est[0]), float(se[0]), n_effective=ess)
            return EstimateWithCI(est, se, n_effective=ess)

        return PairingEstimate(
            normalized=pack(ratio, se_norm),
            unnormalized=pack(mean_a, se_raw),
            mean_weight=mean_w, n_paths=n, n_invalid=self.n_invalid)


class _DiffAccumulator:
    """Streaming mean and SE of per-path differences."""

    def __init__(self):
        self.sd, self.sd2 = [], []
        self.n = 0
        self.n_invalid = 0

    def add(self, d: np.ndarray, valid: np.ndarray):
        keep = valid & np.isfinite(d)
        self.n_invalid += int(d.shape[0] - np.count_nonzero(keep))
        d = d[keep]
        self.n += d.size
        self.sd.append(float(np.sum(d)))
        self.sd2.append(float(np.sum(d * d)))

    def result(self) -> EstimateWithCI:
        if self.n < 2:
            raise DegenerateWeightsError("fewer than two usable paths")
        n = self.n
        mean = math.fsum(self.sd) / n
        var = max(math.fsum(self.sd2) / n - mean * mean, 0.0) * (n / (n - 1))
        return EstimateWithCI(mean, math.sqrt(var / n), n_effective=n)


# -- chunked ensemble stream -------------------------------------------------


@dataclass
class _EnsembleChunk:
    paths: PathBatch
    shifted: PathBatch
    weights: np.ndarray
    valid: np.ndarray
    euler: PathBatch | None


def _stream(drift: DriftFn, x0: np.ndarray, grid: TimeGrid, n_paths: int,
            seed: int, chunk_size: int, with_euler: bool):
    dt = grid.dt
    sd = math.sqrt(dt)
    d = drift.dim
    for c, (lo, hi) in enumerate(chunk_bounds(n_paths, chunk_size)):
        m = hi - lo
        rng = np.random.Generator(np.random.Philox(key=_philox_key(seed, c)))
        draws = rng.normal(0.0, sd, size=(m, grid.n_steps, d))
        values = np.empty((m, grid.n_knots, d))
        values[:, 0, :] = x0
        np.cumsum(draws, axis=1, out=values[:, 1:, :])
        values[:, 1:, :] += x0
        status = np.full(m, ALIVE, dtype=np.int64)
        paths = PathBatch(grid=grid, origin=x0, values=values, status=status,
                          driving=draws)
        with np.errstate(invalid="ignore", over="ignore"):
            gamma = drift(values[:, :-1, :])
            steps = log_weight_steps(draws, gamma, dt)
            lterm = np.sum(steps, axis=1)
            valid = np.isfinite(lterm)
            weights = np.exp(lterm)
            svalues = np.empty_like(values)
            svalues[:, 0, :] = values[:, 0, :]
            svalues[:, 1:, :] = values[:, 1:, :] - np.cumsum(gamma * dt, axis=1)
        shifted = PathBatch(grid=grid, origin=x0, values=svalues,
                            status=status.copy(), driving=draws - gamma * dt)
        euler = None
        if with_euler:
            inc = IncrementBatch(grid=grid, n_paths=m, dim=d, seed=seed,
                                 chunk_size=chunk_size, increments=draws)
            euler = euler_maruyama(drift, x0, inc).paths
        yield _EnsembleChunk(paths=paths, shifted=shifted, weights=weights,
                             valid=valid, euler=euler)


def _as_origin(x, dim: int) -> np.ndarray:
    x = np.full(dim, float(x)) if np.ndim(x) == 0 else np.asarray(x, dtype=float)
    if x.size != dim:
        raise InputError(f"origin has dimension {x.size}, drift has {dim}")
    return x


# -- operator estimates ------------------------------------------------------


def pairing_estimate(drift: DriftFn, x, knot: int, Y: FunctionalSpec,
                     grid: TimeGrid, n_paths: int, seed: int,
                     chunk_size: int = DEFAULT_CHUNK_SIZE) -> PairingEstimate:
    """Pair the coordinate process at a knot against Y, per coordinate.

    Estimates E[(B_t + x)_i w_T Y(S)] for every coordinate i: the dual
    characterization of the weak solution's i-th coordinate at t.
    """
    if not (0 <= knot <= grid.n_steps):
        raise ConfigurationError(f"knot {knot} outside grid")
    x0 = _as_origin(x, drift.dim)
    acc = _PairingAccumulator(width=drift.dim)
    for ch in _stream(drift, x0, grid, n_paths, seed, chunk_size, with_euler=False):
        yv = evaluate_functional(Y, ch.shifted)
        a = ch.paths.values[:, knot, :] * (ch.weights * yv)[:, np.newaxis]
        acc.add(a, ch.weights, ch.valid)
    return acc.result(squeeze=False)


def functional_pairing(drift: DriftFn, x, X: FunctionalSpec, Y: FunctionalSpec,
                       grid: TimeGrid, n_paths: int, seed: int,
                       chunk_size: int = DEFAULT_CHUNK_SIZE) -> PairingEstimate:
    """General pairing E[X(B) w_T Y(S)] for catalog functionals X, Y."""
    x0 = _as_origin(x, drift.dim)
    acc = _PairingAccumulator(width=1)
    for ch in _stream(drift, x0, grid, n_paths, seed, chunk_size, with_euler=False):
        xv = evaluate_functional(X, ch.paths)
        yv = evaluate_functional(Y, ch.shifted)
        acc.add(xv * ch.weights * yv, ch.weights, ch.valid)
    return acc.result(squeeze=True)


def pairing_samples(drift: DriftFn, paths: PathBatch, X: FunctionalSpec,
                    Y: FunctionalSpec):
    """Per-path pairing terms X(B) w_T Y(S) on a prebuilt ensemble.

    Returns (terms, weights, valid); the exact-positivity and exact-linearity
    statements live at this level.
    """
    w = stochastic_exponential(paths, drift)
    shifted = shift_paths(paths, drift)
    xv = evaluate_functional(X, paths)
    weights = w.weights_at(paths.grid.n_steps)
    yv = evaluate_functional(Y, shifted)
    return xv * weights * yv, weights, w.valid


def euler_pairing(drift: DriftFn, x, knot: int, Y: FunctionalSpec,
                  grid: TimeGrid, n_paths: int, seed: int,
                  chunk_size: int = DEFAULT_CHUNK_SIZE) -> EstimateWithCI:
    """Strong-solution side of the duality: E[X_t,i Y(driving path)].

    X is the Euler solution driven by the chunk's increments and Y is read
    off the Brownian path those increments accumulate from the same origin.
    Independent seeds make this an oracle for pairing_estimate.
    """
    if not (0 <= knot <= grid.n_steps):
        raise ConfigurationError(f"knot {knot} outside grid")
    x0 = _as_origin(x, drift.dim)
    acc = _DiffAccumulatorVec(width=drift.dim)
    for ch in _stream(drift, x0, grid, n_paths, seed, chunk_size, with_euler=True):
        yv = evaluate_functional(Y, ch.paths)
        alive = ch.euler.status == ALIVE
        a = ch.euler.values[:, knot, :] * yv[:, np.newaxis]
        acc.add(a, alive)
    return acc.result()


class _DiffAccumulatorVec:
    """Streaming mean and SE for vector-valued per-path samples."""

    def __init__(self, width: int):
        self.width = width
        self.sd, self.sd2 = [], []
        self.n = 0

    def add(self, d: np.ndarray, valid: np.ndarray):
        keep = valid & np.isfinite(d).all(axis=1)
        d = d[keep]
        self.n += d.shape[0]
        self.sd.append(np.sum(d, axis=0))
        self.sd2.append(np.sum(d * d, axis=0))

    def result(self) -> EstimateWithCI:
        if self.n < 2:
            raise DegenerateWeightsError("fewer than two usable paths")
        n = self.n
        sd = np.array([math.fsum(float(c[i]) for c in self.sd)
                       for i in range(self.width)])
        sd2 = np.array([math.fsum(float(c[i]) for c in self.sd2)
                        for i in range(self.width)])
        mean = sd / n
        var = np.maximum(sd2 / n - mean**2, 0.0) * (n / (n - 1))
        return EstimateWithCI(mean, np.sqrt(var / n), n_effective=n)


# -- weighted law of the weak solution ---------------------------------------


@dataclass(frozen=True)
class WeightedSampleSet:
    """Weighted points whose empirical law estimates the weak solution at a knot."""

    values: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    knot: int = 0
    origin: np.ndarray | None = None
    warnings: tuple = ()

    def __post_init__(self):
        if self.values.shape[0] != self.weights.shape[0]:
            raise InputError("values and weights must align")
        if not np.all(np.isfinite(self.values)):
            raise InputError("sample values must be finite")
        if not (np.all(np.isfinite(self.weights)) and np.all(self.weights > 0)):
            raise InputError("weights must be positive and finite")
        self.values.flags.writeable = False
        self.weights.flags.writeable = False

    @property
    def n_paths(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def mean_weight(self) -> float:
        return float(np.mean(self.weights))

    @property
    def ess(self) -> float:
        s = float(np.sum(self.weights))
        return s * s / float(np.sum(self.weights**2))


def weak_law_samples(drift: DriftFn, x, knot: int, grid: TimeGrid, n_paths: int,
                     seed: int, chunk_size: int = DEFAULT_CHUNK_SIZE,
                     ess_floor: float = 100.0) -> WeightedSampleSet:
    """Weighted ensemble (B_t + x, running weight at t) for the law at knot t.

    Weights are the stochastic exponential at the same knot, not the horizon:
    conditioning away the future steps changes nothing in expectation and
    shrinks the weight spread.
    """
    if not (0 <= knot <= grid.n_steps):
        raise ConfigurationError(f"knot {knot} outside grid")
    x0 = _as_origin(x, drift.dim)
    vals, wts = [], []
    n_dropped = 0
    for ch in _stream(drift, x0, grid, n_paths, seed, chunk_size, with_euler=False):
        with np.errstate(over="ignore"):
            w = np.exp(np.sum(log_weight_steps(
                ch.paths.step_increments()[:, :knot, :],
                drift(ch.paths.values[:, :knot, :]), grid.dt), axis=1)) \
                if knot > 0 else np.ones(ch.paths.n_paths)
        v = ch.paths.values[:, knot, :]
        keep = np.isfinite(w) & (w > 0) & np.isfinite(v).all(axis=1)
        n_dropped += int(v.shape[0] - np.count_nonzero(keep))
        vals.append(v[keep])
        wts.append(w[keep])
    values = np.concatenate(vals, axis=0)
    weights = np.concatenate(wts, axis=0)
    if weights.size == 0:
        raise DegenerateWeightsError("no usable paths for the weighted law")
    warns = []
    if n_dropped:
        warns.append(f"{n_dropped} paths dropped on non-finite weights or values")
    ess = float(np.sum(weights)) ** 2 / float(np.sum(weights**2))
    if ess < ess_floor:
        warns.append(f"effective sample size {ess:.1f} below floor {ess_floor:.1f}")
    return WeightedSampleSet(values=values, weights=weights, knot=knot,
                             origin=x0, warnings=tuple(warns))


def z_moment(samples: WeightedSampleSet, order: int, central: bool = False,
             n_boot: int = 200, boot_seed: int = 0) -> EstimateWithCI:
    """Self-normalized weighted moment per coordinate with bootstrap SE."""
    if order < 1:
        raise InputError("moment order must be >= 1")
    if samples.ess < 2.0:
        raise DegenerateWeightsError(f"effective sample size {samples.ess:.2f} too low")
    v, w = samples.values, samples.weights
    n, d = v.shape
    total = float(np.sum(w))
    mean1 = (w @ v) / total
    if central:
        point = (w @ (v - mean1) ** order) / total
    else:
        point = (w @ v**order) / total
    # bootstrap over paths: multinomial counts against precomputed power columns
    powers = np.stack([w[:, np.newaxis] * v**j for j in range(order + 1)], axis=2)
    rng = np.random.Generator(np.random.Philox(key=_philox_key(boot_seed, 0x0B)))
    boot = np.empty((n_boot, d))
    coeffs = [math.comb(order, j) for j in range(order + 1)]
    done = 0
    while done < n_boot:
        r = min(64, n_boot - done)
        counts = rng.multinomial(n, np.full(n, 1.0 / n), size=r).astype(float)
        stats = np.einsum("rn,ndj->rdj", counts, powers)
        W = stats[:, :, 0]
        if central:
            m1 = stats[:, :, 1] / W
            acc = np.zeros((r, d))
            for j in range(order + 1):
                acc += coeffs[j] * (-m1) ** (order - j) * stats[:, :, j] / W
            boot[done:done + r] = acc
        else:
            boot[done:done + r] = stats[:, :, order] / W
        done += r
    se = np.std(boot, axis=0, ddof=1)
    return EstimateWithCI(point, se, n_effective=samples.ess)


# -- operator identities -----------------------------------------------------


def left_inverse_residual(drift: DriftFn, U: FunctionalSpec, Y: FunctionalSpec,
                          grid: TimeGrid, x, n_paths: int, seed: int,
                          chunk_size: int = DEFAULT_CHUNK_SIZE) -> EstimateWithCI:
    """Estimate E[(UY)(S) w_T] - E[(UY)(B)]; the shift's left inverse makes it 0.

    Both terms ride the same paths, so the per-path difference cancels shared
    noise; with zero drift it vanishes identically.
    """
    if not U.bounded:
        raise InputError("left-inverse residual requires a bounded U")
    x0 = _as_origin(x, drift.dim)
    UY = FunctionalSpec.product(U, Y)
    acc = _DiffAccumulator()
    for ch in _stream(drift, x0, grid, n_paths, seed, chunk_size, with_euler=False):
        shifted_term = evaluate_functional(UY, ch.shifted) * ch.weights
        plain_term = evaluate_functional(UY, ch.paths)
        acc.add(shifted_term - plain_term, ch.valid)
    return acc.result()


@dataclass(frozen=True)
class JensenReport:
    """Convexity-gap estimates E[(Z(phi(X)) - phi(Z(X))) Y] over probe Y's."""

    phi: str
    estimates: tuple
    all_nonnegative: bool


def jensen_gap(drift: DriftFn, phi: ScalarMap, X: FunctionalSpec,
               Ys: list, grid: TimeGrid, x, n_paths: int, seed: int,
               chunk_size: int = DEFAULT_CHUNK_SIZE) -> JensenReport:
    """Test phi(Z(X)) <= Z(phi(X)) against nonnegative probe functionals.

    Z(phi(X)) enters through the pairing; phi(Z(X)) through the strong
    solution (same increments drive both sides, cancelling shared noise).
    Only meaningful where the operator is realized by a strong solution, so
    non-Lipschitz drifts are rejected.
    """
    if not drift.is_globally_lipschitz:
        raise UnsupportedRegimeError(
            "pointwise operator values need the globally Lipschitz sub-catalog")
    if not phi.convex:
        raise InputError(f"scalar map {phi.name!r} is not in the convex catalog")
    for yspec in Ys:
        if not yspec.nonnegative:
            raise InputError("Jensen probes must be nonnegative functionals")
    x0 = _as_origin(x, drift.dim)
    accs = [_DiffAccumulator() for _ in Ys]
    for ch in _stream(drift, x0, grid, n_paths, seed, chunk_size, with_euler=True):
        phiX_B = phi(evaluate_functional(X, ch.paths))
        phiX_E = phi(evaluate_functional(X, ch.euler))
        w = ch.weights
        euler_ok = ch.euler.status == ALIVE
        for yspec, acc in zip(Ys, accs):
            yS = evaluate_functional(yspec, ch.shifted)
            yB = evaluate_functional(yspec, ch.paths)
            acc.add(phiX_B * w * yS - phiX_E * yB, ch.valid & euler_ok)
    ests = tuple(a.result() for a in accs)
    ok = all(float(np.asarray(e.estimate)) >= -5.0 * float(np.asarray(e.std_error))
             for e in ests)
    return JensenReport(phi=phi.name, estimates=ests, all_nonnegative=ok)
