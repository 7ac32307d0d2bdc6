"""Componentwise convex envelopes of drifts on a box, two ways, plus the
quasi-monotonicity probe that gates componentwise comparison.

Two independent construction routes exist on purpose: the lower convex hull
(monotone chain in 1D, lifted-hull facets in 2D) and, in 1D, the double
discrete Legendre transform.  Agreement between them is part of the test
battery, so biconjugate_1d never calls the hull code.

Envelopes live on a declared bounded box.  Outside, evaluation continues
affinely along the boundary subgradients; this is a documented surrogate
for a global envelope that may not exist (or may be minus infinity) for
catalog drifts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import DriftFn, DriftSpec, build_drift
from .errors import (
    ConfigurationError,
    InputError,
    UnsupportedDimensionError,
)

COLLINEAR_TOL = 1e-12

_EVAL_CHUNK = 8192


@dataclass(frozen=True)
class PiecewiseLinearConvex:
    """Convex piecewise-linear minorant with affine extension beyond its box.

    1D: sorted breakpoints and values with nondecreasing segment slopes.
    2D: the function is the max of supporting planes (rows of `planes`,
    each z = a x + b y + c), which is convex by construction and already
    extends affinely outside the box.
    """

    dim: int
    box: np.ndarray
    breakpoints: np.ndarray | None = field(default=None, repr=False)
    knot_values: np.ndarray | None = field(default=None, repr=False)
    planes: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.dim == 1:
            bp, kv = self.breakpoints, self.knot_values
            if bp is None or kv is None or bp.size != kv.size or bp.size < 2:
                raise InputError("1D envelope needs >= 2 breakpoints with values")
            if np.any(np.diff(bp) <= 0):
                raise InputError("breakpoints must be strictly increasing")
            slopes = np.diff(kv) / np.diff(bp)
            scale = max(1.0, float(np.max(np.abs(slopes))))
            if np.any(np.diff(slopes) < -1e-9 * scale):
                raise InputError("slopes decrease: values are not convex")
        elif self.dim == 2:
            if self.planes is None or self.planes.ndim != 2 or self.planes.shape[1] != 3:
                raise InputError("2D envelope needs (m, 3) plane coefficients")
        else:
            raise UnsupportedDimensionError("envelopes exist for dimensions 1 and 2 only")

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.knot_values) / np.diff(self.breakpoints)

    def evaluate(self, points) -> np.ndarray:
        """Envelope values; points is (k,) for 1D and (k, 2) for 2D."""
        if self.dim == 1:
            x = np.asarray(points, dtype=float).reshape(-1)
            bp, kv, sl = self.breakpoints, self.knot_values, self.slopes
            out = np.interp(x, bp, kv)
            left = x < bp[0]
            right = x > bp[-1]
            out[left] = kv[0] + sl[0] * (x[left] - bp[0])
            out[right] = kv[-1] + sl[-1] * (x[right] - bp[-1])
            return out
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise InputError("2D envelope expects points of shape (k, 2)")
        out = np.empty(pts.shape[0])
        a, b, c = self.planes[:, 0], self.planes[:, 1], self.planes[:, 2]
        for lo in range(0, pts.shape[0], _EVAL_CHUNK):
            hi = min(lo + _EVAL_CHUNK, pts.shape[0])
            vals = np.outer(pts[lo:hi, 0], a) + np.outer(pts[lo:hi, 1], b) + c
            out[lo:hi] = np.max(vals, axis=1)
        return out


def _check_1d_samples(xs, vs):
    xs = np.asarray(xs, dtype=float).reshape(-1)
    vs = np.asarray(vs, dtype=float).reshape(-1)
    if xs.size != vs.size or xs.size < 2:
        raise InputError("need >= 2 (x, value) samples")
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(vs))):
        raise InputError("samples must be finite")
    order = np.argsort(xs, kind="stable")
    xs, vs = xs[order], vs[order]
    dup = np.flatnonzero(np.diff(xs) == 0)
    if dup.size:
        if np.any(vs[dup] != vs[dup + 1]):
            raise InputError("duplicate x with conflicting values")
        keep = np.ones(xs.size, dtype=bool)
        keep[dup + 1] = False
        xs, vs = xs[keep], vs[keep]
    if xs.size < 2:
        raise InputError("need >= 2 distinct sample locations")
    return xs, vs


def lower_convex_envelope_1d(xs, vs) -> PiecewiseLinearConvex:
    """Greatest convex minorant of the sample graph, by monotone-chain scan.

    Collinear interior points are merged (tolerance COLLINEAR_TOL) so the
    breakpoint list is canonical.
    """
    xs, vs = _check_1d_samples(xs, vs)
    hx, hv = [xs[0]], [vs[0]]
    for x3, v3 in zip(xs[1:], vs[1:]):
        while len(hx) >= 2:
            x1, v1 = hx[-2], hv[-2]
            x2, v2 = hx[-1], hv[-1]
            cross = (x2 - x1) * (v3 - v1) - (x3 - x1) * (v2 - v1)
            tol = COLLINEAR_TOL * max(1.0, abs(v1), abs(v2), abs(v3)) * (x3 - x1)
            if cross <= tol:  # concave corner or collinear: drop the middle
                hx.pop()
                hv.pop()
            else:
                break
        hx.append(x3)
        hv.append(v3)
    box = np.array([[xs[0], xs[-1]]])
    return PiecewiseLinearConvex(dim=1, box=box, breakpoints=np.array(hx),
                                 knot_values=np.array(hv))


def convex_values_1d(xs, values, box=None) -> PiecewiseLinearConvex:
    """Wrap already-convex sampled values without running a hull scan.

    Exists so the biconjugate route stays independent of the hull route; the
    constructor's slope check still guards convexity.
    """
    xs = np.asarray(xs, dtype=float)
    values = np.asarray(values, dtype=float)
    if box is None:
        box = np.array([[xs[0], xs[-1]]])
    return PiecewiseLinearConvex(dim=1, box=np.asarray(box, dtype=float),
                                 breakpoints=xs, knot_values=values)


def biconjugate_1d(xs, vs, slope_chunk: int = 4096) -> PiecewiseLinearConvex:
    """Convex envelope at the sample points via two discrete Legendre transforms.

    The conjugate is evaluated on the set of all pairwise sample slopes,
    which contains every slope the transform's max can select, so the double
    transform is exact for the discrete sample set (up to rounding).
    """
    xs, vs = _check_1d_samples(xs, vs)
    n = xs.size
    ii, jj = np.triu_indices(n, k=1)
    slopes = np.unique((vs[jj] - vs[ii]) / (xs[jj] - xs[ii]))
    env = np.full(n, -np.inf)
    for lo in range(0, slopes.size, slope_chunk):
        s = slopes[lo:lo + slope_chunk, np.newaxis]
        fstar = np.max(s * xs[np.newaxis, :] - vs[np.newaxis, :], axis=1)
        env = np.maximum(env, np.max(s * xs[np.newaxis, :] - fstar[:, np.newaxis],
                                     axis=0))
    return convex_values_1d(xs, env)


def _plane_fit(points, values):
    A = np.column_stack([points, np.ones(points.shape[0])])
    coef, *_ = np.linalg.lstsq(A, values, rcond=None)
    resid = values - A @ coef
    return coef, float(np.max(np.abs(resid)))


def envelope_nd(points, values) -> PiecewiseLinearConvex:
    """Lower convex hull of lifted samples (x, y, value), dimension 2 only.

    Affine sample sets short-circuit to their own plane (the hull of coplanar
    points is degenerate); anything else goes through the lifted hull, keeping
    only downward-facing facets.
    """
    pts = np.asarray(points, dtype=float)
    vals = np.asarray(values, dtype=float).reshape(-1)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise UnsupportedDimensionError(
            "grid envelopes beyond 1D are implemented for dimension 2 only")
    if pts.shape[0] != vals.size or pts.shape[0] < 3:
        raise InputError("need >= 3 samples with matching values")
    if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(vals))):
        raise InputError("samples must be finite")
    centered = pts - pts.mean(axis=0)
    if np.linalg.matrix_rank(centered, tol=1e-10) < 2:
        raise InputError("sample locations are collinear; no 2D envelope exists")
    box = np.stack([pts.min(axis=0), pts.max(axis=0)], axis=1)
    scale = max(1.0, float(np.max(np.abs(vals))))
    coef, resid = _plane_fit(pts, vals)
    if resid <= 1e-12 * scale:
        planes = coef[np.newaxis, :]
        return PiecewiseLinearConvex(dim=2, box=box, planes=planes)
    from scipy.spatial import ConvexHull
    lifted = np.column_stack([pts, vals])
    hull = ConvexHull(lifted)
    eqs = hull.equations  # nx, ny, nz, offset with outward normals
    lower = eqs[eqs[:, 2] < -1e-12]
    if lower.shape[0] == 0:
        raise InputError("no downward-facing facets; samples degenerate")
    # nz*z + nx*x + ny*y + off = 0  ->  z = -(nx*x + ny*y + off)/nz
    planes = -lower[:, [0, 1, 3]] / lower[:, 2][:, np.newaxis]
    return PiecewiseLinearConvex(dim=2, box=box, planes=planes)


def grid_points_2d(box, resolution):
    box = np.asarray(box, dtype=float)
    rx = resolution[0] if np.ndim(resolution) else int(resolution)
    ry = resolution[1] if np.ndim(resolution) else int(resolution)
    ax = np.linspace(box[0, 0], box[0, 1], rx)
    ay = np.linspace(box[1, 0], box[1, 1], ry)
    gx, gy = np.meshgrid(ax, ay, indexing="ij")
    return np.column_stack([gx.reshape(-1), gy.reshape(-1)])


def envelope_drift(spec: DriftSpec, box, resolution, x0=None) -> DriftFn:
    """Componentwise convex envelope of a catalog drift as a new drift.

    Affine drifts (constant, linear) pass through untouched: they are their
    own componentwise envelopes.  Other kinds are sampled on the box grid and
    replaced by their hull envelopes; dimensions above 2 are out of scope for
    that route.
    """
    box = np.asarray(box, dtype=float)
    if box.ndim == 1:
        box = box.reshape(1, 2)
    if box.shape != (spec.dim, 2) or np.any(box[:, 0] >= box[:, 1]):
        raise ConfigurationError(f"box must be ({spec.dim}, 2) with lo < hi")
    if x0 is not None:
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        if np.any(x0 < box[:, 0]) or np.any(x0 > box[:, 1]):
            raise ConfigurationError(f"box does not contain the start point {x0}")
    if spec.kind in ("constant", "linear"):
        return build_drift(spec)
    base = build_drift(spec)
    n = spec.dim
    if n == 1:
        res = int(resolution) if np.ndim(resolution) == 0 else int(resolution[0])
        if res < 2:
            raise ConfigurationError("envelope resolution must be >= 2")
        xs = np.linspace(box[0, 0], box[0, 1], res)
        env = lower_convex_envelope_1d(xs, base(xs[:, np.newaxis])[:, 0])

        def fn(pts, env=env):
            return env.evaluate(pts.reshape(-1)).reshape(pts.shape)
    elif n == 2:
        res = (int(resolution), int(resolution)) if np.ndim(resolution) == 0 \
            else tuple(int(r) for r in resolution)
        if min(res) < 3:
            raise ConfigurationError("2D envelope resolution must be >= 3 per axis")
        pts = grid_points_2d(box, res)
        samples = base(pts)
        envs = [envelope_nd(pts, samples[:, i]) for i in range(2)]

        def fn(p, envs=envs):
            flat = p.reshape(-1, 2)
            cols = [e.evaluate(flat) for e in envs]
            return np.stack(cols, axis=-1).reshape(p.shape)
    else:
        raise UnsupportedDimensionError(
            "componentwise grid envelopes support dimensions 1 and 2; "
            "higher-dimensional drifts must already be affine")
    return DriftFn(fn, n, spec=None, sup_norm_bound=None, is_globally_lipschitz=True)


@dataclass(frozen=True)
class QuasiMonotoneReport:
    """Outcome of the componentwise-monotonicity probe.

    A witness is (x, y, i) with x_i = y_i, x <= y elsewhere, and
    f_i(x) > f_i(y) + tol; its existence refutes the comparison hypothesis.
    """

    verdict: str
    witness: tuple | None
    n_probes: int
    tol: float
    method: str

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"


def is_quasi_monotone(f: DriftFn, box, n_probes: int = 2000, tol: float = 1e-9,
                      seed: int = 0) -> QuasiMonotoneReport:
    """Check each f_i is nondecreasing in the off-i coordinates.

    Linear drifts are certified exactly by the off-diagonal sign of their
    matrix; everything else is falsification-only on randomized probe pairs,
    so "pass" there means "no counterexample found", not a proof.
    """
    if n_probes < 1:
        raise ConfigurationError("n_probes must be >= 1")
    n = f.dim
    box = np.asarray(box, dtype=float)
    if box.ndim == 1:
        box = box.reshape(1, 2)
    if box.shape != (n, 2):
        raise ConfigurationError(f"box must have shape ({n}, 2)")
    if n == 1:
        return QuasiMonotoneReport(verdict="pass", witness=None, n_probes=0,
                                   tol=tol, method="vacuous")
    spec = f.spec
    if spec is not None and spec.kind == "constant":
        return QuasiMonotoneReport(verdict="pass", witness=None, n_probes=0,
                                   tol=tol, method="exact-constant")
    if spec is not None and spec.kind == "linear":
        A = spec.matrix
        off = A - np.diag(np.diag(A))
        bad = np.argwhere(off < 0)
        if bad.size == 0:
            return QuasiMonotoneReport(verdict="pass", witness=None, n_probes=0,
                                       tol=tol, method="exact-linear")
        i, j = (int(v) for v in bad[0])
        x = box.mean(axis=1)
        y = x.copy()
        y[j] = box[j, 1]
        if y[j] == x[j]:
            x[j] = box[j, 0]
        return QuasiMonotoneReport(verdict="fail", witness=(x, y, i),
                                   n_probes=0, tol=tol, method="exact-linear")
    rng = np.random.Generator(np.random.Philox(key=seed))
    span = box[:, 1] - box[:, 0]
    for i in range(n):
        x = box[:, 0] + span * rng.random((n_probes, n))
        bump = span * rng.random((n_probes, n))
        bump[:, i] = 0.0
        y = np.minimum(x + bump, box[:, 1])
        fx = f(x)[:, i]
        fy = f(y)[:, i]
        viol = np.flatnonzero(fx > fy + tol)
        if viol.size:
            p = int(viol[0])
            return QuasiMonotoneReport(verdict="fail",
                                       witness=(x[p].copy(), y[p].copy(), i),
                                       n_probes=n_probes * n, tol=tol,
                                       method="randomized")
    return QuasiMonotoneReport(verdict="pass", witness=None,
                               n_probes=n_probes * n, tol=tol, method="randomized")
