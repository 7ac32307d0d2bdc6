"""Envelope construction (both routes) and quasi-monotonicity probes."""

import math

import numpy as np
import pytest

from driftlab import DriftFn, DriftSpec, build_drift
from driftlab.drift_analysis import (
    PiecewiseLinearConvex,
    biconjugate_1d,
    convex_values_1d,
    envelope_drift,
    envelope_nd,
    grid_points_2d,
    is_quasi_monotone,
    lower_convex_envelope_1d,
)
from driftlab.errors import (
    ConfigurationError,
    InputError,
    UnsupportedDimensionError,
)


def _random_wiggle(seed, xs):
    # smooth non-convex test function: low-order Fourier mix plus a tilt
    rng = np.random.Generator(np.random.Philox(key=seed))
    amp = rng.normal(size=4)
    freq = rng.uniform(0.5, 3.0, size=4)
    tilt = rng.normal()
    vals = tilt * xs
    for a, w in zip(amp, freq):
        vals = vals + a * np.sin(w * xs + rng.uniform(0, 2 * np.pi))
    return vals


def _brute_force_envelope(xs, vs):
    # min over all chords (including i == j) that straddle each sample point
    n = xs.size
    out = np.empty(n)
    for k in range(n):
        best = vs[k]
        for i in range(0, k + 1):
            for j in range(k, n):
                if i == j:
                    continue
                t = (xs[k] - xs[i]) / (xs[j] - xs[i])
                best = min(best, (1 - t) * vs[i] + t * vs[j])
        out[k] = best
    return out


# ---------------------------------------------------------------- 1D hull


def test_envelope_abs_parabola_matches_closed_form():
    xs = np.linspace(-2.0, 2.0, 401)  # contains +-1 exactly
    vs = np.abs(xs * xs - 1.0)
    env = lower_convex_envelope_1d(xs, vs)
    want = np.maximum(xs * xs - 1.0, 0.0)
    assert np.max(np.abs(env.evaluate(xs) - want)) <= 1e-12
    assert abs(env.evaluate([0.0])[0]) <= 1e-12
    assert abs(env.evaluate([1.5])[0] - 1.25) <= 1e-12


def test_envelope_double_well_chord():
    xs = np.linspace(-2.0, 2.0, 401)
    vs = xs ** 4 - 2.0 * xs ** 2
    env = lower_convex_envelope_1d(xs, vs)
    inner = np.abs(xs) <= 1.0
    want = np.where(inner, -1.0, vs)
    assert np.max(np.abs(env.evaluate(xs) - want)) <= 1e-12
    assert abs(env.evaluate([2.0])[0] - 8.0) <= 1e-12
    # the flat chord keeps only its endpoints as breakpoints
    interior = (env.breakpoints > -1.0 + 1e-9) & (env.breakpoints < 1.0 - 1e-9)
    assert not np.any(interior)


def test_envelope_shifted_sine_floor():
    xs = np.linspace(-4.0 * np.pi, 4.0 * np.pi, 2049)
    vs = 2.0 + np.sin(xs)
    env = lower_convex_envelope_1d(xs, vs)
    # between the outermost minima the envelope hugs the minimum level 1
    mid = np.linspace(-2.0 * np.pi, 3.0 * np.pi, 64)
    got = env.evaluate(mid)
    assert np.all(got >= 1.0 - 1e-12)
    assert np.max(got) <= 1.0 + 1e-4
    assert np.all(env.evaluate(xs) <= vs + 1e-12)


def test_hull_vs_biconjugate_on_random_functions():
    for seed in range(20):
        xs = np.linspace(-2.0, 2.0, 257)
        vs = _random_wiggle(seed, xs)
        hull = lower_convex_envelope_1d(xs, vs)
        bi = biconjugate_1d(xs, vs)
        gap = np.max(np.abs(hull.evaluate(xs) - bi.evaluate(xs)))
        assert gap <= 1e-8, f"seed {seed}: routes disagree by {gap}"


def test_hull_vs_brute_force_chords():
    for seed in (101, 202, 303):
        rng = np.random.Generator(np.random.Philox(key=seed))
        xs = np.sort(rng.uniform(-3.0, 3.0, size=25))
        xs += 1e-6 * np.arange(25)  # guard against duplicates
        vs = _random_wiggle(seed, xs)
        env = lower_convex_envelope_1d(xs, vs)
        want = _brute_force_envelope(xs, vs)
        assert np.max(np.abs(env.evaluate(xs) - want)) <= 1e-10


def test_envelope_midpoint_convexity_including_extension():
    xs = np.linspace(-2.0, 2.0, 301)
    env = lower_convex_envelope_1d(xs, _random_wiggle(7, xs))
    rng = np.random.Generator(np.random.Philox(key=8))
    a = rng.uniform(-3.5, 3.5, size=1000)  # beyond the box: affine extension
    b = rng.uniform(-3.5, 3.5, size=1000)
    lhs = env.evaluate(0.5 * (a + b))
    rhs = 0.5 * (env.evaluate(a) + env.evaluate(b))
    assert np.all(lhs <= rhs + 1e-10)


def test_envelope_is_tight_minorant():
    xs = np.linspace(-2.0, 2.0, 301)
    vs = _random_wiggle(11, xs)
    env = lower_convex_envelope_1d(xs, vs)
    got = env.evaluate(xs)
    assert np.all(got <= vs + 1e-12)
    assert np.min(vs - got) <= 1e-12  # touches the samples somewhere


def test_envelope_dominates_every_affine_minorant():
    xs = np.linspace(-2.0, 2.0, 301)
    vs = _random_wiggle(13, xs)
    env = lower_convex_envelope_1d(xs, vs)
    rng = np.random.Generator(np.random.Philox(key=14))
    probes = rng.uniform(-2.0, 2.0, size=500)
    env_probes = env.evaluate(probes)
    for _ in range(200):
        s = rng.uniform(-6.0, 6.0)
        c = np.min(vs - s * xs)  # largest intercept keeping s x + c <= samples
        assert np.all(s * probes + c <= env_probes + 1e-9)


def test_envelope_idempotent():
    xs = np.linspace(-2.0, 2.0, 301)
    env = lower_convex_envelope_1d(xs, _random_wiggle(17, xs))
    again = lower_convex_envelope_1d(xs, env.evaluate(xs))
    assert np.max(np.abs(again.evaluate(xs) - env.evaluate(xs))) <= 1e-12


def test_envelope_input_validation():
    with pytest.raises(InputError):
        lower_convex_envelope_1d([0.0], [1.0])
    with pytest.raises(InputError):
        lower_convex_envelope_1d([0.0, 0.0], [1.0, 2.0])  # conflicting duplicate
    env = lower_convex_envelope_1d([0.0, 0.0, 1.0], [1.0, 1.0, 3.0])  # agreeing dup
    assert env.breakpoints.size == 2
    with pytest.raises(InputError):
        lower_convex_envelope_1d([0.0, np.nan], [1.0, 2.0])
    with pytest.raises(InputError):
        convex_values_1d(np.array([0.0, 1.0, 2.0]), np.array([0.0, 2.0, 2.5]))


def test_biconjugate_two_points_is_chord():
    bi = biconjugate_1d([0.0, 2.0], [1.0, 5.0])
    assert np.allclose(bi.evaluate([0.0, 1.0, 2.0]), [1.0, 3.0, 5.0], atol=1e-12)


# ---------------------------------------------------------------- 2D hull


def test_envelope_nd_convex_function_unchanged():
    pts = grid_points_2d([[-1.0, 1.0], [-1.0, 1.0]], 17)
    vals = pts[:, 0] ** 2 + pts[:, 1] ** 2
    env = envelope_nd(pts, vals)
    assert np.max(np.abs(env.evaluate(pts) - vals)) <= 1e-9


def test_envelope_nd_separable_matches_1d_route():
    box = [[-2.0, 2.0], [-2.0, 2.0]]  # 21 knots put the minima +-1 on the grid
    pts = grid_points_2d(box, 21)
    vals = np.abs(pts[:, 0] ** 2 - 1.0) + pts[:, 1] ** 2
    env = envelope_nd(pts, vals)
    xs = np.linspace(-2.0, 2.0, 21)
    env1 = lower_convex_envelope_1d(xs, np.abs(xs * xs - 1.0))
    want = env1.evaluate(pts[:, 0]) + pts[:, 1] ** 2
    assert np.max(np.abs(env.evaluate(pts) - want)) <= 1e-8
    assert abs(env.evaluate(np.array([[0.0, 0.0]]))[0]) <= 1e-8


def test_envelope_nd_affine_plane_exact():
    pts = grid_points_2d([[-1.0, 1.0], [0.0, 2.0]], 5)
    vals = 0.3 * pts[:, 0] - 0.7 * pts[:, 1] + 0.2
    env = envelope_nd(pts, vals)
    assert env.planes.shape[0] == 1
    probes = np.array([[0.0, 1.0], [5.0, -3.0], [-2.0, 7.0]])  # box is no limit
    want = 0.3 * probes[:, 0] - 0.7 * probes[:, 1] + 0.2
    assert np.max(np.abs(env.evaluate(probes) - want)) <= 1e-12


def test_envelope_nd_minorant_and_convex():
    rng = np.random.Generator(np.random.Philox(key=23))
    pts = grid_points_2d([[-2.0, 2.0], [-2.0, 2.0]], 15)
    vals = np.sin(pts[:, 0] * 1.3) * np.cos(pts[:, 1]) + 0.1 * pts[:, 0]
    env = envelope_nd(pts, vals)
    assert np.all(env.evaluate(pts) <= vals + 1e-8)
    a = rng.uniform(-3.0, 3.0, size=(400, 2))
    b = rng.uniform(-3.0, 3.0, size=(400, 2))
    lhs = env.evaluate(0.5 * (a + b))
    rhs = 0.5 * (env.evaluate(a) + env.evaluate(b))
    assert np.all(lhs <= rhs + 1e-10)


def test_envelope_nd_input_validation():
    pts3 = np.zeros((4, 3))
    with pytest.raises(UnsupportedDimensionError):
        envelope_nd(pts3, np.zeros(4))
    line = np.column_stack([np.linspace(0, 1, 5), np.linspace(0, 2, 5)])
    with pytest.raises(InputError):
        envelope_nd(line, np.arange(5.0))
    with pytest.raises(InputError):
        envelope_nd(np.zeros((2, 2)), np.zeros(2))


# ------------------------------------------------------------ drift route


def test_envelope_drift_affine_passthrough():
    spec = DriftSpec.linear([[0.0, 1.0], [-1.0, 0.0]], [0.5, -0.5])
    out = envelope_drift(spec, [[-1, 1], [-1, 1]], 9)
    pts = np.array([[0.3, -0.8], [2.0, 5.0]])
    assert np.allclose(out(pts), build_drift(spec)(pts), atol=0.0)
    const = envelope_drift(DriftSpec.constant([1.5]), [[-1, 1]], 5)
    assert np.allclose(const(np.array([[0.2]])), [[1.5]], atol=0.0)


def test_envelope_drift_1d_shifted_sine():
    spec = DriftSpec.shifted_sine(dim=1)
    box = [[-4.0 * np.pi, 4.0 * np.pi]]
    out = envelope_drift(spec, box, 2049, x0=0.0)
    assert out.is_globally_lipschitz
    x = np.linspace(-2.0 * np.pi, 3.0 * np.pi, 33)[:, np.newaxis]
    got = out(x)
    assert got.shape == x.shape
    assert np.all(got >= 1.0 - 1e-12)
    assert np.max(got) <= 1.0 + 1e-4
    raw = build_drift(spec)(x)
    assert np.all(got <= raw + 1e-12)


def test_envelope_drift_2d_minorizes_raw():
    spec = DriftSpec.tanh(dim=2)
    box = [[-2.0, 2.0], [-2.0, 2.0]]
    out = envelope_drift(spec, box, 13, x0=[0.0, 0.0])
    pts = grid_points_2d(box, 13)
    raw = build_drift(spec)(pts)
    got = out(pts)
    assert got.shape == raw.shape
    assert np.all(got <= raw + 1e-8)


def test_envelope_drift_configuration_errors():
    spec = DriftSpec.shifted_sine(dim=1)
    with pytest.raises(ConfigurationError):
        envelope_drift(spec, [[1.0, -1.0]], 33)
    with pytest.raises(ConfigurationError):
        envelope_drift(spec, [[-1.0, 1.0]], 33, x0=3.0)
    with pytest.raises(ConfigurationError):
        envelope_drift(spec, [[-1.0, 1.0]], 1)
    with pytest.raises(ConfigurationError):
        envelope_drift(DriftSpec.tanh(dim=2), [[-1, 1], [-1, 1]], 2)
    with pytest.raises(UnsupportedDimensionError):
        envelope_drift(DriftSpec.tanh(dim=3), [[-1, 1]] * 3, 9)


# ------------------------------------------------------- quasi-monotone


def test_quasi_monotone_vacuous_in_1d():
    rep = is_quasi_monotone(build_drift(DriftSpec.tanh(dim=1)), [[-1, 1]])
    assert rep.passed and rep.method == "vacuous"


def test_quasi_monotone_linear_exact_pass():
    spec = DriftSpec.linear([[-1.0, 0.5], [0.2, -2.0]], [0.0, 0.0])
    rep = is_quasi_monotone(build_drift(spec), [[-1, 1], [-1, 1]])
    assert rep.passed and rep.method == "exact-linear"


def test_quasi_monotone_rotation_field_fails_with_witness():
    spec = DriftSpec.linear([[0.0, -1.0], [1.0, 0.0]], [0.0, 0.0])
    f = build_drift(spec)
    rep = is_quasi_monotone(f, [[-1, 1], [-1, 1]], tol=1e-9)
    assert rep.verdict == "fail"
    x, y, i = rep.witness
    assert x[i] == y[i]
    assert np.all(x <= y + 1e-15)
    assert f(x[np.newaxis, :])[0, i] > f(y[np.newaxis, :])[0, i] + rep.tol


def test_quasi_monotone_randomized_pass_and_fail():
    def good(pts):
        out = np.empty_like(pts)
        out[..., 0] = -pts[..., 0] + np.tanh(pts[..., 1])
        out[..., 1] = 0.5 * pts[..., 0] - pts[..., 1]
        return out

    rep = is_quasi_monotone(DriftFn(good, 2), [[-2, 2], [-2, 2]],
                            n_probes=500, seed=3)
    assert rep.passed and rep.method == "randomized"
    assert rep.n_probes == 1000

    def bad(pts):
        out = np.empty_like(pts)
        out[..., 0] = np.tanh(-pts[..., 1])
        out[..., 1] = np.tanh(pts[..., 0])
        return out

    f = DriftFn(bad, 2)
    rep = is_quasi_monotone(f, [[-2, 2], [-2, 2]], n_probes=500, seed=3)
    assert rep.verdict == "fail"
    x, y, i = rep.witness
    assert x[i] == y[i]
    assert np.all(x <= y + 1e-15)
    assert f(x[np.newaxis, :])[0, i] > f(y[np.newaxis, :])[0, i] + rep.tol


def test_quasi_monotone_validation():
    f = build_drift(DriftSpec.tanh(dim=2))
    with pytest.raises(ConfigurationError):
        is_quasi_monotone(f, [[-1, 1], [-1, 1]], n_probes=0)
    with pytest.raises(ConfigurationError):
        is_quasi_monotone(f, [[-1, 1]])


def test_piecewise_linear_validation():
    with pytest.raises(InputError):
        PiecewiseLinearConvex(dim=1, box=np.array([[0.0, 1.0]]),
                              breakpoints=np.array([0.0]),
                              knot_values=np.array([1.0]))
    with pytest.raises(UnsupportedDimensionError):
        PiecewiseLinearConvex(dim=3, box=np.zeros((3, 2)))
    with pytest.raises(InputError):
        PiecewiseLinearConvex(dim=2, box=np.zeros((2, 2)), planes=np.zeros((2, 4)))
