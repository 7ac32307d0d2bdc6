"""Configuration-driven command line front end.

Subcommands: novikov, simulate, envelope, compare, linear-bound, scaling,
selftest.  Each consumes one TOML config file (selftest's is optional) plus
an optional --seed override, writes a manifest before any report, and lays
outputs out as <output>/manifest.json, <output>/reports/, <output>/csv/.

Exit codes: 0 success, 1 usage or configuration error, 2 integrability gate
failed, 3 comparison hypothesis (quasi-monotonicity) failed, 4 property
suite or verdict failure.

Determinism contract: identical config and seed produce byte-identical CSV
files; the manifest differs only in its timestamps, which are excluded from
the config hash.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .core import (
    ALIVE,
    DriftSpec,
    TestFunctionSpec,
    TimeGrid,
    build_drift,
    sample_increments,
)
from .compare import (
    default_knot_pairs,
    dominance_check,
    kolmogorov_scaling,
    pathwise_compare,
)
from .drift_analysis import envelope_drift, is_quasi_monotone
from .errors import ConfigurationError, DriftlabError
from .girsanov import (
    girsanov_weights,
    normalization_report,
    novikov_estimate,
    stochastic_exponential,
)
from .integrate import euler_maruyama
from .linear_bound import (
    LinearDriftParams,
    fundamental_matrix,
    linear_solution_path,
    matrix_ode_check,
)
from .zdual import (
    CylinderTerm,
    FunctionalSpec,
    ScalarMap,
    euler_pairing,
    left_inverse_residual,
    pairing_estimate,
    pairing_samples,
    weak_law_samples,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NOVIKOV = 2
EXIT_HYPOTHESIS = 3
EXIT_PROPERTY = 4

_CATALOG_HELP = """drift catalog (config [drift] kind = ...):
  constant      b(x) = vector                      params: vector
  linear        b(x) = matrix x + offset           params: matrix, offset
  tanh          b_i(x) = amplitude tanh(scale x_i) params: dim, amplitude, scale
  sine          b_i(x) = amplitude sin(scale x_i + phase)
  shifted_sine  b_i(x) = offset_scalar + amplitude sin(scale x_i)
  polynomial    b_i(x) = sum_k c_k x_i^k           params: coefficients, dim
"""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems via exceptions, keeping exit code 1."""

    def error(self, message):
        raise UsageError(message)


def _fmt(x) -> str:
    return f"{float(x):.17g}"


# ------------------------------------------------------------------ config


def _require(cfg: dict, section: str, key: str):
    if section not in cfg or not isinstance(cfg[section], dict):
        raise UsageError(f"config is missing the [{section}] section")
    if key not in cfg[section]:
        raise UsageError(f"config is missing key '{section}.{key}'")
    return cfg[section][key]


def load_config(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {p}")
    try:
        with open(p, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as e:
        raise UsageError(f"config file {p} is not valid TOML: {e}")


def drift_from_config(cfg: dict) -> DriftSpec:
    kind = _require(cfg, "drift", "kind")
    d = cfg["drift"]
    dim = int(d.get("dim", 1))
    if kind == "constant":
        return DriftSpec.constant(_require(cfg, "drift", "vector"))
    if kind == "linear":
        return DriftSpec.linear(_require(cfg, "drift", "matrix"),
                                _require(cfg, "drift", "offset"))
    if kind == "tanh":
        return DriftSpec.tanh(dim=dim, amplitude=d.get("amplitude", 1.0),
                              scale=d.get("scale", 1.0))
    if kind == "sine":
        return DriftSpec.sine(dim=dim, amplitude=d.get("amplitude", 1.0),
                              scale=d.get("scale", 1.0), phase=d.get("phase", 0.0))
    if kind == "shifted_sine":
        return DriftSpec.shifted_sine(dim=dim,
                                      offset_scalar=d.get("offset_scalar", 2.0),
                                      amplitude=d.get("amplitude", 1.0),
                                      scale=d.get("scale", 1.0))
    if kind == "polynomial":
        return DriftSpec.polynomial(_require(cfg, "drift", "coefficients"), dim=dim)
    raise UsageError(f"unknown drift kind '{kind}'; see --help for the catalog")


def grid_from_config(cfg: dict) -> TimeGrid:
    return TimeGrid(horizon=float(_require(cfg, "grid", "horizon")),
                    n_steps=int(_require(cfg, "grid", "n_steps")))


def _box_from_config(cfg: dict, dim: int) -> np.ndarray:
    box = np.asarray(_require(cfg, "envelope", "box"), dtype=float)
    if box.ndim == 1:
        box = box.reshape(1, 2)
    if box.shape != (dim, 2):
        raise UsageError(f"envelope.box must give [lo, hi] for each of {dim} axes")
    return box


def _x0_from_config(cfg: dict, dim: int) -> np.ndarray:
    x0 = np.atleast_1d(np.asarray(cfg.get("paths", {}).get("x0", 0.0), dtype=float))
    if x0.size == 1 and dim > 1:
        x0 = np.full(dim, float(x0[0]))
    if x0.size != dim:
        raise UsageError(f"paths.x0 must be a scalar or a length-{dim} list")
    return x0


def _seed_from_config(cfg: dict, override) -> int:
    if override is not None:
        return int(override)
    return int(_require(cfg, "run", "seed"))


# ---------------------------------------------------------------- manifest


@dataclass
class RunManifest:
    """Provenance record written before any report.

    The hash covers the config content and the effective seed; timestamps
    are recorded but excluded so reruns of the same experiment hash alike.
    """

    command: str
    config_hash: str
    seed: int
    workers: int
    versions: dict
    created_at: str
    status: str = "running"
    outputs: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "command": self.command,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "workers": self.workers,
            "versions": self.versions,
            "created_at": self.created_at,
            "status": self.status,
            "outputs": sorted(self.outputs),
        }


def config_hash(cfg: dict, seed: int) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(f"{canon}|seed={seed}".encode()).hexdigest()


class OutputLayout:
    """Creates <root>/manifest.json, <root>/reports/, <root>/csv/."""

    def __init__(self, root, command: str, cfg: dict, seed: int, workers: int):
        self.root = Path(root)
        self.reports = self.root / "reports"
        self.csv = self.root / "csv"
        self.reports.mkdir(parents=True, exist_ok=True)
        self.csv.mkdir(parents=True, exist_ok=True)
        self.manifest = RunManifest(
            command=command,
            config_hash=config_hash(cfg, seed),
            seed=seed,
            workers=workers,
            versions={
                "driftlab": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "python": sys.version.split()[0],
            },
            created_at=time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        )
        self._write_manifest()  # before any report: partial runs are detectable

    def _write_manifest(self):
        with open(self.root / "manifest.json", "w") as fh:
            json.dump(self.manifest.as_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_report(self, name: str, lines) -> Path:
        path = self.reports / name
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        self.manifest.outputs.append(str(path.relative_to(self.root)))
        self._write_manifest()
        return path

    def write_csv(self, name: str, header, rows) -> Path:
        path = self.csv / name
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([c if isinstance(c, str) else _fmt(c) for c in row])
        self.manifest.outputs.append(str(path.relative_to(self.root)))
        self._write_manifest()
        return path

    def finish(self, status: str = "complete"):
        self.manifest.status = status
        self._write_manifest()


def _layout(args, cfg: dict, command: str) -> tuple:
    seed = _seed_from_config(cfg, args.seed)
    run = cfg.get("run", {})
    workers = int(run.get("workers", 0)) or (os.cpu_count() or 1)
    root = args.output if args.output is not None else run.get("output")
    if root is None:
        raise UsageError("config is missing key 'run.output' (or pass --output)")
    return OutputLayout(root, command, cfg, seed, workers), seed


# ------------------------------------------------------------- subcommands


def _novikov_lines(est) -> list:
    lines = [
        "integrability gate for the drift's Girsanov density",
        f"estimate        {_fmt(est.estimate)}",
        f"std_error       {_fmt(est.std_error)}",
        f"n_paths         {est.n_paths}",
        f"n_overflow      {est.n_overflow}",
        f"max_share       {_fmt(est.max_share)}",
        f"tail_index      {'none' if est.tail_index is None else _fmt(est.tail_index)}",
        f"verdict         {est.verdict}",
    ]
    if est.note:
        lines.append(f"note            {est.note}")
    return lines


def cmd_novikov(args) -> int:
    cfg = load_config(args.config)
    out, seed = _layout(args, cfg, "novikov")
    spec = drift_from_config(cfg)
    grid = grid_from_config(cfg)
    drift = build_drift(spec)
    x0 = _x0_from_config(cfg, spec.dim)
    n = int(cfg.get("paths", {}).get("n", 20_000))
    nk = cfg.get("novikov", {})
    est = novikov_estimate(drift, grid, n_paths=n, seed=seed, x0=x0,
                           share_warn=nk.get("share_warn", 0.01),
                           share_fail=nk.get("share_fail", 0.10))
    out.write_report("novikov.txt", _novikov_lines(est))
    qs = est.exponent_quantiles
    out.write_csv("novikov.csv",
                  ["estimate", "std_error", "n_paths", "n_overflow", "max_share",
                   "tail_index", "exp_q50", "exp_q90", "exp_q99", "exp_max"],
                  [[est.estimate, est.std_error, est.n_paths, est.n_overflow,
                    est.max_share,
                    float("nan") if est.tail_index is None else est.tail_index,
                    qs[0.5], qs[0.9], qs[0.99], qs[1.0]]])
    out.finish()
    print(f"novikov verdict: {est.verdict} "
          f"(estimate {est.estimate:.6g} +- {est.std_error:.3g})")
    return EXIT_OK if est.verdict != "fail" else EXIT_NOVIKOV


def _ensemble_summary_rows(values, status, grid, knots):
    rows = []
    for k in knots:
        valid = (status == ALIVE) | (status > k)
        v = values[valid, k, :]
        for d in range(values.shape[2]):
            col = v[:, d]
            if col.size:
                q05, q50, q95 = np.quantile(col, [0.05, 0.5, 0.95])
                rows.append([k, grid.knots[k], d, col.mean(),
                             col.std(ddof=1) if col.size > 1 else 0.0,
                             q05, q50, q95, valid.mean()])
            else:
                nan = float("nan")
                rows.append([k, grid.knots[k], d, nan, nan, nan, nan, nan, 0.0])
    return rows


_SUMMARY_HEADER = ["knot", "time", "coordinate", "mean", "std",
                   "q05", "q50", "q95", "surviving_fraction"]


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    out, seed = _layout(args, cfg, "simulate")
    spec = drift_from_config(cfg)
    grid = grid_from_config(cfg)
    drift = build_drift(spec)
    x0 = _x0_from_config(cfg, spec.dim)
    n = int(_require(cfg, "paths", "n"))
    inc = sample_increments(grid, n, spec.dim, seed,
                            chunk_size=int(cfg.get("paths", {}).get("chunk_size", 65536)))
    sol = euler_maruyama(drift, x0, inc)
    knots = cfg.get("simulate", {}).get(
        "knots", list(range(0, grid.n_knots, max(1, grid.n_knots // 32))))
    out.write_csv("euler_summary.csv", _SUMMARY_HEADER,
                  _ensemble_summary_rows(sol.paths.values, sol.paths.status,
                                         grid, [int(k) for k in knots]))
    info = sol.explosion
    lines = [f"Euler ensemble: {n} paths, dt {_fmt(grid.dt)}, horizon {_fmt(grid.horizon)}",
             f"surviving fraction {_fmt(info.surviving_fraction)}",
             f"stopped paths {info.n_exploded}"]
    for rung in info.exit_time_summary():
        lines.append("threshold {level}: crossed_fraction {cf}, median_time {mt}".format(
            level=_fmt(rung["threshold"]), cf=_fmt(rung["crossed_fraction"]),
            mt="none" if rung["median_time"] is None else _fmt(rung["median_time"])))
    out.write_report("simulate.txt", lines)
    out.finish()
    print(f"simulate: {n} paths, surviving fraction {info.surviving_fraction:.4f}")
    return EXIT_OK


def cmd_envelope(args) -> int:
    cfg = load_config(args.config)
    out, seed = _layout(args, cfg, "envelope")
    spec = drift_from_config(cfg)
    x0 = _x0_from_config(cfg, spec.dim)
    box = _box_from_config(cfg, spec.dim)
    resolution = _require(cfg, "envelope", "resolution")
    envd = envelope_drift(spec, box, resolution, x0=x0)
    probes = int(cfg.get("envelope", {}).get("qm_probes", 2000))
    report = is_quasi_monotone(envd, box, n_probes=probes, seed=seed)
    xs = np.linspace(box[0, 0], box[0, 1], 257)
    if spec.dim == 1:
        pts = xs[:, np.newaxis]
    else:
        mids = box[1:, :].mean(axis=1)
        pts = np.column_stack([xs] + [np.full(xs.size, m) for m in mids])
    raw = build_drift(spec)(pts)
    env = envd(pts)
    rows = [[x, *pt[1:], *r, *e] for x, pt, r, e in zip(xs, pts, raw, env)]
    header = (["axis0"] + [f"axis{i}" for i in range(1, spec.dim)]
              + [f"drift{i}" for i in range(spec.dim)]
              + [f"envelope{i}" for i in range(spec.dim)])
    out.write_csv("envelope_profile.csv", header, rows)
    lines = [f"componentwise convex envelope on box {box.tolist()}",
             f"resolution {resolution}",
             f"quasi_monotone verdict: {report.verdict} (method {report.method}, "
             f"probes {report.n_probes})"]
    if report.witness is not None:
        x, y, i = report.witness
        lines.append(f"witness: coordinate {i}, x {np.asarray(x).tolist()}, "
                     f"y {np.asarray(y).tolist()}")
    out.write_report("envelope.txt", lines)
    out.finish()
    print(f"envelope: quasi-monotone {report.verdict}")
    return EXIT_OK if report.passed else EXIT_HYPOTHESIS


def _dominance_lines(rep, knot, grid) -> list:
    lines = [f"dominance at knot {knot} (t = {_fmt(grid.knots[knot])})",
             f"verdict        {rep.verdict}",
             f"equality       {rep.equality}",
             f"max_gap        {_fmt(rep.max_gap)}",
             f"tolerance      {_fmt(rep.tol)} (effective {_fmt(rep.tol_effective)})",
             f"ess            {_fmt(rep.ess)}",
             f"bootstrap      {rep.n_boot}",
             f"surviving      {_fmt(rep.surviving_fraction)}"]
    if rep.note:
        lines.append(f"note           {rep.note}")
    return lines


def cmd_compare(args) -> int:
    cfg = load_config(args.config)
    out, seed = _layout(args, cfg, "compare")
    spec = drift_from_config(cfg)
    grid = grid_from_config(cfg)
    drift = build_drift(spec)
    x0 = _x0_from_config(cfg, spec.dim)
    box = _box_from_config(cfg, spec.dim)
    resolution = _require(cfg, "envelope", "resolution")
    comp = cfg.get("compare", {})
    n = int(_require(cfg, "paths", "n"))
    knots = [int(k) for k in comp.get("knots",
                                      [grid.n_steps // 2, grid.n_steps])]
    tol = float(comp.get("tol", 0.02))
    n_boot = int(comp.get("bootstrap", 500))

    # stage 1: envelope and the comparison hypothesis (cheap, hard gate)
    envd = envelope_drift(spec, box, resolution, x0=x0)
    qm = is_quasi_monotone(envd, box,
                           n_probes=int(comp.get("qm_probes", 2000)), seed=seed)
    lines = [f"quasi_monotone verdict: {qm.verdict} (method {qm.method})"]
    if qm.witness is not None:
        x, y, i = qm.witness
        lines.append(f"witness: coordinate {i}, x {np.asarray(x).tolist()}, "
                     f"y {np.asarray(y).tolist()}")
    out.write_report("hypothesis.txt", lines)
    if not qm.passed:
        out.finish("hypothesis-failed")
        print(f"compare: quasi-monotone check failed, witness coordinate "
              f"{qm.witness[2]}")
        return EXIT_HYPOTHESIS

    # stage 2: integrability gate for the raw drift
    est = novikov_estimate(drift, grid,
                           n_paths=int(cfg.get("novikov", {}).get("n", min(n, 20_000))),
                           seed=seed + 3, x0=x0)
    out.write_report("novikov.txt", _novikov_lines(est))
    if est.verdict == "fail":
        out.finish("novikov-failed")
        print("compare: integrability gate failed")
        return EXIT_NOVIKOV
    if est.verdict == "warn" and not args.allow_warn:
        out.finish("novikov-warn")
        print("compare: integrability gate returned 'warn'; "
              "rerun with --allow-warn to proceed")
        return EXIT_NOVIKOV

    # stage 3: coupled ensembles and weighted law
    inc = sample_increments(grid, n, spec.dim, seed + 1,
                            chunk_size=int(cfg.get("paths", {}).get("chunk_size", 65536)))
    env_sol = euler_maruyama(envd, x0, inc)
    raw_sol = euler_maruyama(drift, x0, inc)
    stats = pathwise_compare(raw_sol.paths, env_sol.paths, up_to=env_sol.explosion)
    out.write_csv("pathwise_min_gap.csv",
                  ["knot", "time", "coordinate", "min_gap"],
                  [[k, grid.knots[k], d, stats.min_gap[k, d]]
                   for k in range(grid.n_knots) for d in range(spec.dim)])
    out.write_report("pathwise.txt", [
        "coupled ordering of raw-drift vs envelope-drift Euler paths",
        f"violations      {stats.total}",
        f"max_magnitude   {_fmt(float(np.max(stats.max_magnitude)))}",
        f"comparisons     {stats.n_comparisons}",
        f"slack           {_fmt(stats.slack)}"])

    out.write_csv("euler_envelope_summary.csv", _SUMMARY_HEADER,
                  _ensemble_summary_rows(env_sol.paths.values,
                                         env_sol.paths.status, grid, knots))

    verdicts = []
    for knot in knots:
        samples = weak_law_samples(drift, x0, knot, grid, n_paths=n, seed=seed)
        rep = dominance_check(samples, env_sol.paths, knot, tol=tol,
                              n_boot=n_boot, boot_seed=seed + 2)
        verdicts.append(rep.verdict)
        rows = []
        for c in rep.coordinates:
            for p in range(c.probes.size):
                rows.append([c.coordinate, c.probes[p], c.f_z[p], c.f_y[p],
                             c.gap[p], c.gap_lower[p], c.gap_upper[p]])
        out.write_csv(f"dominance_knot{knot}.csv",
                      ["coordinate", "quantile", "f_z", "f_y", "gap",
                       "gap_lower", "gap_upper"], rows)
        out.write_report(f"dominance_knot{knot}.txt",
                         _dominance_lines(rep, knot, grid))
        print(f"compare: knot {knot} verdict {rep.verdict}"
              + (" (equality)" if rep.equality else ""))
    ok = all(v == "dominates" for v in verdicts) and stats.total == 0
    out.finish("complete" if ok else "verdict-failed")
    if stats.total:
        print(f"compare: {stats.total} pathwise ordering violations")
    return EXIT_OK if ok else EXIT_PROPERTY


def cmd_linear_bound(args) -> int:
    cfg = load_config(args.config)
    out, seed = _layout(args, cfg, "linear-bound")
    spec = drift_from_config(cfg)
    try:
        params = LinearDriftParams.from_spec(spec)
    except ConfigurationError as e:
        raise UsageError(str(e))
    grid = grid_from_config(cfg)
    x0 = _x0_from_config(cfg, spec.dim)
    n = int(cfg.get("paths", {}).get("n", 4000))
    series = fundamental_matrix(params.matrix, grid)
    # semigroup residual over a deterministic sample of index pairs
    worst = 0.0
    step = max(1, grid.n_steps // 16)
    for i in range(step, grid.n_steps // 2, step):
        j = grid.n_steps - i if grid.n_steps - i > i else i
        if i + j < grid.n_knots:
            gap = np.max(np.abs(series.values[i + j]
                                - series.values[i] @ series.values[j]))
            worst = max(worst, float(gap))
    ode_dev = matrix_ode_check(params.matrix, grid)
    meds = []
    for g in (grid, grid.refine(2)):
        s = fundamental_matrix(params.matrix, g)
        inc = sample_increments(g, n, spec.dim, seed)
        exact = linear_solution_path(params, x0, inc, series=s)
        euler = euler_maruyama(build_drift(spec), x0, inc)
        gap = np.max(np.abs(exact.values - euler.paths.values), axis=(1, 2))
        meds.append(float(np.median(gap)))
    ratio = meds[0] / meds[1] if meds[1] > 0 else float("inf")
    rows = [[grid.dt, meds[0]], [grid.refine(2).dt, meds[1]]]
    out.write_csv("euler_vs_closed_form.csv", ["dt", "median_max_error"], rows)
    checks_ok = worst <= 1e-9 and ode_dev <= 1e-8
    out.write_report("linear_bound.txt", [
        f"off_diagonal_nonneg  {params.off_diagonal_nonneg}",
        f"semigroup_residual   {_fmt(worst)}",
        f"ode_oracle_gap       {_fmt(ode_dev)}",
        f"median_error_dt      {_fmt(meds[0])}",
        f"median_error_dt/2    {_fmt(meds[1])}",
        f"refinement_ratio     {_fmt(ratio)} (first-order target 2)",
        f"matrix_checks        {'pass' if checks_ok else 'fail'}"])
    out.finish("complete" if checks_ok else "matrix-checks-failed")
    print(f"linear-bound: refinement ratio {ratio:.3f}, "
          f"matrix checks {'pass' if checks_ok else 'fail'}")
    return EXIT_OK if checks_ok else EXIT_PROPERTY


def cmd_scaling(args) -> int:
    cfg = load_config(args.config)
    out, seed = _layout(args, cfg, "scaling")
    spec = drift_from_config(cfg)
    grid = grid_from_config(cfg)
    drift = build_drift(spec)
    x0 = _x0_from_config(cfg, spec.dim)
    sc = cfg.get("scaling", {})
    n = int(cfg.get("paths", {}).get("n", 20_000))
    if "knot_pairs" in sc:
        pairs = [(int(i), int(j)) for i, j in sc["knot_pairs"]]
    else:
        pairs = default_knot_pairs(grid, n_lags=int(sc.get("n_lags", 6)),
                                   base_knot=sc.get("base_knot"))
    fit = kolmogorov_scaling(drift, x0, grid, pairs, n_paths=n, seed=seed)
    lo, hi = sc.get("slope_band", [1.3, 1.7])
    in_band = lo <= fit.slope <= hi
    out.write_csv("scaling_moments.csv", ["lag", "third_moment"],
                  [[l, m] for l, m in zip(fit.lags, fit.moments)])
    ci_lo, ci_hi = fit.ci
    out.write_report("scaling.txt", [
        "cubed-increment scaling fit",
        f"slope      {_fmt(fit.slope)}",
        f"ci         [{_fmt(ci_lo)}, {_fmt(ci_hi)}]",
        f"band       [{_fmt(lo)}, {_fmt(hi)}] -> {'pass' if in_band else 'fail'}",
        f"n_paths    {fit.n_paths}"])
    out.finish("complete" if in_band else "slope-out-of-band")
    print(f"scaling: slope {fit.slope:.4f}, CI width {fit.ci_width:.4f}")
    return EXIT_OK if in_band else EXIT_PROPERTY


# ---------------------------------------------------------------- selftest


def _selftest_checks(seed: int, n: int, fault: str | None):
    grid = TimeGrid(horizon=1.0, n_steps=64)
    tanh = build_drift(DriftSpec.tanh(dim=1))
    mid = 0.5

    def check_normalization():
        worst = 0.0
        for spec in (DriftSpec.tanh(dim=1), DriftSpec.shifted_sine(dim=1),
                     DriftSpec.constant([0.5])):
            drift = build_drift(spec)
            from .core import brownian_ensemble
            paths = brownian_ensemble(grid, n, 1, seed)
            weights = stochastic_exponential(paths, drift)
            if fault == "normalization":
                # corrupted-weights injection: a biased density must be caught
                from .girsanov import MeasureWeights
                weights = MeasureWeights(
                    grid=weights.grid,
                    log_weights=weights.log_weights + 0.3 * grid.knots,
                    valid=weights.valid)
            rep = normalization_report(weights)
            worst = max(worst, abs(rep.z_score))
        return worst <= 5.0, f"max |z| {worst:.2f}"

    def check_z_of_one():
        r = left_inverse_residual(tanh, FunctionalSpec.one(), FunctionalSpec.one(),
                                  grid, 0.0, n, seed + 1)
        band = 5.0 * max(r.std_error, 1e-15)
        return abs(r.estimate) <= band, f"residual {r.estimate:.3e} (band {band:.1e})"

    def check_left_inverse():
        U = FunctionalSpec.cylinder(CylinderTerm(ScalarMap("sin"), mid, (1.0,)))
        Y = FunctionalSpec.exponential(TestFunctionSpec.constant([0.5]))
        r = left_inverse_residual(tanh, U, Y, grid, 0.0, n, seed + 2)
        band = 5.0 * max(r.std_error, 1e-15)
        return abs(r.estimate) <= band, f"residual {r.estimate:.3e} (band {band:.1e})"

    def check_duality():
        knot = grid.index_of(mid)
        Y = FunctionalSpec.cylinder(CylinderTerm(ScalarMap("cos"), mid, (1.0,)))
        a = pairing_estimate(tanh, 0.0, knot, Y, grid, n, seed + 3)
        b = euler_pairing(tanh, 0.0, knot, Y, grid, n, seed + 4)
        gap = abs(float(a.normalized.estimate[0]) - float(b.estimate[0]))
        band = 5.0 * float(np.hypot(a.normalized.std_error[0], b.std_error[0]))
        return gap <= band, f"gap {gap:.3e} (band {band:.1e})"

    def check_jensen():
        from .zdual import jensen_gap
        rep = jensen_gap(tanh, ScalarMap("square"),
                         FunctionalSpec.coordinate(mid, 0, 1),
                         [FunctionalSpec.one()], grid, 0.0, n, seed + 5)
        return rep.all_nonnegative, "convex gap nonnegative"

    def check_positivity():
        from .core import brownian_ensemble
        paths = brownian_ensemble(grid, min(n, 2000), 1, seed + 6)
        X = FunctionalSpec.cylinder(CylinderTerm(ScalarMap("abs"), mid, (1.0,)))
        Y = FunctionalSpec.cylinder(CylinderTerm(ScalarMap("gauss"), 1.0, (1.0,)))
        terms, weights, valid = pairing_samples(tanh, paths, X, Y)
        ok = bool(np.all(terms[valid] >= 0.0))
        return ok, "all pairing terms nonnegative"

    return [("normalization", check_normalization),
            ("z_of_one", check_z_of_one),
            ("left_inverse", check_left_inverse),
            ("duality", check_duality),
            ("jensen", check_jensen),
            ("positivity", check_positivity)]


def cmd_selftest(args) -> int:
    seed = 90_210 if args.seed is None else int(args.seed)
    n = 10_000
    failed = []
    for name, check in _selftest_checks(seed, n, args.inject_fault):
        ok, detail = check()
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        if not ok:
            failed.append(name)
    if failed:
        print(f"selftest failed: {', '.join(failed)}")
        return EXIT_PROPERTY
    print("selftest passed")
    return EXIT_OK


# -------------------------------------------------------------------- main


def build_parser() -> _Parser:
    parser = _Parser(
        prog="driftlab",
        description="Stochastic simulation experiments: measure-change "
                    "estimators, convex drift envelopes, comparison checks.",
        epilog=_CATALOG_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command")
    specs = [
        ("novikov", cmd_novikov, "integrability gate for the Girsanov density"),
        ("simulate", cmd_simulate, "Euler ensemble with explosion tracking"),
        ("envelope", cmd_envelope, "componentwise convex envelope of the drift"),
        ("compare", cmd_compare, "weighted-law dominance and coupled ordering"),
        ("linear-bound", cmd_linear_bound, "closed-form affine path vs Euler"),
        ("scaling", cmd_scaling, "cubed-increment continuity scaling fit"),
    ]
    for name, fn, help_text in specs:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="TOML config file")
        p.add_argument("--seed", type=int, default=None,
                       help="override run.seed from the config")
        p.add_argument("--output", default=None,
                       help="override run.output from the config")
        if name == "compare":
            p.add_argument("--allow-warn", action="store_true",
                           help="proceed when the integrability gate says 'warn'")
        p.set_defaults(fn=fn)
    st = sub.add_parser("selftest", help="identity battery at reduced scale")
    st.add_argument("--seed", type=int, default=None)
    st.add_argument("--inject-fault", choices=["normalization"], default=None,
                    help="test mode: corrupt the named stage and expect detection")
    st.set_defaults(fn=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "fn", None) is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        return args.fn(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DriftlabError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


def console_entry():
    raise SystemExit(main())
