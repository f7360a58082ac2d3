"""Command-line entry point ``lmss``.

Each subcommand reads one JSON config, validates it, runs the matching
library routine and writes CSV data plus JSON reports into the output
directory. A ``manifest.json`` records the config hash, library versions,
seeds, wall time and a checksum of every output. Writes are atomic.

Exit codes: 0 success, 2 invalid config, 3 numeric failure, 4 budget exceeded.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import math
import os
import platform
import sys
import time
from importlib import metadata

import numpy as np
import scipy

from . import __version__
from .config import (COMMANDS, ConfigError, as_point, config_hash, load_quad, load_rect,
                     load_spec, validate)
from .existence import condition_C_check
from .field import DEFAULT_MAX_CELLS, BudgetExceeded, atomic_write, simulate, write_field_csv
from .hurst import ConditionC1Error, HurstBoundError, HurstSpec, Rect
from .kernel import increment_ratio_scan, normalizing_constant
from .lemmas import (verify_bound_sumZ, verify_int_equiv, verify_p_weights,
                     verify_power_sum_equivalence, verify_triangle)
from .localtime import (ProbeConfig, box_local_time, holder_scaling_probe,
                        local_time_estimate, moment_scaling_probe, occupation_histogram,
                        scott_bandwidth, smoothed_local_time, time_weights)
from .quadrature import QuadratureSpec, axis_rule
from .stable import RngStream

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_BUDGET = 0, 2, 3, 4
CACHE_ENV = "LMSS_CACHE_DIR"

DEFAULT_INT_EQUIV = (
    {"alpha": 2.0, "beta": 1.0, "a": 0.0, "b": 1.0, "t0": 0.3},
    {"alpha": 1.5, "beta": 1.0, "a": 0.0, "b": 1.0, "t0": 0.3},
    {"alpha": 2.0, "beta": 2.0, "a": 0.0, "b": 1.0, "t0": 0.3},
    {"alpha": 1.0, "beta": 1.0, "a": 0.0, "b": 1.0, "t0": 0.4},
    {"alpha": 2.0, "beta": 0.25, "a": 0.0, "b": 1.0, "t0": 0.3},
)
DEFAULT_P_WEIGHTS = ({"h": [0.5, 0.5], "d": 1, "n": 1}, {"h": [0.3, 0.6], "d": 2, "n": 2})
DEFAULT_SUM_Z = ({"n": 2, "l": 0, "b": [0.0, 0.0], "alpha": 2.0, "directions": 400},)
DEFAULT_CONSTANTS = (
    {"alpha": 2.0, "h": [0.5]}, {"alpha": 2.0, "h": [0.75]}, {"alpha": 2.0, "h": [0.5, 0.5]},
    {"alpha": 1.5, "h": [0.7]}, {"alpha": 1.0, "h": [0.6]}, {"alpha": 0.8, "h": [0.3]},
)
DEFAULT_ENVELOPES = (
    {"example": {"m": 2, "q": 0.0, "k": 0.5}, "rect": {"lower": [0.1], "upper": [0.2]},
     "alpha": 2.0, "pairs": 50},
)


@dataclasses.dataclass
class RunContext:
    output_dir: str
    seed: int
    threads: int = 1
    max_cells: int = DEFAULT_MAX_CELLS
    cache_dir: str | None = None
    outputs: list = dataclasses.field(default_factory=list)
    seeds: dict = dataclasses.field(default_factory=dict)

    def path(self, name: str) -> str:
        return os.path.join(self.output_dir, name)


# -- serialization -----------------------------------------------------------------


def plain(obj):
    """Recursively convert numpy and dataclass values to strict-JSON types."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)
                if not f.name.startswith("_")}
    if isinstance(obj, HurstSpec):
        return obj.to_dict()
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def write_json(ctx: RunContext, name: str, obj) -> None:
    text = json.dumps(plain(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"
    atomic_write(ctx.path(name), lambda fh: fh.write(text))
    ctx.outputs.append(name)


def write_csv(ctx: RunContext, name: str, header, rows) -> None:
    def write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                        for v in row])
    atomic_write(ctx.path(name), write)
    ctx.outputs.append(name)


def _sha256(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


# -- budget ------------------------------------------------------------------------


def check_quad_budget(quad: QuadratureSpec, N: int, n_points: int, max_cells: int) -> int:
    """Fail fast when a tensor rule over ``n_points`` kernels would exceed the budget."""
    rule = axis_rule(np.linspace(0.0, 1.0, n_points + 1), quad, 2.0)
    nodes = rule.nodes.size ** N
    if nodes > max_cells:
        raise BudgetExceeded(f"quadrature needs about {nodes} nodes, budget is {max_cells}")
    return nodes


# -- subcommands ---------------------------------------------------------------------


def _field_inputs(cfg: dict):
    spec, natural = load_spec(cfg)
    rect = load_rect(cfg, spec.dim, natural)
    alpha = float(cfg.get("alpha", 2.0))
    d = int(cfg.get("d", 1))
    return spec, rect, alpha, d


def _simulate_field(cfg: dict, ctx: RunContext):
    spec, rect, alpha, d = _field_inputs(cfg)
    density = int(cfg.get("eval_density", 65))
    fs = simulate(spec, rect, density, alpha, d, ctx.seed, spacing=cfg.get("spacing"),
                  truncation_L=float(cfg.get("truncation_L", 10.0)),
                  replicate=cfg.get("replicate"), max_cells=ctx.max_cells,
                  cache_dir=ctx.cache_dir)
    ctx.seeds = {"seed": ctx.seed, "stream_ids": fs.meta["stream_ids"]}
    return spec, rect, fs


def cmd_simulate(cfg: dict, ctx: RunContext) -> None:
    _, _, fs = _simulate_field(cfg, ctx)
    write_field_csv(fs, ctx.path("field.csv"))
    ctx.outputs += ["field.csv", "field.json"]


def cmd_localtime(cfg: dict, ctx: RunContext) -> None:
    spec, rect, fs = _simulate_field(cfg, ctx)
    d = fs.d
    x = as_point(cfg.get("x", [0.0] * d), d, "x")
    bandwidth = float(cfg.get("bandwidth", scott_bandwidth(fs.values)))
    if not bandwidth > 0:
        raise ArithmeticError("degenerate field: zero bandwidth")
    hist = occupation_histogram(fs, rect, int(cfg.get("bins", 41)), bandwidth, center=x)
    centers = np.meshgrid(*hist.bin_centers, indexing="ij")
    rows = zip(*[c.ravel() for c in centers], hist.density.ravel())
    write_csv(ctx, "histogram.csv", [f"x_{k + 1}" for k in range(d)] + ["density"], rows)
    w = time_weights(fs.points, rect)
    report = {
        "x": x, "bandwidth": bandwidth, "bins": int(cfg.get("bins", 41)),
        "local_time_histogram": local_time_estimate(hist, x),
        "local_time_box": box_local_time(fs.values, w, x, bandwidth),
        "total_mass": hist.total_mass, "overflow_mass": hist.overflow_mass,
        "overflow_flagged": hist.overflow_flagged, "rect": rect, "field_meta": fs.meta,
    }
    if "k" in cfg:
        report["local_time_smoothed"] = smoothed_local_time(fs, rect, x, float(cfg["k"]))
        report["k"] = float(cfg["k"])
    write_json(ctx, "localtime.json", report)


def cmd_check_existence(cfg: dict, ctx: RunContext) -> None:
    spec, rect, _, d = _field_inputs(cfg)
    density = int(cfg.get("grid_density", 101))
    if density ** rect.dim > ctx.max_cells:
        raise BudgetExceeded(f"scan grid has {density ** rect.dim} points")
    quad = QuadratureSpec(order=8, panels_per_axis=8)
    if rect.dim > 1:
        check_quad_budget(quad, rect.dim, 1, ctx.max_cells)
    rep = condition_C_check(spec, rect, d, float(cfg.get("equality_tol", 1e-9)), quad, density)
    write_json(ctx, "existence.json", {
        "verdict": rep.verdict, "exists": rep.exists, "inf_sum_inv_h": rep.inf_sum_inv_h,
        "c2_integral": rep.c2_integral, "d": d, "spec": spec, "rect": rect,
        "diagnostics": rep.diagnostics})


def _lemma_rows(cfg: dict, ctx: RunContext):
    """Yield ``(check, id, passed, summary, detail)`` for every requested check."""
    for i, case in enumerate(cfg.get("int_equiv", DEFAULT_INT_EQUIV)):
        kw = {k: case[k] for k in ("alpha", "beta", "a", "b", "t0")}
        if "A_list" in case:
            kw["A_list"] = case["A_list"]
        r = verify_int_equiv(**kw)
        yield ("int_equiv", i, r.passed,
               f"{r.regime} slope={r.fitted_slope:.6g} envelope={r.ratio_envelope}",
               dict(kw, result=r))

    tri = cfg.get("triangle", {})
    gen = RngStream(ctx.seed, 1).generator()
    N, trials = int(tri.get("N", 3)), int(tri.get("trials", 100))
    for i, alpha in enumerate(tri.get("alphas", (0.5, 1.0, 1.5, 2.0))):
        xs = gen.standard_normal((trials, N))
        ok_tri = all(verify_triangle(alpha, x).satisfied for x in xs)
        ok_pow = all(all(verify_power_sum_equivalence(alpha, x).values()) for x in xs)
        yield ("triangle", i, ok_tri and ok_pow, f"alpha={alpha} trials={trials} N={N}",
               {"alpha": alpha, "trials": trials, "N": N, "triangle": ok_tri,
                "power_sum": ok_pow})

    for i, case in enumerate(cfg.get("p_weights", DEFAULT_P_WEIGHTS)):
        r = verify_p_weights(case["h"], case["d"], case["n"])
        yield ("p_weights", i, r.passed, f"tau={r.tau} p={np.round(r.p, 6).tolist()}",
               dict(case, result=r))

    cases = cfg.get("sum_z", DEFAULT_SUM_Z)
    if cases:
        if "spec" in cfg or "example" in cfg:
            spec, natural = load_spec(cfg)
            rect = load_rect(cfg, spec.dim, natural)
        else:
            spec, rect = HurstSpec.constant([0.6]), Rect((0.2,), (1.0,))
        quad = load_quad(cfg.get("quad"), order=12, panels_per_axis=8)
    for i, case in enumerate(cases):
        n = int(case["n"])
        if len(case["b"]) != n:
            raise ConfigError("sum_z: b must have n entries")
        check_quad_budget(quad, spec.dim, n, ctx.max_cells)
        r = verify_bound_sumZ(n, spec, int(case.get("l", 0)), case["b"],
                              float(case.get("alpha", 2.0)), rect, quad,
                              RngStream(ctx.seed, 100 + i), int(case.get("calibration", 20)),
                              int(case.get("held_out", 30)),
                              float(case.get("margin", 2.0)), int(case.get("directions", 2000)))
        yield ("sum_z", i, r.passed, f"c_fit={r.c_fit:.6g} held={r.held_fraction:.3f}",
               dict(case, spec=spec, rect=rect, result=r))


def cmd_verify_lemmas(cfg: dict, ctx: RunContext) -> None:
    rows, detail = [], []
    for check, i, passed, summary, extra in _lemma_rows(cfg, ctx):
        rows.append((check, i, "pass" if passed else "fail", summary))
        detail.append(dict(extra, check=check, id=i, passed=bool(passed)))
    ctx.seeds = {"seed": ctx.seed, "triangle_stream": 1, "sum_z_streams": "100 + case index"}
    write_csv(ctx, "lemmas.csv", ["check", "id", "status", "summary"], rows)
    write_json(ctx, "lemmas.json", detail)


def _envelope_scan(doc: dict, quad: QuadratureSpec, seed: int, ctx: RunContext,
                   default_corner=0.1, default_edge=0.1):
    spec, _ = load_spec(doc)
    N = spec.dim
    corner = float(doc.get("corner", default_corner))
    edge = float(doc.get("edge", default_edge))
    rect = load_rect(doc, N, Rect((corner,) * N, (corner + edge,) * N))
    check_quad_budget(quad, N, 2, ctx.max_cells)
    alpha = float(doc.get("alpha", 2.0))
    scan = increment_ratio_scan(spec, rect, alpha, int(doc.get("pairs", 50)), quad,
                                RngStream(seed, 0))
    return spec, rect, alpha, scan


def cmd_scan_increments(cfg: dict, ctx: RunContext) -> None:
    quad = load_quad(cfg.get("quad"))
    spec, rect, alpha, scan = _envelope_scan(cfg, quad, ctx.seed, ctx)
    ctx.seeds = {"seed": ctx.seed, "stream_ids": [0]}
    N = rect.dim
    header = ([f"u_{l + 1}" for l in range(N)] + [f"v_{l + 1}" for l in range(N)]
              + ["norm", "denominator", "ratio"])
    rows = [row["u"] + row["v"] + [row["norm"], row["denominator"], row["ratio"]]
            for row in scan.table]
    write_csv(ctx, "increments.csv", header, rows)
    write_json(ctx, "increments.json", {
        "min_ratio": scan.min_ratio, "max_ratio": scan.max_ratio, "envelope": scan.envelope,
        "pairs": len(scan.table), "alpha": alpha, "spec": spec, "rect": rect,
        "quad": quad})


def cmd_scaling_probe(cfg: dict, ctx: RunContext) -> None:
    spec, _ = load_spec(cfg)
    N = spec.dim
    kw = {k: cfg[k] for k in ("alpha", "d", "n", "replicates", "eval_density", "tolerance",
                              "truncation_L") if k in cfg}
    for k in ("deltas", "radii"):
        if k in cfg:
            kw[k] = tuple(cfg[k])
    for k, dim in (("a", N), ("t", N)):
        if k in cfg:
            kw[k] = tuple(as_point(cfg[k], dim, k))
    if "x" in cfg:
        kw["x"] = tuple(as_point(cfg["x"], int(cfg.get("d", 1)), "x"))
    probe = cfg.get("probe", "moment")
    pc = ProbeConfig(spec, seed=ctx.seed, threads=ctx.threads, max_cells=ctx.max_cells, **kw)
    rep = moment_scaling_probe(pc) if probe == "moment" else holder_scaling_probe(pc)
    ctx.seeds = {"seed": ctx.seed, "replicates": pc.replicates}
    write_csv(ctx, "scaling.csv", ["scale", "statistic"], zip(rep.scales, rep.statistics))
    write_json(ctx, "scaling.json", {
        "probe": probe, "fitted_slope": rep.fitted_slope, "slope_stderr": rep.slope_stderr,
        "theory_exponent": rep.theory_exponent, "consistent": rep.consistent,
        "scales": rep.scales, "statistics": rep.statistics, "meta": rep.meta,
        "spec": spec})


def calibrate_constants(cfg: dict, ctx: RunContext) -> dict:
    """Golden document of ``c_H`` values and increment-ratio envelopes."""
    quad = load_quad(cfg.get("quad"))
    constants = []
    for entry in cfg.get("constants", DEFAULT_CONSTANTS):
        c, rel = normalizing_constant(entry["h"], float(entry["alpha"]), quad, return_err=True)
        if not rel <= quad.target_rel_err:
            raise ArithmeticError(f"c_H for {entry} did not reach target accuracy ({rel:.2e})")
        constants.append({"alpha": float(entry["alpha"]), "h": [float(x) for x in entry["h"]],
                          "c_H": c, "rel_err": rel})
    envelopes = []
    for i, doc in enumerate(cfg.get("envelopes", DEFAULT_ENVELOPES)):
        seed = int(doc.get("seed", ctx.seed))
        spec, rect, alpha, scan = _envelope_scan(doc, quad, seed, ctx)
        envelopes.append({"spec": spec, "rect": rect, "alpha": alpha, "seed": seed,
                          "pairs": len(scan.table), "min_ratio": scan.min_ratio,
                          "max_ratio": scan.max_ratio, "envelope": scan.envelope})
    return {"provenance": {"quad": quad, "method": "factorized adaptive quadrature",
                           "lmss_version": __version__},
            "constants": constants, "envelopes": envelopes}


def cmd_calibrate_constants(cfg: dict, ctx: RunContext) -> None:
    ctx.seeds = {"seed": ctx.seed}
    write_json(ctx, "golden.json", calibrate_constants(cfg, ctx))


HANDLERS = {
    "simulate": cmd_simulate,
    "localtime": cmd_localtime,
    "check-existence": cmd_check_existence,
    "verify-lemmas": cmd_verify_lemmas,
    "scan-increments": cmd_scan_increments,
    "scaling-probe": cmd_scaling_probe,
    "calibrate-constants": cmd_calibrate_constants,
}


# -- driver ------------------------------------------------------------------------------


def _versions() -> dict:
    return {"lmss": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__,
            "jsonschema": metadata.version("jsonschema")}


def run(command: str, config: dict, threads: int = 1, max_cells: int = DEFAULT_MAX_CELLS,
        cache_dir: str | None = None) -> int:
    """Validate ``config`` and execute ``command``; returns the exit status."""
    start = time.perf_counter()
    try:
        config = validate(dict(config, command=command), command)
    except ConfigError as exc:
        print(f"lmss: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    ctx = RunContext(config.get("output_dir", "lmss-out"), int(config.get("seed", 0)),
                     max(1, int(threads)), int(max_cells), cache_dir)
    status, message = EXIT_OK, None
    try:
        # output_dir is left out so that relocated runs stay byte-identical
        write_json(ctx, "config.json", {k: v for k, v in config.items() if k != "output_dir"})
        with np.errstate(all="ignore"):
            HANDLERS[command](config, ctx)
    except ConfigError as exc:
        status, message = EXIT_CONFIG, str(exc)
    except BudgetExceeded as exc:
        status, message = EXIT_BUDGET, f"budget exceeded: {exc}"
    except (ArithmeticError, ValueError, ConditionC1Error, HurstBoundError) as exc:
        status, message = EXIT_NUMERIC, f"numeric failure: {exc}"
    if message:
        print(f"lmss: error: {message}", file=sys.stderr)
    if status == EXIT_CONFIG:
        return status
    manifest = {
        "command": command, "config": config, "config_hash": config_hash(config),
        "versions": _versions(), "seeds": ctx.seeds or {"seed": ctx.seed},
        "threads": ctx.threads, "max_cells": ctx.max_cells, "cache_dir": cache_dir,
        "exit_status": status, "error": message,
        "outputs": {name: _sha256(ctx.path(name)) for name in sorted(set(ctx.outputs))},
        "wall_time_s": time.perf_counter() - start,
    }
    write_json(ctx, "manifest.json", manifest)
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lmss", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"lmss {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--threads", type=int, default=1, help="worker threads")
    common.add_argument("--max-cells", type=int, default=DEFAULT_MAX_CELLS,
                        help="lattice and quadrature budget")
    common.add_argument("--output", metavar="DIR", help="override the output directory")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=f"run {name}")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = {}
    if args.config:
        try:
            with open(args.config) as fh:
                config = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"lmss: error: cannot read config: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        if not isinstance(config, dict):
            print("lmss: error: configuration must be a JSON object", file=sys.stderr)
            return EXIT_CONFIG
    if args.seed is not None:
        config["seed"] = args.seed
    if args.output:
        config["output_dir"] = args.output
    return run(args.command, config, args.threads, args.max_cells,
               os.environ.get(CACHE_ENV) or None)


if __name__ == "__main__":
    raise SystemExit(main())
