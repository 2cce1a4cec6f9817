"""Config-driven experiment runner.

Usage::

    ergolab <subcommand> [--config path.json] [--seed u64] [--threads n]
                         [--out-dir path] [--label name] [--set key=value ...]

The config is a single JSON object validated against
``schemas/config.schema.json``; ``--set`` overrides dotted keys with
JSON-parsed values (``--set kernel.eps=0.5``). Artifacts land in
``out_dir/<experiment>/<label>/`` as ``record.json`` plus CSV curves.

Exit status: 0 success, 2 invalid config, 3 numeric failure, 4 a property
check did not pass.
"""

import argparse
import copy
import csv
import json
import math
import os
import sys
import time
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import diagnostics as dg
from .errors import CheckFailed, NumericFailure, UsageError
from .kernels import (CounterexampleProposal, GwmKernel, RwmProposal, make_kernel,
                      run_chain)
from .numerics import rng_stream
from .operator import (build_grid_operator, estimate_polynomial_rate, geometric_schedule,
                       spectral_gap)
from .targets import SquaredGaussianTarget, make_target

EXPERIMENTS = ("simulate", "tv-rate", "drift-check", "coupling", "acceptance",
               "displacement", "counterexample-audit", "lemma-a2")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CHECK = 0, 2, 3, 4


def load_schema(name):
    """Parsed JSON schema shipped with the package (``config``, ``record``, ``rate``)."""
    text = resources.files("ergolab").joinpath("schemas").joinpath(f"{name}.schema.json").read_text()
    return json.loads(text)


# ---------------------------------------------------------------------------
# config handling

def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(config, overrides):
    """Return a copy of ``config`` with ``key.sub=value`` overrides applied."""
    out = copy.deepcopy(config)
    for item in overrides or ():
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        parts = key.strip().split(".")
        node = out
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise UsageError(f"--set {key}: {part} is not an object")
        node[parts[-1]] = _parse_value(value)
    return out


def _error_path(err):
    path = [str(p) for p in err.absolute_path]
    if err.validator == "required":
        missing = err.message.split("'")[1] if "'" in err.message else ""
        path.append(missing)
    elif err.validator == "additionalProperties":
        extra = err.message.split("'")[1] if "'" in err.message else ""
        path.append(extra)
    return ".".join(p for p in path if p) or "<root>"


def validate_config(config):
    """Validate against the shipped schema; raises :class:`UsageError` naming the field."""
    validator = jsonschema.Draft202012Validator(load_schema("config"))
    errors = sorted(validator.iter_errors(config), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise UsageError(f"invalid config at {_error_path(err)}: {err.message}")
    lo_hi = config.get("window")
    if lo_hi is not None and not lo_hi[0] < lo_hi[1]:
        raise UsageError("invalid config at window: need window[0] < window[1]")


def _require(config, *keys):
    for key in keys:
        if key not in config:
            raise UsageError(f"invalid config at {key}: required for {config['experiment']}")


def _target(config, default=None):
    spec = config.get("target", default)
    if spec is None:
        raise UsageError("invalid config at target: required")
    spec = dict(spec)
    return make_target(spec.pop("name"), **spec)


def _kernel(config, default=None):
    spec = config.get("kernel", default)
    if spec is None:
        raise UsageError("invalid config at kernel: required")
    if spec["name"] in ("rwm", "gwm") and "eps" not in spec:
        raise UsageError("invalid config at kernel.eps: required for rwm and gwm")
    return make_kernel(spec["name"], spec.get("eps"), spec.get("lazy", 0.0))


def _lyapunov(config, default):
    return dg.LyapunovSpec(**config.get("lyapunov", default))


def _schedule(config):
    sched = config.get("n_schedule", {"lo": 10, "hi": 10_000, "per_decade": 10})
    if isinstance(sched, dict):
        if not sched["lo"] < sched["hi"]:
            raise UsageError("invalid config at n_schedule: need lo < hi")
        return geometric_schedule(sched["lo"], sched["hi"], sched.get("per_decade", 10))
    return np.asarray(sched, dtype=int)


def _p0(config, kernel):
    if not isinstance(kernel, GwmKernel):
        return None
    if "p0" in config:
        return config["p0"]
    return -1 if config.get("x0", 0.0) > 0 else 1


# ---------------------------------------------------------------------------
# output helpers

class Recorder:
    """Collects scalar results, curves and check outcomes for one run."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.results = {}
        self.files = []
        self.budget = {}
        self.checks = {}

    def scalar(self, name, value, error=None, kind="exact"):
        if isinstance(value, (np.floating, np.integer)):
            value = value.item()
        if isinstance(value, float) and not math.isfinite(value):
            value = None
        if error is not None:
            error = float(error)
            if not math.isfinite(error):
                error = None
        self.results[name] = {"value": value, "error": error, "error_kind": kind}

    def check(self, name, ok):
        self.checks[name] = bool(ok)

    def csv(self, name, header, rows):
        path = self.directory / name
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                                 for v in row])
        self.files.append(name)
        return path

    def json(self, name, payload, schema=None):
        if schema is not None:
            jsonschema.validate(payload, load_schema(schema))
        path = self.directory / name
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        self.files.append(name)
        return path


# ---------------------------------------------------------------------------
# experiments

def exp_simulate(config, rec, threads):
    _require(config, "x0", "n")
    target, kernel = _target(config), _kernel(config)
    traj = run_chain(kernel, target, config["x0"], config["n"],
                     rng_stream(config["seed"]), p0=_p0(config, kernel))
    traj.write_csv(rec.directory / "trajectory.csv")
    rec.files.append("trajectory.csv")
    x = traj.states[1:] if traj.n_steps else traj.states
    rec.scalar("acceptance_rate", traj.acceptance_rate() if traj.n_steps else None,
               1.0 / math.sqrt(max(traj.n_steps, 1)), "mc_stderr")
    rec.scalar("final_x", float(traj.states[-1]))
    rec.scalar("mean_x", float(np.mean(x)), float(np.std(x) / math.sqrt(len(x))), "mc_stderr")


def exp_tv_rate(config, rec, threads):
    _require(config, "L", "N", "x0", "window")
    target, kernel = _target(config), _kernel(config)
    tol = config.get("tol", 1e-10)
    op = build_grid_operator(kernel, target, config["L"], config["N"],
                             leak_tol=config.get("leak_tol", 1.0), tol=tol)
    fit, curve = estimate_polynomial_rate(op, config["x0"], _schedule(config),
                                          tuple(config["window"]), p0=_p0(config, kernel),
                                          return_curve=True, strict=config.get("strict", True))
    rec.csv("tv_curve.csv", ["n", "tv", "leaked_bound"], curve.rows())
    rec.json("rate.json", {**fit.as_dict(), "unresolved_n": curve.unresolved_n}, schema="rate")
    trunc = curve.tail_mass + float(curve.leaked_bound[-1])
    rec.scalar("slope", fit.slope, math.sqrt(max(1.0 - fit.r_squared, 0.0)), "fit_residual")
    rec.scalar("r_squared", fit.r_squared)
    rec.scalar("tail_mass", curve.tail_mass)
    rec.scalar("max_leak", float(op.leaked.max()), tol, "quadrature_tol")
    rec.scalar("final_tv", float(curve.tv[-1]), trunc, "truncation")
    rec.budget.update(tail_mass=curve.tail_mass, leaked_bound=float(curve.leaked_bound[-1]),
                      quadrature_tol=tol)
    if curve.unresolved_n is not None:
        rec.scalar("unresolved_n", curve.unresolved_n)
    if "slope_range" in config:
        lo, hi = config["slope_range"]
        rec.check("slope_in_range", lo <= fit.slope <= hi)


def exp_drift_check(config, rec, threads):
    target, kernel = _target(config), _kernel(config)
    tol = config.get("tol", 1e-10)
    lyap = config.get("lyapunov", {})
    rec.budget["quadrature_tol"] = tol
    if lyap.get("kind") == "guided_poly":
        if not isinstance(kernel, GwmKernel):
            raise UsageError("invalid config at kernel.name: guided_poly drift needs gwm")
        _require(config, "x_lo", "x_hi")
        if "delta" not in lyap or "beta" not in lyap:
            raise UsageError("invalid config at lyapunov: guided_poly needs delta and beta")
        report = dg.gwm_polynomial_drift_check(target, kernel.eps, lyap["delta"], lyap["beta"],
                                               config["x_lo"], config["x_hi"],
                                               grid=config.get("grid", 46), lazy=kernel.lazy,
                                               tol=tol)
        rec.csv("drift.csv", ["x", "p", "ratio", "margin"], report.rows())
        rec.scalar("alpha_star", report.alpha_star)
        rec.scalar("c", report.c, tol, "quadrature_tol")
        rec.scalar("max_margin", float(report.margin.max()), tol, "quadrature_tol")
        rec.scalar("smallest_negative_x", report.smallest_negative_x)
        rec.check("margin_negative", report.check_passed)
        return
    _require(config, "xs", "lyapunov")
    V = _lyapunov(config, None)
    momenta = (1, -1) if isinstance(kernel, GwmKernel) else (None,)
    rows, worst = [], -math.inf
    for x in config["xs"]:
        for p in momenta:
            log_ratio = dg.drift_ratio(kernel, target, V, x, p, tol=tol, log=True)
            ratio = math.exp(log_ratio) if log_ratio < 709 else math.inf
            worst = max(worst, ratio)
            rows.append((float(x), 0 if p is None else p, ratio, ratio - 1.0))
    rec.csv("drift.csv", ["x", "p", "ratio", "margin"], rows)
    rec.scalar("max_ratio", worst, tol, "quadrature_tol")
    if "threshold" in config:
        rec.check("ratio_below_threshold", worst < config["threshold"])


def exp_coupling(config, rec, threads):
    _require(config, "xs", "n", "trials")
    target, kernel = _target(config), _kernel(config)
    rows, ests = [], []
    for i, x0 in enumerate(config["xs"]):
        est = dg.coupled_rwm_lazy_gwm(target, x0, config["n"], kernel.eps, config["trials"],
                                      rng_stream(config["seed"], i), threads=threads)
        ests.append(est)
        rows.append(est.row())
        rec.scalar(f"p_decouple[{x0:g}]", est.p_decouple, est.stderr, "mc_stderr")
    rec.csv("coupling.csv", ["x0", "n", "p_decouple", "stderr"], rows)
    ok = all(b.p_decouple <= a.p_decouple + 2.0 * math.hypot(a.stderr, b.stderr)
             for a, b in zip(ests, ests[1:]))
    rec.check("non_increasing", ok)
    if "max_final" in config:
        rec.check("final_below_max", ests[-1].p_decouple <= config["max_final"])


def exp_acceptance(config, rec, threads):
    _require(config, "xs")
    target, kernel = _target(config), _kernel(config)
    tol = config.get("tol", 1e-10)
    side = config.get("side", "both")
    rows = []
    for x in config["xs"]:
        if side == "both":
            comps = dg.acceptance_components(kernel, target, x, _p0(config, kernel), tol)
            total = sum(comps.values())
        else:
            if not isinstance(kernel, RwmProposal):
                raise UsageError("invalid config at side: one-sided acceptance needs rwm")
            total = dg.one_sided_acceptance(target, kernel.eps, x, side, tol)
        rows.append((float(x), total))
        rec.scalar(f"acceptance[{x:g}]", total, tol, "quadrature_tol")
    rec.csv("acceptance.csv", ["x", "acceptance"], rows)
    rec.budget["quadrature_tol"] = tol
    if "threshold" in config:
        rec.check("final_below_threshold", rows[-1][1] < config["threshold"])
    if "min_acceptance" in config:
        rec.check("final_above_min", rows[-1][1] >= config["min_acceptance"])


def exp_displacement(config, rec, threads):
    _require(config, "x0", "T", "replicates", "window")
    target, kernel = _target(config), _kernel(config)
    report = dg.displacement_exponent(kernel, target, config["x0"], config["T"],
                                      config["replicates"], tuple(config["window"]),
                                      rng_stream(config["seed"]), p0=_p0(config, kernel),
                                      threads=threads)
    rec.csv("displacement.csv", ["t", "mean_abs_disp", "stderr"], report.rows())
    fit = report.fit
    rec.scalar("slope", fit.slope, math.sqrt(max(1.0 - fit.r_squared, 0.0)), "fit_residual")
    rec.scalar("r_squared", fit.r_squared)
    rec.budget["max_stderr"] = float(report.stderr.max())
    if "slope_range" in config:
        lo, hi = config["slope_range"]
        rec.check("slope_in_range", lo <= fit.slope <= hi)


def exp_counterexample_audit(config, rec, threads):
    target = _target(config, {"name": "squared_gaussian"})
    if not isinstance(target, SquaredGaussianTarget):
        raise UsageError("invalid config at target.name: the audit uses squared_gaussian")
    kernel = CounterexampleProposal()
    tol = config.get("tol", 1e-10)
    V = _lyapunov(config, {"kind": "exp_quadratic", "c": 0.25})
    xs = config.get("xs", [3.0, 6.0, 10.0])
    rows = []
    for x in xs:
        comps = dg.acceptance_components(kernel, target, x, tol=tol)
        rows.append((float(x), comps["normal"], comps["jump"], sum(comps.values())))
        rec.scalar(f"acceptance[{x:g}]", rows[-1][3], tol, "quadrature_tol")
    rec.csv("acceptance.csv", ["x", "normal", "jump", "acceptance"], rows)
    totals = [r[3] for r in rows]
    rec.check("acceptance_increasing", all(b > a for a, b in zip(totals, totals[1:])))
    rec.check("acceptance_final_above_min", totals[-1] >= config.get("min_acceptance", 0.9))

    drift_x = config.get("drift_x", 6.0)
    ratio = dg.drift_ratio(kernel, target, V, drift_x, tol=tol)
    rec.scalar("drift_ratio", ratio, tol, "quadrature_tol")
    rec.check("drift_ratio_below_threshold", ratio < config.get("threshold", 0.1))

    jump_x = config.get("jump_x", 3.0)
    log_jump = dg.log_drift_components(kernel, target, V, jump_x, tol=tol)["jump"]
    rec.scalar("log_jump_QV", log_jump, tol, "quadrature_tol")
    rec.check("log_jump_above_min", log_jump > config.get("min_log_jump", 1e6))

    op = build_grid_operator(kernel, target, config.get("L", 6.0), config.get("N", 1201),
                             leak_tol=config.get("leak_tol", 1.0), tol=tol)
    gap = spectral_gap(op)
    rec.scalar("spectral_gap", gap, float(op.leaked.max()), "leaked_mass")
    rec.check("gap_above_min", gap > config.get("min_gap", 0.01))
    rec.budget.update(quadrature_tol=tol, max_leak=float(op.leaked.max()),
                      tail_mass=op.tail_mass)


def exp_lemma_a2(config, rec, threads):
    _require(config, "k", "n", "trials")
    tspec = config.get("target", {"name": "poly_tail"})
    if tspec["name"] != "poly_tail":
        raise UsageError("invalid config at target.name: lemma-a2 uses poly_tail")
    kernel = _kernel(config, {"name": "gwm", "eps": 1.0})
    audit = dg.lemma_a2_audit(tspec.get("r", 2.0), tspec.get("K", 1.0), config["k"],
                              config["n"], kernel.eps, config["trials"],
                              rng_stream(config["seed"]), threads=threads)
    rec.scalar("reach_estimate", audit.reach_estimate, audit.reach_stderr, "mc_stderr")
    rec.scalar("reach_bound", audit.reach_bound)
    rec.scalar("pi_An", audit.pi_An)
    rec.scalar("tv_lower_bound", audit.tv_lower_bound, audit.reach_stderr, "mc_stderr")
    rec.scalar("tv_lower_bound_analytic", audit.tv_lower_bound_analytic)
    rec.check("tv_lower_bound_positive", audit.tv_lower_bound > 0)


DISPATCH = {
    "simulate": exp_simulate,
    "tv-rate": exp_tv_rate,
    "drift-check": exp_drift_check,
    "coupling": exp_coupling,
    "acceptance": exp_acceptance,
    "displacement": exp_displacement,
    "counterexample-audit": exp_counterexample_audit,
    "lemma-a2": exp_lemma_a2,
}


# ---------------------------------------------------------------------------
# runner

def run(experiment, config_path=None, overrides=(), seed=None, threads=None, out_dir=None,
        label=None):
    """Validate, dispatch and write artifacts. Returns ``(exit_code, run_dir)``.

    Raises :class:`UsageError`, :class:`NumericFailure` or
    :class:`CheckFailed`; :func:`main` maps those onto exit codes.
    """
    config = {}
    if config_path is not None:
        try:
            config = json.loads(Path(config_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {config_path}: {exc}") from None
        if not isinstance(config, dict):
            raise UsageError("invalid config at <root>: expected a JSON object")
    config = apply_overrides(config, overrides)
    if config.setdefault("experiment", experiment) != experiment:
        raise UsageError(f"invalid config at experiment: {config['experiment']!r} "
                         f"does not match subcommand {experiment!r}")
    if seed is not None:
        config["seed"] = seed
    config.setdefault("seed", 0)
    if label is not None:
        config["label"] = label
    if out_dir is not None:
        config["out_dir"] = str(out_dir)
    validate_config(config)
    threads = threads or config.get("threads") or os.cpu_count() or 1

    run_label = config.get("label") or datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S%f")
    run_dir = Path(config.get("out_dir", "results")) / experiment / run_label
    run_dir.mkdir(parents=True, exist_ok=True)
    rec = Recorder(run_dir)
    t0 = time.perf_counter()
    DISPATCH[experiment](config, rec, threads)
    passed = all(rec.checks.values())
    record = {
        "experiment": experiment,
        "label": run_label,
        "status": "ok" if passed else "check_failed",
        "config": config,
        "results": rec.results,
        "files": sorted(rec.files),
        "wall_clock_s": time.perf_counter() - t0,
        "error_budget": rec.budget,
        "checks": rec.checks,
    }
    rec.json("record.json", record, schema="record")
    if not passed:
        failed = sorted(k for k, v in rec.checks.items() if not v)
        raise CheckFailed(f"checks failed: {', '.join(failed)}", report=record)
    return EXIT_OK, run_dir


def build_parser():
    parser = argparse.ArgumentParser(prog="ergolab", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="base seed (unsigned 64-bit)")
        p.add_argument("--threads", type=int, help="worker threads (default: all cores)")
        p.add_argument("--out-dir", help="output root (default: ./results)")
        p.add_argument("--label", help="run directory name (default: UTC timestamp)")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override a config key (dotted path)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        _, run_dir = run(args.experiment, args.config, args.overrides, args.seed,
                         args.threads, args.out_dir, args.label)
    except UsageError as exc:
        print(f"ergolab: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericFailure as exc:
        print(f"ergolab: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except CheckFailed as exc:
        print(f"ergolab: {exc}", file=sys.stderr)
        return EXIT_CHECK
    print(run_dir)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
