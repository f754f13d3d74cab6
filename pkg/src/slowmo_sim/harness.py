"""Run orchestration, metric export, and offline trace checks."""

from __future__ import annotations

import copy
import csv
import itertools
import json
import math
import os

from .config import ExperimentConfig, build_simulation, parse_config, resolved_dict
from .errors import ConfigError, NumericalAbort
from .simkernel import SUMMARY_FIELDS, MetricsTrace
from .theory_checker import (
    BoundInputs,
    check_bound,
    gamma_eff,
    local_sgd_bias_surrogate,
    measured_bias_term,
)

FORMATS = ("jsonl", "csv", "both")


def emit_metrics(trace: MetricsTrace, out_dir: str, fmt: str = "both") -> dict:
    """Write trace.jsonl and/or summary.csv with stable field ordering."""
    if fmt not in FORMATS:
        raise ConfigError(f"unknown output format {fmt!r}")
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    if fmt in ("jsonl", "both"):
        path = os.path.join(out_dir, "trace.jsonl")
        body = trace.to_jsonl()
        with open(path, "w") as fh:
            fh.write(body + ("\n" if body else ""))
        paths["jsonl"] = path
    if fmt in ("csv", "both"):
        path = os.path.join(out_dir, "summary.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(SUMMARY_FIELDS))
            writer.writeheader()
            if trace.summary:
                writer.writerow({k: trace.summary.get(k) for k in SUMMARY_FIELDS})
        paths["csv"] = path
    return paths


def equivalence_check(
    trace_a: MetricsTrace, trace_b: MetricsTrace, tol: float = 1e-10
) -> dict:
    """Compare the average-iterate sequences of two traces coordinatewise."""
    ra, rb = trace_a.records, trace_b.records
    if len(ra) != len(rb):
        return {
            "passed": False,
            "max_abs_diff": math.inf,
            "steps_compared": 0,
            "tol": tol,
            "reason": f"trace lengths differ: {len(ra)} vs {len(rb)}",
        }
    worst = 0.0
    for rec_a, rec_b in zip(ra, rb):
        xa, xb = rec_a["x_bar"], rec_b["x_bar"]
        if len(xa) != len(xb):
            return {
                "passed": False,
                "max_abs_diff": math.inf,
                "steps_compared": 0,
                "tol": tol,
                "reason": "iterate dimensions differ",
            }
        gap = max(abs(a - b) for a, b in zip(xa, xb))
        worst = max(worst, gap)
    return {
        "passed": worst <= tol,
        "max_abs_diff": worst,
        "steps_compared": len(ra),
        "tol": tol,
        "reason": None if worst <= tol else f"max |x_bar gap| {worst:.3e} > tol",
    }


def run_experiment(
    cfg: ExperimentConfig,
    out_dir: str,
    fmt: str = "both",
    seed: int | None = None,
) -> MetricsTrace:
    """Build, run, and persist one experiment under ``out_dir``.

    Writes resolved.json first so even aborted runs are reproducible; on a
    numerical abort the partial trace is flushed before the exception
    propagates.
    """
    if seed is not None:
        from .config import replace_seed

        cfg = replace_seed(cfg, seed)
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "resolved.json"), "w") as fh:
        json.dump(resolved_dict(cfg), fh, indent=2)
        fh.write("\n")
    sim = build_simulation(cfg)
    try:
        trace = sim.run()
    except NumericalAbort as abort:
        if abort.trace is not None:
            emit_metrics(abort.trace, out_dir, fmt)
        raise
    emit_metrics(trace, out_dir, fmt)
    return trace


def _set_path(tree: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = tree
    for part in parts[:-1]:
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"grid path {dotted!r} does not exist in the config")
        node = node[part]
    if not isinstance(node, dict) or parts[-1] not in node:
        raise ConfigError(f"grid path {dotted!r} does not exist in the config")
    node[parts[-1]] = value


def expand_grid(cfg: ExperimentConfig) -> list[tuple[dict, ExperimentConfig]]:
    """Cartesian product of the config's grid; returns (overrides, config) pairs."""
    if not cfg.grid:
        return [({}, cfg)]
    base = resolved_dict(cfg)
    base["grid"] = {}
    keys = sorted(cfg.grid)
    for key in keys:
        values = cfg.grid[key]
        if not isinstance(values, list) or not values:
            raise ConfigError(f"grid entry {key!r} must be a nonempty list")
    expanded = []
    for combo in itertools.product(*(cfg.grid[k] for k in keys)):
        tree = copy.deepcopy(base)
        overrides = dict(zip(keys, combo))
        for key, value in overrides.items():
            _set_path(tree, key, value)
        expanded.append((overrides, parse_config(tree)))
    return expanded


def _sweep_one(args) -> dict:
    resolved, out_dir, fmt = args
    cfg = parse_config(resolved)
    try:
        trace = run_experiment(cfg, out_dir, fmt)
        return {"out_dir": out_dir, "status": "ok", "final_loss": trace.summary["final_loss"]}
    except NumericalAbort as abort:
        return {"out_dir": out_dir, "status": "aborted", "detail": str(abort)}


def run_sweep(cfg: ExperimentConfig, out_dir: str, fmt: str = "both", jobs: int = 1) -> list[dict]:
    """Expand the grid and run every point; independent runs may go in parallel."""
    combos = expand_grid(cfg)
    os.makedirs(out_dir, exist_ok=True)
    tasks = []
    index = []
    for idx, (overrides, sub_cfg) in enumerate(combos):
        sub_dir = os.path.join(out_dir, f"run_{idx:03d}")
        sub_resolved = resolved_dict(sub_cfg)
        tasks.append((sub_resolved, sub_dir, fmt))
        index.append({"run": idx, "dir": sub_dir, "overrides": overrides})
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_one, tasks))
    else:
        results = [_sweep_one(task) for task in tasks]
    for entry, result in zip(index, results):
        entry.update({k: v for k, v in result.items() if k != "out_dir"})
    with open(os.path.join(out_dir, "sweep_index.json"), "w") as fh:
        json.dump(index, fh, indent=2)
        fh.write("\n")
    return index


_CONSTANT_FIELDS = {
    "delta": None, "m": None, "tau": None, "T": None, "L": None, "V": None,
    "alpha": 1.0, "beta": 0.0, "gamma": None, "bias": {},
}


def assemble_bound_inputs(constants: dict, traces) -> tuple[BoundInputs, list[str]]:
    """Build BoundInputs from a constants dict plus traces (for measured bias).

    bias modes: {"mode": "measured"} averages the logged per-step gaps;
    {"mode": "surrogate", "sigma2": s, "zeta2": z} uses the plain-SGD
    local-step surrogate; {"mode": "value", "value": v} passes v through.
    Returns extra condition-not-met reasons (e.g. surrogate validity).
    """
    vals = dict(_CONSTANT_FIELDS)
    for key in constants:
        if key not in vals:
            raise ConfigError(f"unknown constants field {key!r}")
    vals.update(constants)
    for key, v in vals.items():
        if v is None:
            raise ConfigError(f"constants file is missing {key!r}")

    bias_spec = vals["bias"]
    mode = bias_spec.get("mode", "value") if isinstance(bias_spec, dict) else "value"
    reasons = []
    if mode == "measured":
        bias_term = measured_bias_term(traces)
    elif mode == "surrogate":
        try:
            bias_term = local_sgd_bias_surrogate(
                gamma=vals["gamma"], L=vals["L"],
                sigma2=bias_spec["sigma2"], zeta2=bias_spec["zeta2"],
                tau=vals["tau"],
            )
        except ConfigError as exc:
            reasons.append(str(exc))
            bias_term = 0.0
    elif mode == "value":
        if not isinstance(bias_spec, dict) or "value" not in bias_spec:
            raise ConfigError('bias mode "value" needs a "value" entry')
        bias_term = float(bias_spec["value"])
    else:
        raise ConfigError(f"unknown bias mode {mode!r}")

    inputs = BoundInputs(
        delta=float(vals["delta"]), m=int(vals["m"]), tau=int(vals["tau"]),
        T=int(vals["T"]), L=float(vals["L"]), V=float(vals["V"]),
        alpha=float(vals["alpha"]), beta=float(vals["beta"]),
        bias_term=bias_term,
        gamma_eff=gamma_eff(float(vals["alpha"]), float(vals["gamma"]), float(vals["beta"])),
    )
    return inputs, reasons


def bound_report(constants: dict, traces) -> dict:
    inputs, extra_reasons = assemble_bound_inputs(constants, traces)
    report = check_bound(traces, inputs)
    if extra_reasons:
        report["reasons"] = extra_reasons + report["reasons"]
        report["condition_met"] = False
        report["holds"] = None
    return report
