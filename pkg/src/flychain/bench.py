"""Benchmark harness: RMSE and timing studies over the estimator zoo.

Two accuracy protocols: a known-parameters run (one truth simulation, one
sensor realization, every estimator on the identical stream) and a bounded
Monte-Carlo study (per trial, the truth uses perturbed parameters while the
estimators keep the nominal ones, modeling fabrication uncertainty).
Monte-Carlo RMSE is pooled over all trials' timesteps; the report records
that convention.

Determinism contract: a (config, seed) pair produces byte-identical reports
for any worker count.  Each trial draws everything from its own
counter-based substream and the aggregation is a fixed-order sum, so the
execution schedule cannot leak into the results.  Wall-clock timing is
therefore kept out of the accuracy reports entirely; `time_estimators`
produces the separate timing table.
"""

from __future__ import annotations

import gc
import json
import multiprocessing
import os
import time
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .estimators import _make_runner, estimate_run
from .filters import FilterError
from .simulation import (
    SimulationError,
    perturb_parameters,
    sample_sensor_stream,
    simulate_truth,
    trial_rng,
)

POOLING_NOTE = "RMSE pooled over all trials' timesteps"

# passes per estimator in the timing harness; interleaved so slow drifts in
# machine load spread evenly across kinds
TIMING_PASSES = 3
WARMUP_STEPS = 10


@dataclass
class MetricsReport:
    """Per-estimator RMSE table plus provenance, optionally with timing."""

    kinds: tuple
    rows: tuple          # metric names, Table-III row order
    units: tuple         # unit string per row
    rmse: dict           # kind -> np.ndarray aligned with rows
    step_time_us: dict | None
    trials: int
    seed: int
    config_digest: str
    pooling: str = POOLING_NOTE


def metric_rows(n):
    """Report rows: angles, angle rates, then reference point and its rate."""
    rows = [(f"alpha_{i}", "rad") for i in range(n)]
    rows += [(f"alpha_{i}_dot", "rad/s") for i in range(n)]
    rows += [("d", "m"), ("h", "m"), ("d_dot", "m/s"), ("h_dot", "m/s")]
    return rows


def _row_index(n):
    """Indices into the natural (q, qdot) error layout, in report-row order."""
    idx = list(range(n))                                # angles
    idx += [n + 2 + i for i in range(n)]                # angle rates
    idx += [n, n + 1, 2 * n + 2, 2 * n + 3]             # d, h, d_dot, h_dot
    return np.array(idx)


def squared_error_sums(estimates, records):
    """Componentwise sums of squared estimate errors against aligned truth."""
    if len(estimates) != len(records):
        raise ValueError("estimate and truth sequences are misaligned")
    for est, rec in zip(estimates, records):
        if abs(est.t - rec.t) > 1e-12:
            raise ValueError(
                f"estimate at t={est.t} does not match truth at t={rec.t}")
    eq = np.array([e.q for e in estimates])
    eqd = np.array([e.qdot for e in estimates])
    tq = np.array([r.state.q for r in records])
    tqd = np.array([r.state.qdot for r in records])
    err = np.concatenate([eq - tq, eqd - tqd], axis=1)
    return (err ** 2).sum(axis=0), err.shape[0]


def compute_rmse(estimates, records):
    """Per-component RMSE in report-row order."""
    sums, count = squared_error_sums(estimates, records)
    n = (sums.size - 4) // 2
    return np.sqrt(sums / count)[_row_index(n)]


def make_streams(params_truth, config: RunConfig, rng):
    """Truth records, sensor samples and the estimator torque stream.

    The torque stream holds u[k], the applied torque sampled at the same
    instants as the measurements.
    """
    records = simulate_truth(params_truth, config.trajectory, config.world)
    samples = sample_sensor_stream(params_truth, records,
                                   config.world.noise, rng)
    torques = [rec.control.torques for rec in records[1:]]
    return records, samples, torques


def _run_all_kinds(config: RunConfig, records, samples, torques):
    out = {}
    for kind in config.kinds:
        out[kind] = estimate_run(kind, samples[1:], torques, records[0],
                                 config.params, config.estimator)
    return out


def _report(config, rmse_by_kind, trials, step_time_us=None):
    rows = metric_rows(config.params.n)
    return MetricsReport(
        kinds=config.kinds,
        rows=tuple(name for name, _ in rows),
        units=tuple(unit for _, unit in rows),
        rmse=rmse_by_kind,
        step_time_us=step_time_us,
        trials=trials,
        seed=config.master_seed,
        config_digest=config.digest,
    )


def run_known_params(config: RunConfig):
    """Single truth simulation and sensor realization, all estimators."""
    rng = trial_rng(config.master_seed, 0)
    records, samples, torques = make_streams(config.params, config, rng)
    idx = _row_index(config.params.n)
    rmse = {}
    for kind, (estimates, _) in _run_all_kinds(config, records, samples,
                                               torques).items():
        sums, count = squared_error_sums(estimates, records[1:])
        rmse[kind] = np.sqrt(sums / count)[idx]
    return _report(config, rmse, trials=1)


def _mc_trial(args):
    """One Monte-Carlo trial: perturbed truth, nominal estimators."""
    config, trial = args
    rng = trial_rng(config.master_seed, trial)
    try:
        params_true = perturb_parameters(config.params, config.uncertainty, rng)
        records, samples, torques = make_streams(params_true, config, rng)
        sums = {}
        count = 0
        for kind, (estimates, _) in _run_all_kinds(config, records, samples,
                                                   torques).items():
            sums[kind], count = squared_error_sums(estimates, records[1:])
        return trial, sums, count
    except (SimulationError, FilterError, ValueError, RuntimeError) as exc:
        raise RuntimeError(
            f"Monte-Carlo trial {trial} (master seed {config.master_seed}) "
            f"failed: {exc}"
        ) from exc


def run_monte_carlo(config: RunConfig):
    """Pooled-RMSE robustness study over bounded parameter perturbations.

    Trials are independent work items; any failure aborts the whole run
    (partial reports are never emitted).  Results are identical for any
    worker count.
    """
    jobs = [(config, trial) for trial in range(config.trials)]
    if config.workers > 1:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(processes=config.workers) as pool:
            results = pool.map(_mc_trial, jobs)
    else:
        results = [_mc_trial(job) for job in jobs]
    results.sort(key=lambda item: item[0])

    total = {kind: None for kind in config.kinds}
    count = 0
    for _, sums, n_steps in results:
        count += n_steps
        for kind in config.kinds:
            if total[kind] is None:
                total[kind] = sums[kind].copy()
            else:
                total[kind] += sums[kind]
    idx = _row_index(config.params.n)
    rmse = {kind: np.sqrt(total[kind] / count)[idx] for kind in config.kinds}
    return _report(config, rmse, trials=config.trials)


def time_estimators(config: RunConfig, passes=TIMING_PASSES):
    """Mean per-step wall time per estimator, microseconds.

    Single-threaded, GC off while the clock runs.  All estimators advance
    through the stream in lockstep, so machine-speed drift during the
    session hits every kind equally and the pairwise comparisons stay
    paired; the first WARMUP_STEPS steps of every pass are discarded from
    the reported means.
    """
    rng = trial_rng(config.master_seed, 0)
    records, samples, torques = make_streams(config.params, config, rng)
    n_steps = len(torques)
    durations = {kind: np.empty((passes, n_steps)) for kind in config.kinds}
    was_enabled = gc.isenabled()
    gc.disable()
    try:
        for p in range(passes):
            runners = {kind: _make_runner(kind, config.params,
                                          config.estimator, records[0])
                       for kind in config.kinds}
            for k in range(n_steps):
                sample, tau = samples[1 + k], torques[k]
                for kind in config.kinds:
                    t0 = time.perf_counter()
                    runners[kind].step(sample, tau)
                    durations[kind][p, k] = time.perf_counter() - t0
    finally:
        if was_enabled:
            gc.enable()
    return {
        kind: float(durations[kind][:, WARMUP_STEPS:].mean() * 1e6)
        for kind in config.kinds
    }


def _sig6(value):
    return float(f"{value:.6g}")


def emit_report(report: MetricsReport, fmt, path):
    """Write a report as CSV or JSON with 6-significant-digit numbers.

    CSV: header "metric,unit,<kind>..." with one row per RMSE component,
    plus a step_time_us row when the report carries timing.  JSON: one
    object with metrics, timing, config_digest and seed keys.
    """
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    if fmt == "csv":
        lines = ["metric,unit," + ",".join(report.kinds)]
        for i, (name, unit) in enumerate(zip(report.rows, report.units)):
            vals = ",".join(f"{_sig6(report.rmse[k][i]):.6g}"
                            for k in report.kinds)
            lines.append(f"{name},{unit},{vals}")
        if report.step_time_us is not None:
            vals = ",".join(f"{_sig6(report.step_time_us[k]):.6g}"
                            for k in report.kinds)
            lines.append(f"step_time_us,us,{vals}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    elif fmt == "json":
        payload = {
            "metrics": {
                kind: {
                    name: _sig6(report.rmse[kind][i])
                    for i, name in enumerate(report.rows)
                }
                for kind in report.kinds
            },
            "units": dict(zip(report.rows, report.units)),
            "timing": (None if report.step_time_us is None else
                       {k: _sig6(v) for k, v in report.step_time_us.items()}),
            "config_digest": report.config_digest,
            "seed": report.seed,
            "trials": report.trials,
            "pooling": report.pooling,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    return path
