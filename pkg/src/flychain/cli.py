"""Command-line front end.

Subcommands:
  simulate            emit a truth + sensor stream CSV
  estimate --kind K   run one estimator over a recorded stream CSV
  bench known         known-parameters RMSE report
  bench mc            Monte-Carlo robustness report (--trials N)
  bench timing        per-step timing report

Exit codes: 0 success, 1 configuration error, 2 runtime/numerical error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from . import bench
from .chain import DynamicsError, FullState, chain_com, chain_com_derivatives
from .config import ConfigError, load_config
from .estimators import KINDS, estimate_run
from .filters import FilterError
from .simulation import (
    ControlInput,
    SensorSample,
    SimulationError,
    TruthRecord,
    sample_sensor_stream,
    simulate_truth,
    trial_rng,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _add_common(parser):
    parser.add_argument("--config", metavar="PATH", default=None,
                        help="JSON config file (built-in default if omitted)")
    parser.add_argument("--seed", type=int, default=None,
                        help="master seed override")
    parser.add_argument("--out", default=None, metavar="DIR",
                        help="output directory")
    parser.add_argument("--workers", type=int, default=None,
                        help="worker processes for Monte-Carlo trials")
    parser.add_argument("--format", choices=("csv", "json"), default=None,
                        help="report format")


def build_parser():
    parser = _Parser(prog="flychain",
                     description="State-estimation workbench for planar "
                                 "free-flying chains")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="emit truth + sensor stream CSV")
    _add_common(p_sim)

    p_est = sub.add_parser("estimate", help="run one estimator on a stream")
    _add_common(p_est)
    p_est.add_argument("--kind", required=True, choices=KINDS)
    p_est.add_argument("--stream", required=True, metavar="CSV",
                       help="stream CSV produced by `simulate`")

    p_bench = sub.add_parser("bench", help="benchmark reports")
    bench_sub = p_bench.add_subparsers(dest="bench_command", required=True)
    for name, helptext in (("known", "known-parameters RMSE"),
                           ("mc", "Monte-Carlo robustness RMSE"),
                           ("timing", "per-step timing table")):
        p = bench_sub.add_parser(name, help=helptext)
        _add_common(p)
        if name == "mc":
            p.add_argument("--trials", type=int, default=None)
    return parser


def _stream_header(n):
    cols = ["t"]
    cols += [f"alpha_{i}" for i in range(n)] + ["d", "h"]
    cols += [f"alpha_{i}_dot" for i in range(n)] + ["d_dot", "h_dot"]
    cols += [f"alpha_{i}_ddot" for i in range(n)] + ["d_ddot", "h_ddot"]
    cols += [f"tau_{i}" for i in range(1, n)]
    cols += ["z_g", "z_ax", "z_ay"]
    for i in range(1, n):
        cols += [f"z_e{i}_pos", f"z_e{i}_vel"]
    return cols


def write_stream_csv(path, records, samples):
    """Truth and sensor streams, one row per estimator tick."""
    n = records[0].state.q.size - 2
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_stream_header(n))
        for rec, sample in zip(records, samples):
            row = [rec.t]
            row += list(rec.state.q) + list(rec.state.qdot) + list(rec.qddot)
            row += list(rec.control.torques)
            row += [sample.gyro, sample.accel[0], sample.accel[1]]
            row += list(sample.encoders.ravel())
            writer.writerow([f"{v:.17g}" for v in row])
    return path


def read_stream_csv(path, params):
    """Rebuild records and samples from a stream CSV.

    Derived CoM fields are recomputed from the stated parameters; they match
    the original run exactly when the same chain produced the stream.
    """
    n = params.n
    records, samples = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != _stream_header(n):
            raise ConfigError(
                f"stream file {path} does not match the configured chain "
                f"(expected {len(_stream_header(n))} columns)")
        for cells in reader:
            vals = np.array([float(c) for c in cells])
            t = vals[0]
            q = vals[1: n + 3]
            qdot = vals[n + 3: 2 * n + 5]
            qddot = vals[2 * n + 5: 3 * n + 7]
            tau = vals[3 * n + 7: 4 * n + 6]
            z = vals[4 * n + 6:]
            com_vel, com_acc = chain_com_derivatives(params, q[:n], qdot[:n],
                                                     qddot[:n])
            records.append(TruthRecord(
                t=t,
                state=FullState(q, qdot),
                qddot=qddot,
                control=ControlInput(tau),
                com_pos=q[n: n + 2] + chain_com(params, q[:n]),
                com_vel=qdot[n: n + 2] + com_vel,
                com_acc=qddot[n: n + 2] + com_acc,
            ))
            samples.append(SensorSample(
                t=t, gyro=z[0], accel=z[1:3].copy(),
                encoders=z[3:].reshape(n - 1, 2).copy()))
    return records, samples


def write_estimates_csv(path, kind, estimates, durations):
    n = estimates[0].q.size - 2
    cols = ["t", "kind"]
    cols += [f"alpha_{i}" for i in range(n)]
    cols += [f"alpha_{i}_dot" for i in range(n)]
    cols += ["d", "h", "d_dot", "h_dot", "step_duration_us"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for est, dur in zip(estimates, durations):
            row = [f"{est.t:.17g}", kind]
            row += [f"{v:.17g}" for v in est.q[:n]]
            row += [f"{v:.17g}" for v in est.qdot[:n]]
            row += [f"{v:.17g}" for v in (est.q[n], est.q[n + 1],
                                          est.qdot[n], est.qdot[n + 1])]
            row.append(f"{dur * 1e6:.17g}")
            writer.writerow(row)
    return path


def _cmd_simulate(args):
    cfg = load_config(args.config, seed=args.seed, out_dir=args.out)
    rng = trial_rng(cfg.master_seed, 0)
    records = simulate_truth(cfg.params, cfg.trajectory, cfg.world)
    samples = sample_sensor_stream(cfg.params, records, cfg.world.noise, rng)
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = write_stream_csv(os.path.join(cfg.out_dir, "stream.csv"),
                            records, samples)
    print(f"wrote {path} ({len(records)} records)")
    return 0


def _cmd_estimate(args):
    cfg = load_config(args.config, seed=args.seed, out_dir=args.out)
    records, samples = read_stream_csv(args.stream, cfg.params)
    torques = [rec.control.torques for rec in records[1:]]
    estimates, durations = estimate_run(args.kind, samples[1:], torques,
                                        records[0], cfg.params, cfg.estimator)
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = write_estimates_csv(
        os.path.join(cfg.out_dir, f"estimates_{args.kind}.csv"),
        args.kind, estimates, durations)
    print(f"wrote {path} ({len(estimates)} estimates)")
    return 0


def _cmd_bench(args):
    cfg = load_config(args.config, seed=args.seed, workers=args.workers,
                      out_dir=args.out, fmt=args.format)
    if args.bench_command == "known":
        report = bench.run_known_params(cfg)
        name = "report_known"
    elif args.bench_command == "mc":
        if args.trials is not None:
            if args.trials < 1:
                raise ConfigError("--trials must be at least 1")
            cfg.trials = args.trials
        report = bench.run_monte_carlo(cfg)
        name = "report_mc"
    else:
        timing = bench.time_estimators(cfg)
        report = bench.MetricsReport(
            kinds=cfg.kinds, rows=(), units=(),
            rmse={k: np.empty(0) for k in cfg.kinds},
            step_time_us=timing, trials=1, seed=cfg.master_seed,
            config_digest=cfg.digest)
        name = "report_timing"
    path = bench.emit_report(
        report, cfg.format,
        os.path.join(cfg.out_dir, f"{name}.{cfg.format}"))
    print(f"wrote {path}")
    return 0


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "estimate":
            return _cmd_estimate(args)
        return _cmd_bench(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (DynamicsError, FilterError, SimulationError, RuntimeError,
            ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
