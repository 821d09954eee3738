"""JSON configuration schema and the built-in default scenario.

A config file is one JSON object with sections "chain", "uncertainty",
"trajectory", "world", "estimator" and "run".  Everything has a default, so
the CLI works without any file; a supplied file must carry all sections
(partial overrides are easy to get wrong silently, so they are rejected).

The default scenario is a two-link chain with the published Mon-chi-style
parameter table, launched into a backward tumble with a tucking joint
sinusoid, 1 kHz sensing over one second of flight.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .chain import ChainParameters, FullState
from .estimators import KINDS, EstimatorConfig
from .filters import SigmaScaling
from .simulation import (
    NoiseSpec,
    ParameterUncertainty,
    TrajectorySpec,
    WorldConfig,
)


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


def default_config():
    """The built-in two-link benchmark scenario as a plain dict."""
    amp, period, phase = 0.8, 0.5, 0.75 * math.pi
    return {
        "chain": {
            "masses": [1.5790, 1.4370],
            "inertias": [0.0375, 0.0237],
            "com_offset_x": [0.1443, 0.1268],
            "com_offset_y": [-0.0055, 0.0001],
            "link_lengths": [0.35],
            "joint_damping": [0.20],
            "imu_offset": [0.15, 0.05],
            "gravity": 9.81,
        },
        "uncertainty": {
            "masses": [0.0076, 0.0400],
            "inertias": [0.0013, 0.0009],
            "com_offset_x": [0.0051, 0.0034],
            "com_offset_y": [0.0005, 0.0002],
            "joint_damping": [0.04],
        },
        "trajectory": {
            "initial_posture": [0.0, 0.0],
            "initial_position": [0.0, 0.0],
            # joint rate matches the reference sinusoid at t=0
            "initial_posture_rates": [
                -2.0 * math.pi,
                amp * (2.0 * math.pi / period) * math.cos(phase),
            ],
            "initial_velocity": [0.5, 3.0],
            "joint_amplitude": [amp],
            "joint_period": [period],
            "joint_phase": [phase],
        },
        "world": {
            "truth_step": 1e-4,
            "estimator_step": 1e-3,
            "duration": 1.0,
            "noise": {
                "gyro": 5e-3,
                "accel": 5e-2,
                "encoder_pos": 1e-3,
                "encoder_vel": 1e-2,
            },
        },
        "estimator": {
            "init_cov": 1e-9,
            "q_position": 1e-8,
            "q_rate": 1e-6,
            "q_accel": 1e-2,
            "angular_jerk_sigma": 2000.0,
            "com_jerk_sigma": 5.0,
            "ukf": {"alpha": 1e-3, "beta": 2.0, "kappa": 0.0},
        },
        "run": {
            "kinds": list(KINDS),
            "trials": 100,
            "seed": 20260809,
            "workers": 1,
            "out_dir": "out",
            "format": "csv",
        },
    }


@dataclass
class RunConfig:
    """Fully-validated configuration for one benchmark invocation."""

    params: ChainParameters
    uncertainty: ParameterUncertainty
    trajectory: TrajectorySpec
    world: WorldConfig
    estimator: EstimatorConfig
    kinds: tuple
    trials: int
    workers: int
    out_dir: str
    format: str
    master_seed: int
    digest: str


def config_digest(raw):
    """Hash of the canonical JSON form; changes with any field."""
    canon = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _section(raw, name):
    try:
        return raw[name]
    except (KeyError, TypeError):
        raise ConfigError(f"config is missing the {name!r} section") from None


def config_from_dict(raw, seed=None, workers=None, out_dir=None, fmt=None):
    """Build a RunConfig from a raw dict, applying CLI overrides.

    Raises ConfigError for anything malformed; the underlying dataclass
    validations supply the details.
    """
    try:
        chain_d = dict(_section(raw, "chain"))
        unc_d = dict(_section(raw, "uncertainty"))
        traj_d = dict(_section(raw, "trajectory"))
        world_d = dict(_section(raw, "world"))
        est_d = dict(_section(raw, "estimator"))
        run_d = dict(_section(raw, "run"))

        params = ChainParameters(
            masses=chain_d["masses"],
            inertias=chain_d["inertias"],
            com_offset_x=chain_d["com_offset_x"],
            com_offset_y=chain_d["com_offset_y"],
            link_lengths=chain_d["link_lengths"],
            joint_damping=chain_d["joint_damping"],
            imu_offset=chain_d["imu_offset"],
            gravity=chain_d.get("gravity", 9.81),
        )
        uncertainty = ParameterUncertainty(
            masses=unc_d.get("masses"),
            inertias=unc_d.get("inertias"),
            com_offset_x=unc_d.get("com_offset_x"),
            com_offset_y=unc_d.get("com_offset_y"),
            joint_damping=unc_d.get("joint_damping"),
        )
        initial = FullState(
            q=np.concatenate([traj_d["initial_posture"],
                              traj_d["initial_position"]]),
            qdot=np.concatenate([traj_d["initial_posture_rates"],
                                 traj_d["initial_velocity"]]),
        )
        trajectory = TrajectorySpec(
            initial=initial,
            joint_amplitude=traj_d["joint_amplitude"],
            joint_period=traj_d["joint_period"],
            joint_phase=traj_d["joint_phase"],
        )
        noise_d = dict(world_d.get("noise", {}))
        noise = NoiseSpec(
            sigma_gyro=noise_d.get("gyro", 5e-3),
            sigma_accel=noise_d.get("accel", 5e-2),
            sigma_encoder_pos=noise_d.get("encoder_pos", 1e-3),
            sigma_encoder_vel=noise_d.get("encoder_vel", 1e-2),
        )
        master_seed = int(seed if seed is not None else run_d.get("seed", 0))
        if master_seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        world = WorldConfig(
            truth_step=world_d["truth_step"],
            estimator_step=world_d["estimator_step"],
            duration=world_d["duration"],
            seed=master_seed,
            noise=noise,
        )
        ukf_d = dict(est_d.get("ukf", {}))
        estimator = EstimatorConfig(
            dt=world.estimator_step,
            noise=noise,
            init_cov=est_d.get("init_cov", 1e-9),
            q_position=est_d.get("q_position", 1e-8),
            q_rate=est_d.get("q_rate", 1e-6),
            q_accel=est_d.get("q_accel", 1e-2),
            angular_jerk_sigma=est_d.get("angular_jerk_sigma", 2000.0),
            com_jerk_sigma=est_d.get("com_jerk_sigma", 5.0),
            ukf=SigmaScaling(
                alpha=ukf_d.get("alpha", 1e-3),
                beta=ukf_d.get("beta", 2.0),
                kappa=ukf_d.get("kappa", 0.0),
            ),
        )
        kinds = tuple(run_d.get("kinds", KINDS))
        if not kinds:
            raise ConfigError("run.kinds must not be empty")
        for kind in kinds:
            if kind not in KINDS:
                raise ConfigError(
                    f"unknown estimator kind {kind!r}; expected one of {KINDS}")
        trials = int(run_d.get("trials", 100))
        if trials < 1:
            raise ConfigError("run.trials must be at least 1")
        n_workers = int(workers if workers is not None
                        else run_d.get("workers", 1))
        if n_workers < 1:
            raise ConfigError("run.workers must be at least 1")
        out = str(out_dir if out_dir is not None
                  else run_d.get("out_dir", "out"))
        out_fmt = str(fmt if fmt is not None else run_d.get("format", "csv"))
        if out_fmt not in ("csv", "json"):
            raise ConfigError("format must be 'csv' or 'json'")
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc

    digest_raw = json.loads(json.dumps(raw))  # deep copy, JSON-clean
    digest_raw.setdefault("run", {})["seed"] = master_seed
    return RunConfig(
        params=params,
        uncertainty=uncertainty,
        trajectory=trajectory,
        world=world,
        estimator=estimator,
        kinds=kinds,
        trials=trials,
        workers=n_workers,
        out_dir=out,
        format=out_fmt,
        master_seed=master_seed,
        digest=config_digest(digest_raw),
    )


def load_config(path=None, **overrides):
    """Load a config file (or the built-in default) into a RunConfig."""
    if path is None:
        raw = default_config()
    else:
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return config_from_dict(raw, **overrides)
