"""Batch experiment runners: convergence traces and parameter sweeps, persisted
as CSV rows with the fixed header

    experiment,scheme,seed,var,value,iteration,wasr,wall_ms

Converged summary rows carry iteration = -1; sweep rows averaged over seeds
carry seed = -1.  Production order and every column except wall_ms are
deterministic for a fixed (config, seed list).
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, replace

import numpy as np

from .baselines import SchemeKind, run_noma, run_sdma
from .bcd import BcdConfig, run
from .errors import ConfigurationError
from .scenario import SystemConfig, db_to_linear, draw_samples, generate_scenario

CSV_HEADER = ["experiment", "scheme", "seed", "var", "value", "iteration", "wasr", "wall_ms"]

_SAMPLES_SEED_OFFSET = 1_000_003  # decouples the CSI-error stream from the channel draw

PROFILES = {
    # Reference setup: 8 sub-arrays x 32 elements, 15 users, P_t = 10 dB, M = 500.
    "paper": dict(
        num_subarrays=8,
        num_users=15,
        elements_per_subarray=32,
        max_power=10.0,
        noise_variance=1.0,
        csi_error_mode="relative",
        csi_error_level=0.1,
        qos_threshold=0.1,
        num_samples=500,
        pathloss_ref_db=30.0,
        pathloss_exponent=3.0,
        distance_range=(1.0, 100.0),
    ),
    # Desk-scale profile for CI: minutes instead of hours.
    "desk": dict(
        num_subarrays=4,
        num_users=4,
        elements_per_subarray=8,
        max_power=10.0,
        noise_variance=1.0,
        csi_error_mode="relative",
        csi_error_level=0.1,
        qos_threshold=0.1,
        num_samples=50,
        pathloss_ref_db=10.0,
        pathloss_exponent=3.0,
        distance_range=(1.0, 5.0),
    ),
}

SWEEP_DEFAULTS = {
    "pt": [0.0, 5.0, 10.0, 15.0, 20.0],  # dB
    "users": [5, 10, 15, 20],
    "subarrays": [4, 8, 16],
}

_RUNNERS = {
    SchemeKind.RSMA: run,
    SchemeKind.SDMA: run_sdma,
    SchemeKind.NOMA: run_noma,
}

ALL_SCHEMES = (SchemeKind.RSMA, SchemeKind.SDMA, SchemeKind.NOMA)


def profile_config(name: str) -> SystemConfig:
    if name not in PROFILES:
        raise ConfigurationError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}")
    return SystemConfig.from_dict(PROFILES[name])


@dataclass
class ExperimentRecord:
    experiment: str
    scheme: str
    seed: int
    var: str
    value: float
    iteration: int  # -1 marks a converged summary row
    wasr: float
    wall_ms: float

    def as_row(self):
        return [
            self.experiment,
            self.scheme,
            self.seed,
            self.var,
            f"{self.value:g}",
            self.iteration,
            f"{self.wasr:.10g}",
            f"{self.wall_ms:.3f}",
        ]


def write_records(records, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for rec in records:
            writer.writerow(rec.as_row())


def read_records(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise ConfigurationError(f"unexpected CSV header in {path}: {reader.fieldnames}")
        return [
            ExperimentRecord(
                experiment=row["experiment"],
                scheme=row["scheme"],
                seed=int(row["seed"]),
                var=row["var"],
                value=float(row["value"]),
                iteration=int(row["iteration"]),
                wasr=float(row["wasr"]),
                wall_ms=float(row["wall_ms"]),
            )
            for row in reader
        ]


def _run_one(scheme: SchemeKind, config: SystemConfig, seed: int, bcd_config: BcdConfig):
    channels = generate_scenario(config, seed)
    samples = draw_samples(channels, config, seed + _SAMPLES_SEED_OFFSET)
    return _RUNNERS[scheme](config, samples, bcd_config, seed)


def run_convergence(
    config: SystemConfig,
    seeds,
    bcd_config: BcdConfig | None = None,
    schemes=ALL_SCHEMES,
) -> list[ExperimentRecord]:
    """Per-iteration WASR traces for each scheme on identical channel draws."""
    bcd_config = bcd_config or BcdConfig()
    records = []
    for seed in seeds:
        for scheme in schemes:
            start = time.perf_counter()
            try:
                _, trace = _run_one(scheme, config, seed, bcd_config)
            except Exception:
                records.append(
                    ExperimentRecord(
                        "convergence", scheme.value, seed, "none", 0.0, -1, float("nan"),
                        1e3 * (time.perf_counter() - start),
                    )
                )
                continue
            records.append(
                ExperimentRecord("convergence", scheme.value, seed, "none", 0.0, 0, trace.wasr[0], 0.0)
            )
            for i in range(1, len(trace.wasr)):
                records.append(
                    ExperimentRecord(
                        "convergence", scheme.value, seed, "none", 0.0, i,
                        trace.wasr[i], trace.wall_ms[i - 1],
                    )
                )
            records.append(
                ExperimentRecord(
                    "convergence", scheme.value, seed, "none", 0.0, -1,
                    max(trace.wasr), 1e3 * (time.perf_counter() - start),
                )
            )
    return records


def _sweep_config(config: SystemConfig, variable: str, value) -> SystemConfig:
    if variable == "pt":
        return replace(config, max_power=float(db_to_linear(value)))
    if variable == "users":
        k = int(value)
        return replace(
            config,
            num_users=k,
            weights=np.ones(k),
            user_distances=None,
            elements_per_subarray=max(config.elements_per_subarray, k + 1),
        )
    if variable == "subarrays":
        return replace(config, num_subarrays=int(value))
    raise ConfigurationError(f"sweep variable must be pt, users or subarrays, got {variable!r}")


def run_sweep(
    config: SystemConfig,
    variable: str,
    values,
    seeds,
    bcd_config: BcdConfig | None = None,
    schemes=ALL_SCHEMES,
) -> list[ExperimentRecord]:
    """Converged WASR per (scheme, value, seed) plus seed-averaged rows.

    `pt` values are in dB; `users` and `subarrays` are counts.  Values must be
    strictly increasing.
    """
    values = list(values)
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigurationError("sweep values must be strictly increasing")
    bcd_config = bcd_config or BcdConfig()
    experiment = f"sweep_{variable}"
    records = []
    for scheme in schemes:
        for value in values:
            cfg = _sweep_config(config, variable, value)
            converged = []
            for seed in seeds:
                start = time.perf_counter()
                try:
                    _, trace = _run_one(scheme, cfg, seed, bcd_config)
                    wasr = max(trace.wasr)
                except Exception:
                    wasr = float("nan")
                records.append(
                    ExperimentRecord(
                        experiment, scheme.value, seed, variable, float(value), -1, wasr,
                        1e3 * (time.perf_counter() - start),
                    )
                )
                if np.isfinite(wasr):
                    converged.append(wasr)
            mean = float(np.mean(converged)) if converged else float("nan")
            records.append(
                ExperimentRecord(experiment, scheme.value, -1, variable, float(value), -1, mean, 0.0)
            )
    return records
