"""Outer block-coordinate-descent loop: refresh the per-sample equalizers and
weights, average the subproblem coefficients, then solve the power,
transmissive and common-rate blocks in that order until the WASR stabilizes.

Each block warm-starts from the incumbent and never accepts a worse surrogate
objective, so the WASR trace is non-decreasing up to solver slack and the loop
terminates for any positive threshold (the surrogate objective is bounded
below).
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .core import Design, average_rates
from .scenario import SampleSet, SystemConfig
from .subsolvers import SubproblemData, solve_common_rate, solve_power, solve_transmissive
from .wmmse import average_coefficients

log = logging.getLogger(__name__)

TRACE_CSV_HEADER = [
    "iteration",
    "wasr",
    "objective",
    "power_residual",
    "transmissive_residual",
    "common_residual",
]


class InfeasibleRunError(RuntimeError):
    """Raised under the abort policy; carries the trace accumulated so far."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass
class BcdConfig:
    convergence_eps: float = 1e-4  # WASR units (bits/s/Hz)
    max_iterations: int = 100
    infeasible_qos_policy: str = "relax"  # "relax" | "abort"
    trace: bool = True
    solver_tol: float = 1e-6
    max_newton: int = 200


@dataclass
class BcdTrace:
    """Per-iteration record of one run.  wasr[0] is the initial design's WASR;
    wasr[i] for i >= 1 follows iteration i."""

    wasr: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    reports: list = field(default_factory=list)  # dicts of SolverReport per block
    wall_ms: list = field(default_factory=list)
    status: str = ""
    iterations: int = 0
    qos_relaxed: bool = False
    warnings: list = field(default_factory=list)

    def rows(self):
        yield dict(zip(TRACE_CSV_HEADER, [0, self.wasr[0], np.nan, np.nan, np.nan, np.nan]))
        for i, rep in enumerate(self.reports, start=1):
            yield dict(
                zip(
                    TRACE_CSV_HEADER,
                    [
                        i,
                        self.wasr[i],
                        self.objective[i - 1],
                        rep["power"].kkt_residual if rep.get("power") else np.nan,
                        rep["transmissive"].kkt_residual if rep.get("transmissive") else np.nan,
                        rep["common"].kkt_residual if rep.get("common") else np.nan,
                    ],
                )
            )

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=TRACE_CSV_HEADER)
            writer.writeheader()
            for row in self.rows():
                writer.writerow(row)


def initialize(
    config: SystemConfig, samples: SampleSet, seed: int, include_common: bool = True
) -> Design:
    """Initial design: uniform power over the active streams, unit-magnitude
    transmissive entries with uniform random phases, and the common-rate LP
    solved at the initial rates (zeros if its budget is infeasible)."""
    config.validate()
    k, n = config.num_users, config.num_subarrays
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(n, k + 1))
    f = np.exp(1j * phases)
    power = np.zeros(k + 1)
    if include_common:
        power[:] = config.max_power / (k + 1)
    else:
        power[1:] = config.max_power / k
        f[:, 0] = 0.0
    design = Design(power=power, transmissive=f, common_rates=np.zeros(k))
    if include_common:
        state = average_coefficients(samples, design, config.noise_variance)
        data = SubproblemData.from_state(state, config)
        xi = data.xi_bar_bits(design.power, design.transmissive)
        c, report = solve_common_rate(data, xi[0], xi[1])
        if report.status == "optimal":
            design = replace(design, common_rates=c)
    return design


def run(
    config: SystemConfig,
    samples: SampleSet,
    bcd_config: BcdConfig,
    seed: int,
    initial_design: Design | None = None,
) -> tuple[Design, BcdTrace]:
    """Full RSMA optimization run; returns the best design seen and the trace."""
    return _descend(config, samples, bcd_config, seed, initial_design, common_enabled=True)


def _descend(
    config: SystemConfig,
    samples: SampleSet,
    bcd_config: BcdConfig,
    seed: int,
    initial_design: Design | None,
    common_enabled: bool,
) -> tuple[Design, BcdTrace]:
    config.validate()
    design = (
        initial_design.copy()
        if initial_design is not None
        else initialize(config, samples, seed, include_common=common_enabled)
    )
    trace = BcdTrace()
    qos = config.qos_threshold
    wasr = average_rates(samples, design, config).wasr
    trace.wasr.append(wasr)
    best_design, best_wasr = design.copy(), wasr
    tol, newton = bcd_config.solver_tol, bcd_config.max_newton

    def handle_infeasible(report, block):
        nonlocal qos
        if bcd_config.infeasible_qos_policy == "relax":
            if not trace.qos_relaxed:
                msg = (
                    f"QoS threshold {qos} infeasible in {block} block "
                    f"(slack {report.phase1_slack:.3e}); relaxing to 0"
                )
                log.warning(msg)
                trace.warnings.append(msg)
                trace.qos_relaxed = True
            qos = 0.0
            return True
        trace.status = "aborted"
        raise InfeasibleRunError(
            f"{block} block infeasible (slack {report.phase1_slack:.3e}) under abort policy",
            trace,
        )

    for iteration in range(bcd_config.max_iterations):
        t0 = time.perf_counter()
        state = average_coefficients(samples, design, config.noise_variance)
        data = SubproblemData.from_state(
            state, config, qos_threshold=qos, common_enabled=common_enabled
        )
        reports = {}

        power, reports["power"] = solve_power(data, design, tol=tol, max_newton=newton)
        if reports["power"].status == "infeasible" and handle_infeasible(reports["power"], "power"):
            data = replace(data, qos_threshold=qos)
            power, reports["power"] = solve_power(data, design, tol=tol, max_newton=newton)
        design = replace(design, power=power)

        f, reports["transmissive"] = solve_transmissive(data, design, tol=tol, max_newton=newton)
        if reports["transmissive"].status == "infeasible" and handle_infeasible(
            reports["transmissive"], "transmissive"
        ):
            data = replace(data, qos_threshold=qos)
            f, reports["transmissive"] = solve_transmissive(data, design, tol=tol, max_newton=newton)
        design = replace(design, transmissive=f)

        if common_enabled:
            xi = data.xi_bar_bits(design.power, design.transmissive)
            c, reports["common"] = solve_common_rate(data, xi[0], xi[1])
            if reports["common"].status == "infeasible" and handle_infeasible(
                reports["common"], "common"
            ):
                data = replace(data, qos_threshold=qos)
                c, reports["common"] = solve_common_rate(data, xi[0], xi[1])
            if c is not None:
                design = replace(design, common_rates=c)
        else:
            reports["common"] = None

        new_wasr = average_rates(samples, design, config).wasr
        trace.wasr.append(new_wasr)
        trace.objective.append(data.p4_objective(design))
        trace.reports.append(reports)
        trace.wall_ms.append(1e3 * (time.perf_counter() - t0))
        trace.iterations = iteration + 1
        if new_wasr >= best_wasr:
            best_design, best_wasr = design.copy(), new_wasr
        if abs(new_wasr - wasr) < bcd_config.convergence_eps:
            trace.status = "converged"
            break
        wasr = new_wasr
    else:
        trace.status = "max-iterations"
    return best_design, trace
