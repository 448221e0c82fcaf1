"""SDMA and single-cluster SC-SIC NOMA comparison schemes.

SDMA is the common-private machinery with the common stream pinned off: zero
common power and column, zero common rates, and no common-decodability
constraint.

NOMA orders users by descending estimated channel norm.  The stream of the
rank-j user is decoded by every user of rank <= j (all at-least-as-strong
users), after cancelling the streams of all weaker users; the streams of
stronger users remain as noise.  Each stream's rate is therefore the minimum
over its decoders of the SAA average rate, mirroring the common-stream pattern,
and the optimization introduces one epigraph rate variable per stream that
rides along in every block.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .bcd import BcdConfig, BcdTrace, InfeasibleRunError, _descend
from .core import Design, rate
from .scenario import ChannelSet, SampleSet, SystemConfig
from .subsolvers import (
    Quadratic,
    SolverReport,
    _best_of,
    lift_hermitian,
    lift_row,
    solve_qcqp,
)
from .wmmse import LN2, stream_statistics


class SchemeKind(str, Enum):
    RSMA = "RSMA"
    SDMA = "SDMA"
    NOMA = "NOMA"


def run_sdma(
    config: SystemConfig,
    samples: SampleSet,
    bcd_config: BcdConfig,
    seed: int,
    initial_design: Design | None = None,
) -> tuple[Design, BcdTrace]:
    """SDMA baseline: private streams only, interference fully treated as noise."""
    return _descend(config, samples, bcd_config, seed, initial_design, common_enabled=False)


def decoding_order(channels: ChannelSet) -> np.ndarray:
    """User indices sorted by descending estimated channel norm (ties by index)."""
    norms = np.linalg.norm(channels.estimated, axis=1)
    return np.lexsort((np.arange(norms.shape[0]), -norms))


@dataclass
class NomaCoeffs:
    """Averaged WMMSE coefficients per (stream user k, decoder user i) pair.

    v_bar and xi_bar use the solver's natural-log convention, so 1 - xi_bar is
    the surrogate rate in nats and the epigraph rates (bits/s/Hz) enter the
    constraints scaled by ln 2.
    """

    pairs: list  # [(k, i), ...]
    t_bar: np.ndarray  # (P,)
    psi_bar: np.ndarray  # (P, N, N)
    theta_bar: np.ndarray  # (P, N)
    v_bar: np.ndarray  # (P,)
    xi_bar: np.ndarray  # (P,)
    order: np.ndarray  # (K,) users by descending strength
    rank: np.ndarray  # (K,) rank of each user (0 = strongest)

    def active_cols(self, k):
        """Transmissive columns contributing power when decoding user k's stream:
        the stream itself plus all not-yet-cancelled (stronger) streams."""
        return self.order[: self.rank[k] + 1] + 1


def noma_coefficients(samples: SampleSet, design: Design, noise_var: float) -> NomaCoeffs:
    """Per-pair averaged coefficients for the current design."""
    order = decoding_order(samples.channels)
    k_users = order.shape[0]
    rank = np.empty(k_users, dtype=int)
    rank[order] = np.arange(k_users)
    pairs, t_b, psi_b, th_b, v_b, xi_b = [], [], [], [], [], []
    for k in range(k_users):
        noise_cols = order[: rank[k]] + 1  # stronger users' streams stay as noise
        for i in order[: rank[k] + 1]:
            stats = stream_statistics(
                samples.samples[i], design.power, design.transmissive, k + 1, noise_cols, noise_var
            )
            pairs.append((k, int(i)))
            t_b.append(stats.t_bar)
            psi_b.append(stats.psi_bar)
            th_b.append(stats.theta_bar)
            v_b.append(stats.v_bar_nat)
            xi_b.append(stats.xi_bar_nat)
    return NomaCoeffs(
        pairs=pairs,
        t_bar=np.array(t_b),
        psi_bar=np.stack(psi_b),
        theta_bar=np.stack(th_b),
        v_bar=np.array(v_b),
        xi_bar=np.array(xi_b),
        order=order,
        rank=rank,
    )


def noma_average_rates(samples: SampleSet, design: Design, config: SystemConfig):
    """Per-stream SC-SIC rates (min over decoders of the SAA average) and WASR."""
    order = decoding_order(samples.channels)
    k_users = order.shape[0]
    rank = np.empty(k_users, dtype=int)
    rank[order] = np.arange(k_users)
    h = samples.samples
    e = np.conj(h) @ design.transmissive  # (K, M, K+1)
    rx = design.power[None, None, :] * np.abs(e) ** 2
    stream_rates = np.zeros(k_users)
    for k in range(k_users):
        noise_cols = order[: rank[k]] + 1
        decoders = order[: rank[k] + 1]
        own = rx[decoders, :, k + 1]  # (D, M)
        interf = rx[decoders][:, :, noise_cols].sum(axis=2) if noise_cols.size else 0.0
        avg = rate(own / (interf + config.noise_variance)).mean(axis=1)
        stream_rates[k] = avg.min()
    wasr = float(config.weights @ stream_rates)
    return stream_rates, wasr


def _xi_const(coeffs: NomaCoeffs, noise_var: float) -> np.ndarray:
    return coeffs.t_bar * noise_var + coeffs.v_bar


def noma_xi_bar(coeffs: NomaCoeffs, design: Design, noise_var: float) -> np.ndarray:
    """Assembled per-pair sample-average WMSE at fixed equalizers/weights."""
    f, p = design.transmissive, design.power
    out = np.empty(len(coeffs.pairs))
    const = _xi_const(coeffs, noise_var)
    for idx, (k, _) in enumerate(coeffs.pairs):
        cols = coeffs.active_cols(k)
        quads = np.einsum("nj,nq,qj->j", np.conj(f[:, cols]), coeffs.psi_bar[idx], f[:, cols]).real
        mu = np.sqrt(p[k + 1]) * (coeffs.theta_bar[idx] @ f[:, k + 1]).real
        out[idx] = p[cols] @ quads - 2.0 * mu + const[idx]
    return out


def _noma_rho_bounds(coeffs, design, noise_var):
    """Upper bound per stream in bits/s/Hz: min over decoders of (1 - xi)/ln2."""
    xi = noma_xi_bar(coeffs, design, noise_var)
    k_users = coeffs.order.shape[0]
    upper = np.full(k_users, np.inf)
    for idx, (k, _) in enumerate(coeffs.pairs):
        upper[k] = min(upper[k], (1.0 - xi[idx]) / LN2)
    return upper


def _solve_noma_rho(coeffs, design, config, qos):
    """Closed-form epigraph update; infeasible when a bound falls below the QoS."""
    upper = _noma_rho_bounds(coeffs, design, config.noise_variance)
    floor = max(qos, 0.0)
    slack = float(floor - upper.min())
    if slack > 1e-9:
        return None, SolverReport(
            objective=np.nan,
            x=upper,
            kkt_residual=np.inf,
            iterations=0,
            status="infeasible",
            phase1_slack=slack,
        )
    rho = np.maximum(upper, floor)
    return rho, SolverReport(
        objective=float(-(config.weights @ rho)),
        x=rho,
        kkt_residual=0.0,
        iterations=0,
        status="optimal",
    )


def _solve_noma_power(coeffs, design, rho, config, qos, tol, max_newton):
    """Joint (q, rho) block with F fixed: maximize the weighted epigraph rates."""
    k_users = coeffs.order.shape[0]
    n = 2 * k_users  # [q_1..q_K, rho_1..rho_K]
    f = design.transmissive
    u = config.weights
    const = _xi_const(coeffs, config.noise_variance)
    objective = Quadratic(n, g=np.concatenate([np.zeros(k_users), -u]))
    constraints = []
    for idx, (k, _) in enumerate(coeffs.pairs):
        cols = coeffs.active_cols(k)
        quads = np.einsum("nj,nq,qj->j", np.conj(f[:, cols]), coeffs.psi_bar[idx], f[:, cols]).real
        diag = np.zeros(n)
        diag[cols - 1] = quads
        g = np.zeros(n)
        g[k] = -2.0 * (coeffs.theta_bar[idx] @ f[:, k + 1]).real
        g[k_users + k] = LN2
        constraints.append(
            Quadratic(n, blocks=[(np.arange(k_users), 2.0 * np.diag(diag[:k_users]))], g=g, d=const[idx] - 1.0)
        )
    ball = Quadratic(
        n, blocks=[(np.arange(k_users), 2.0 * np.eye(k_users))], d=-config.max_power
    )
    constraints.append(ball)
    floor = max(qos, 0.0)
    for k in range(k_users):
        g = np.zeros(n)
        g[k] = -1.0
        constraints.append(Quadratic(n, g=g))  # q_k >= 0
        g2 = np.zeros(n)
        g2[k_users + k] = -1.0
        constraints.append(Quadratic(n, g=g2, d=floor))  # rho_k >= floor
    x0 = np.concatenate([np.sqrt(np.maximum(design.power[1:], 0.0)), rho])
    x, report = solve_qcqp(objective, constraints, x0, tol=tol, max_newton=max_newton)
    if report.status == "infeasible":
        return design.power.copy(), rho, report
    x = _best_of(objective, constraints, x, x0)
    report.objective = objective.value(x)
    power = design.power.copy()
    power[1:] = x[:k_users] ** 2
    return power, x[k_users:], report


def _solve_noma_transmissive(coeffs, design, rho, config, qos, tol, max_newton):
    """Joint (F, rho) block with p fixed."""
    k_users = coeffs.order.shape[0]
    nn = design.transmissive.shape[0]
    n = 2 * nn * k_users + k_users
    p = design.power
    const = _xi_const(coeffs, config.noise_variance)

    def slot(col):  # transmissive column col (1-based stream column)
        base = 2 * nn * (col - 1)
        return np.arange(base, base + 2 * nn)

    rho_base = 2 * nn * k_users
    objective = Quadratic(n, g=np.concatenate([np.zeros(rho_base), -config.weights]))
    constraints = []
    for idx, (k, _) in enumerate(coeffs.pairs):
        lifted = lift_hermitian(coeffs.psi_bar[idx])
        blocks = [(slot(col), 2.0 * p[col] * lifted) for col in coeffs.active_cols(k)]
        g = np.zeros(n)
        g[slot(k + 1)] = -2.0 * np.sqrt(p[k + 1]) * lift_row(coeffs.theta_bar[idx])
        g[rho_base + k] = LN2
        constraints.append(Quadratic(n, blocks=blocks, g=g, d=const[idx] - 1.0))
    eye2 = 2.0 * np.eye(2)
    for col in range(1, k_users + 1):
        base = 2 * nn * (col - 1)
        for row in range(nn):
            idx2 = np.array([base + row, base + nn + row])
            constraints.append(Quadratic(n, blocks=[(idx2, eye2)], d=-1.0))
    floor = max(qos, 0.0)
    for k in range(k_users):
        g = np.zeros(n)
        g[rho_base + k] = -1.0
        constraints.append(Quadratic(n, g=g, d=floor))
    parts = []
    for col in range(1, k_users + 1):
        parts.append(design.transmissive[:, col].real)
        parts.append(design.transmissive[:, col].imag)
    x0 = np.concatenate(parts + [rho])
    x, report = solve_qcqp(objective, constraints, x0, tol=tol, max_newton=max_newton)
    if report.status == "infeasible":
        return design.transmissive.copy(), rho, report
    x = _best_of(objective, constraints, x, x0)
    report.objective = objective.value(x)
    f = design.transmissive.copy()
    for col in range(1, k_users + 1):
        base = 2 * nn * (col - 1)
        f[:, col] = x[base : base + nn] + 1j * x[base + nn : base + 2 * nn]
    return f, x[rho_base:], report


def initialize_noma(config: SystemConfig, samples: SampleSet, seed: int) -> Design:
    """Initial powers proportional to estimated channel strength, random unit
    phases, no common column."""
    config.validate()
    k, n = config.num_users, config.num_subarrays
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(n, k + 1))
    f = np.exp(1j * phases)
    f[:, 0] = 0.0
    strength = np.linalg.norm(samples.channels.estimated, axis=1) ** 2
    power = np.zeros(k + 1)
    power[1:] = config.max_power * strength / strength.sum()
    return Design(power=power, transmissive=f, common_rates=np.zeros(k))


def run_noma(
    config: SystemConfig,
    samples: SampleSet,
    bcd_config: BcdConfig,
    seed: int,
    initial_design: Design | None = None,
) -> tuple[Design, BcdTrace]:
    """Single-cluster SC-SIC NOMA optimized with the same SAA/WMMSE/BCD loop."""
    config.validate()
    design = initial_design.copy() if initial_design is not None else initialize_noma(config, samples, seed)
    trace = BcdTrace()
    qos = config.qos_threshold
    _, wasr = noma_average_rates(samples, design, config)
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
                trace.warnings.append(msg)
                trace.qos_relaxed = True
            qos = 0.0
            return True
        trace.status = "aborted"
        raise InfeasibleRunError(
            f"{block} block infeasible (slack {report.phase1_slack:.3e}) under abort policy",
            trace,
        )

    coeffs0 = noma_coefficients(samples, design, config.noise_variance)
    rho, rho_report = _solve_noma_rho(coeffs0, design, config, qos)
    if rho is None and handle_infeasible(rho_report, "rate"):
        rho, _ = _solve_noma_rho(coeffs0, design, config, qos)

    for iteration in range(bcd_config.max_iterations):
        t0 = time.perf_counter()
        coeffs = noma_coefficients(samples, design, config.noise_variance)
        reports = {}
        power, rho, reports["power"] = _solve_noma_power(
            coeffs, design, rho, config, qos, tol, newton
        )
        if reports["power"].status == "infeasible" and handle_infeasible(reports["power"], "power"):
            power, rho, reports["power"] = _solve_noma_power(
                coeffs, design, rho, config, qos, tol, newton
            )
        design = replace(design, power=power)

        f, rho, reports["transmissive"] = _solve_noma_transmissive(
            coeffs, design, rho, config, qos, tol, newton
        )
        if reports["transmissive"].status == "infeasible" and handle_infeasible(
            reports["transmissive"], "transmissive"
        ):
            f, rho, reports["transmissive"] = _solve_noma_transmissive(
                coeffs, design, rho, config, qos, tol, newton
            )
        design = replace(design, transmissive=f)

        new_rho, reports["common"] = _solve_noma_rho(coeffs, design, config, qos)
        if new_rho is None and handle_infeasible(reports["common"], "rate"):
            new_rho, reports["common"] = _solve_noma_rho(coeffs, design, config, qos)
        if new_rho is not None:
            rho = new_rho

        _, new_wasr = noma_average_rates(samples, design, config)
        trace.wasr.append(new_wasr)
        trace.objective.append(float(-(config.weights @ rho)))
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
