import numpy as np
import pytest

from risrsma.bcd import BcdConfig, BcdTrace, InfeasibleRunError, initialize, run
from risrsma.core import average_rates, check_feasibility
from risrsma.scenario import draw_samples, generate_scenario

from conftest import make_config


def desk_problem(seed, **overrides):
    base = dict(
        num_users=4, num_subarrays=4, elements_per_subarray=8, max_power=10.0,
        num_samples=30, pathloss_ref_db=10.0, distance_range=(1.0, 3.0),
        qos_threshold=0.0,
    )
    base.update(overrides)
    config = make_config(**base)
    channels = generate_scenario(config, seed)
    samples = draw_samples(channels, config, seed + 1000)
    return config, samples


def test_initialize_uniform_power_and_unit_entries():
    config = make_config(
        num_users=15, num_subarrays=8, elements_per_subarray=32, max_power=10.0,
        num_samples=2, distance_range=(1.0, 100.0), pathloss_ref_db=30.0,
    )
    channels = generate_scenario(config, 0)
    samples = draw_samples(channels, config, 1)
    design = initialize(config, samples, seed=5)
    assert np.all(design.power == 10.0 / 16.0)  # uniform split over K+1 streams
    assert np.allclose(np.abs(design.transmissive), 1.0, atol=1e-12)
    assert np.all(design.common_rates >= 0.0)


def test_initialize_deterministic():
    config, samples = desk_problem(2)
    a = initialize(config, samples, seed=9)
    b = initialize(config, samples, seed=9)
    assert np.array_equal(a.power, b.power)
    assert np.array_equal(a.transmissive, b.transmissive)
    assert np.array_equal(a.common_rates, b.common_rates)
    c = initialize(config, samples, seed=10)
    assert not np.array_equal(a.transmissive, c.transmissive)


def test_initialize_without_common():
    config, samples = desk_problem(3)
    design = initialize(config, samples, seed=1, include_common=False)
    assert design.power[0] == 0.0
    assert np.all(design.power[1:] == config.max_power / config.num_users)
    assert np.all(design.transmissive[:, 0] == 0.0)
    assert np.all(design.common_rates == 0.0)


def test_run_monotone_stopping_and_feasibility():
    config, samples = desk_problem(4)
    bcd_config = BcdConfig()
    design, trace = run(config, samples, bcd_config, seed=4)
    wasr = np.array(trace.wasr)
    assert trace.status == "converged"
    assert trace.iterations <= bcd_config.max_iterations
    assert np.all(np.diff(wasr) >= -1e-6)
    assert abs(wasr[-1] - wasr[-2]) < bcd_config.convergence_eps
    report = average_rates(samples, design, config)
    verdict = check_feasibility(report, design, config, tol=1e-6)
    assert verdict.feasible
    assert wasr.max() >= wasr[0] - 1e-6


def test_run_deterministic_trace():
    config, samples = desk_problem(5)
    bcd_config = BcdConfig(max_iterations=6)
    d1, t1 = run(config, samples, bcd_config, seed=7)
    d2, t2 = run(config, samples, bcd_config, seed=7)
    assert t1.wasr == t2.wasr
    assert t1.objective == t2.objective
    assert np.array_equal(d1.power, d2.power)
    assert np.array_equal(d1.transmissive, d2.transmissive)
    assert np.array_equal(d1.common_rates, d2.common_rates)


def k1_grid_optimum(h_abs2, noise_var, p_total, step):
    """Exhaustive WASR over (p_c, p_1, |f_c|, |f_1|, phases) for K = 1, N = 1.

    The common allocation is the full common rate (optimal for one user).
    Phases are swept for form's sake; with N = 1 only magnitudes matter.
    """
    p_axis = np.arange(0.0, p_total + step / 2, step)
    mag = np.arange(0.0, 1.0 + step / 2, step)
    phases = np.exp(1j * np.linspace(0.0, 2.0 * np.pi, 4, endpoint=False))
    f_c = (mag[:, None] * phases[None, :]).ravel()
    f_1 = f_c.copy()
    best = 0.0
    for p_c in p_axis:
        for p_1 in p_axis:
            if p_c + p_1 > p_total + 1e-12:
                continue
            own = p_1 * h_abs2 * np.abs(f_1) ** 2  # (F1,)
            gamma_p = own / noise_var
            r_p = np.log2(1.0 + gamma_p)
            gamma_c = (p_c * h_abs2 * np.abs(f_c[:, None]) ** 2) / (own[None, :] + noise_var)
            wasr = (np.log2(1.0 + gamma_c) + r_p[None, :]).max()
            best = max(best, float(wasr))
    return best


def test_run_k1_n1_matches_exhaustive_grid():
    config = make_config(
        num_users=1, num_subarrays=1, elements_per_subarray=2, max_power=1.0,
        csi_error_level=0.0, num_samples=1, pathloss_ref_db=0.0,
        user_distances=[1.0], qos_threshold=0.0,
    )
    channels = generate_scenario(config, seed=2)
    samples = draw_samples(channels, config, seed=3)
    bcd_config = BcdConfig(convergence_eps=1e-6, max_iterations=200)
    design, trace = run(config, samples, bcd_config, seed=2)
    grid = k1_grid_optimum(
        float(np.abs(channels.estimated[0, 0]) ** 2), config.noise_variance, 1.0, step=0.02
    )
    assert abs(max(trace.wasr) - grid) <= 1e-3
    # closed form for this instance: any full-power split with |f| = 1
    closed = np.log2(1.0 + np.abs(channels.estimated[0, 0]) ** 2 / config.noise_variance)
    assert max(trace.wasr) == pytest.approx(closed, abs=1e-3)


def test_abort_policy_raises_with_trace():
    config, samples = desk_problem(6, qos_threshold=5.0)
    bcd_config = BcdConfig(infeasible_qos_policy="abort")
    with pytest.raises(InfeasibleRunError) as excinfo:
        run(config, samples, bcd_config, seed=6)
    assert isinstance(excinfo.value.trace, BcdTrace)
    assert excinfo.value.trace.status == "aborted"


def test_relax_policy_completes_with_warning():
    config, samples = desk_problem(6, qos_threshold=5.0)
    bcd_config = BcdConfig(infeasible_qos_policy="relax")
    design, trace = run(config, samples, bcd_config, seed=6)
    assert trace.qos_relaxed
    assert trace.warnings
    assert trace.status in ("converged", "max-iterations")
    assert np.all(np.diff(np.array(trace.wasr)) >= -1e-6)


def test_trace_csv(tmp_path):
    config, samples = desk_problem(7)
    _, trace = run(config, samples, BcdConfig(max_iterations=3), seed=7)
    path = tmp_path / "trace.csv"
    trace.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "iteration,wasr,objective,power_residual,transmissive_residual,common_residual"
    assert len(lines) == 2 + len(trace.reports)  # header + iteration 0 + per-iteration rows
