import numpy as np
import pytest

from risrsma.core import COMMON, PRIVATE, Design, average_rates, check_feasibility, rate, sinr
from risrsma.errors import StructuralError
from risrsma.scenario import draw_samples, generate_scenario

from conftest import make_config, random_design


def single_user_design(p_c, p_1, f_c=0.0, f_1=1.0):
    return Design(power=[p_c, p_1], transmissive=np.array([[f_c, f_1]]), common_rates=[0.0])


def sinr_oracle(h, design, k, stream, noise_var):
    """Term-by-term re-evaluation written independently of the library path."""
    received = []
    for j in range(design.power.shape[0]):
        inner = sum(np.conj(h[n]) * design.transmissive[n, j] for n in range(len(h)))
        received.append(design.power[j] * abs(inner) ** 2)
    if stream == COMMON:
        return received[0] / (sum(received[1:]) + noise_var)
    interference = sum(received[1 + j] for j in range(len(received) - 1) if j != k)
    return received[k + 1] / (interference + noise_var)


def test_sinr_single_user_unit_quantities():
    design = single_user_design(0.0, 1.0)
    assert sinr(np.array([1.0 + 0j]), design, 0, PRIVATE, 1.0) == pytest.approx(1.0)
    assert sinr(np.array([1.0 + 0j]), design, 0, COMMON, 1.0) == 0.0


def test_sinr_zero_power():
    design = single_user_design(0.0, 0.0, f_c=1.0)
    for stream in (COMMON, PRIVATE):
        assert sinr(np.array([1.0 + 0j]), design, 0, stream, 1.0) == 0.0


def test_sinr_matches_independent_oracle():
    rng = np.random.default_rng(0)
    for _ in range(50):
        k, n = 3, 4
        h = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)
        design = random_design(rng, k, n)
        for user in range(k):
            for stream in (COMMON, PRIVATE):
                got = sinr(h, design, user, stream, 0.7)
                want = sinr_oracle(h, design, user, stream, 0.7)
                assert got == pytest.approx(want, rel=1e-12)


def test_sinr_dimension_mismatch():
    design = single_user_design(0.0, 1.0)
    with pytest.raises(StructuralError):
        sinr(np.ones(3, dtype=complex), design, 0, PRIVATE, 1.0)
    with pytest.raises(StructuralError):
        sinr(np.ones(1, dtype=complex), design, 5, PRIVATE, 1.0)
    with pytest.raises(StructuralError):
        sinr(np.ones(1, dtype=complex), design, 0, "both", 1.0)


def test_rate_known_values():
    assert rate(0.0) == 0.0
    assert rate(1.0) == pytest.approx(1.0)
    assert rate(3.0) == pytest.approx(2.0)


def test_rate_strictly_increasing_and_sinr_monotone_in_own_power():
    gammas = np.linspace(0.0, 10.0, 101)
    assert np.all(np.diff(rate(gammas)) > 0)
    rng = np.random.default_rng(3)
    h = (rng.standard_normal(3) + 1j * rng.standard_normal(3)) / np.sqrt(2)
    design = random_design(rng, 2, 3)
    previous = -1.0
    for p_own in np.linspace(0.0, 2.0, 21):
        design.power[1] = p_own
        value = sinr(h, design, 0, PRIVATE, 1.0)
        assert value >= previous
        previous = value


def test_joint_scaling_leaves_sinr_unchanged():
    rng = np.random.default_rng(4)
    h = (rng.standard_normal(4) + 1j * rng.standard_normal(4)) / np.sqrt(2)
    design = random_design(rng, 3, 4)
    lam = 3.7
    scaled = Design(lam * design.power, design.transmissive, design.common_rates)
    for user in range(3):
        for stream in (COMMON, PRIVATE):
            a = sinr(h, design, user, stream, 1.3)
            b = sinr(h, scaled, user, stream, lam * 1.3)
            assert a == pytest.approx(b, rel=1e-12)


def test_average_rates_single_sample_and_zero_error(small_problem):
    config, channels, _ = small_problem
    cfg1 = make_config(num_samples=1, csi_error_level=0.0)
    samples = draw_samples(channels, cfg1, seed=3)
    rng = np.random.default_rng(5)
    design = random_design(rng, config.num_users, config.num_subarrays, c_max=0.1)
    report = average_rates(samples, design, cfg1)
    for k in range(config.num_users):
        want_c = rate(sinr(channels.estimated[k], design, k, COMMON, cfg1.noise_variance))
        want_p = rate(sinr(channels.estimated[k], design, k, PRIVATE, cfg1.noise_variance))
        assert report.avg_common[k] == pytest.approx(want_c, rel=1e-12)
        assert report.avg_private[k] == pytest.approx(want_p, rel=1e-12)


def test_average_rates_matches_per_sample_oracle(small_problem):
    config, _, samples = small_problem
    rng = np.random.default_rng(6)
    design = random_design(rng, config.num_users, config.num_subarrays, c_max=0.2)
    report = average_rates(samples, design, config)
    for k in range(config.num_users):
        vals_c = [
            rate(sinr(samples.samples[k, m], design, k, COMMON, config.noise_variance))
            for m in range(config.num_samples)
        ]
        vals_p = [
            rate(sinr(samples.samples[k, m], design, k, PRIVATE, config.noise_variance))
            for m in range(config.num_samples)
        ]
        assert report.avg_common[k] == pytest.approx(np.mean(vals_c), rel=1e-12)
        assert report.avg_private[k] == pytest.approx(np.mean(vals_p), rel=1e-12)


def test_average_rates_saa_convergence():
    # M = 200 average within 3 standard errors of an M = 20000 reference
    config = make_config(num_samples=200)
    channels = generate_scenario(config, seed=21)
    samples_small = draw_samples(channels, config, seed=22)
    config_big = make_config(num_samples=20_000)
    samples_big = draw_samples(channels, config_big, seed=23)
    rng = np.random.default_rng(7)
    design = random_design(rng, config.num_users, config.num_subarrays)
    small = average_rates(samples_small, design, config)
    big = average_rates(samples_big, design, config_big)
    for k in range(config.num_users):
        per_sample = [
            rate(sinr(samples_small.samples[k, m], design, k, PRIVATE, config.noise_variance))
            for m in range(200)
        ]
        se = np.std(per_sample, ddof=1) / np.sqrt(200)
        assert abs(small.avg_private[k] - big.avg_private[k]) <= 3.0 * se + 1e-12


def test_wasr_decomposition(small_problem):
    config, _, samples = small_problem
    rng = np.random.default_rng(8)
    design = random_design(rng, config.num_users, config.num_subarrays, c_max=0.3)
    report = average_rates(samples, design, config)
    want = float(config.weights @ (report.avg_private + design.common_rates))
    assert abs(report.wasr - want) <= 1e-12


def test_average_rates_empty_samples(small_problem):
    config, channels, samples = small_problem
    rng = np.random.default_rng(9)
    design = random_design(rng, config.num_users, config.num_subarrays)
    samples.samples = samples.samples[:, :0, :]
    with pytest.raises(StructuralError):
        average_rates(samples, design, config)


def test_check_feasibility_zero_design():
    config = make_config(qos_threshold=0.0)
    k, n = config.num_users, config.num_subarrays
    design = Design(np.zeros(k + 1), np.zeros((n, k + 1), dtype=complex), np.zeros(k))
    channels = generate_scenario(config, seed=1)
    samples = draw_samples(channels, config, seed=2)
    verdict = check_feasibility(average_rates(samples, design, config), design, config)
    assert verdict.feasible


def test_check_feasibility_common_violation(small_problem):
    config, _, samples = small_problem
    rng = np.random.default_rng(10)
    design = random_design(rng, config.num_users, config.num_subarrays)
    report = average_rates(samples, design, config)
    # push the common allocation 0.5 above the decodable budget
    design.common_rates[0] = report.avg_common.min() + 0.5
    report = average_rates(samples, design, config)
    verdict = check_feasibility(report, design, config)
    assert not verdict.feasible
    assert verdict.common_rate_slack == pytest.approx(-0.5, abs=1e-9)


def test_design_json_roundtrip(tmp_path):
    rng = np.random.default_rng(11)
    design = random_design(rng, 3, 4, c_max=0.2)
    path = tmp_path / "design.json"
    design.save_json(path)
    loaded = Design.load_json(path)
    assert np.array_equal(loaded.power, design.power)
    assert np.array_equal(loaded.transmissive, design.transmissive)
    assert np.array_equal(loaded.common_rates, design.common_rates)


def test_design_validate():
    config = make_config()
    k, n = config.num_users, config.num_subarrays
    good = Design(np.full(k + 1, 0.5), 0.5 * np.ones((n, k + 1), dtype=complex), np.zeros(k))
    good.validate(config)
    bad = Design(np.full(k + 1, 2.0), 0.5 * np.ones((n, k + 1), dtype=complex), np.zeros(k))
    with pytest.raises(StructuralError):
        bad.validate(config)
    bad2 = Design(np.full(k + 1, 0.5), 1.5 * np.ones((n, k + 1), dtype=complex), np.zeros(k))
    with pytest.raises(StructuralError):
        bad2.validate(config)
