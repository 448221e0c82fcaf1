import numpy as np
import pytest

from risrsma.core import Design
from risrsma.scenario import SystemConfig, draw_samples, generate_scenario


def make_config(**overrides) -> SystemConfig:
    """Small, fast scenario config; override any field."""
    base = dict(
        num_subarrays=3,
        num_users=3,
        elements_per_subarray=4,
        max_power=4.0,
        noise_variance=1.0,
        csi_error_mode="relative",
        csi_error_level=0.1,
        qos_threshold=0.0,
        num_samples=20,
        pathloss_ref_db=3.0,
        pathloss_exponent=3.0,
        distance_range=(1.0, 2.0),
    )
    base.update(overrides)
    return SystemConfig.from_dict(base)


def random_design(rng, k, n, p_total=4.0, c_max=0.0) -> Design:
    """Random feasible design: powers on the simplex, entries in the unit disk."""
    p = rng.uniform(0.1, 1.0, k + 1)
    p *= rng.uniform(0.3, 1.0) * p_total / p.sum()
    f = rng.uniform(0.05, 1.0, (n, k + 1)) * np.exp(2j * np.pi * rng.uniform(size=(n, k + 1)))
    c = rng.uniform(0.0, c_max, k) if c_max > 0 else np.zeros(k)
    return Design(power=p, transmissive=f, common_rates=c)


@pytest.fixture
def small_problem():
    """(config, channels, samples) for a tiny 3-user scenario."""
    config = make_config()
    channels = generate_scenario(config, seed=11)
    samples = draw_samples(channels, config, seed=12)
    return config, channels, samples
