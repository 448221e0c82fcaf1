"""Scenario generation: system configuration, channel estimates and CSI-error samples.

Channels follow Rayleigh fading with distance-based pathloss: each entry of the
estimated channel vector is drawn i.i.d. circularly-symmetric complex Gaussian
with per-entry variance equal to the user's linear path gain.  CSI error
realizations are added on top of the estimate, either with a fixed per-entry
variance ("absolute" mode) or with a variance proportional to the user's path
gain ("relative" mode).

All randomness comes from ``numpy.random.default_rng`` (PCG64); identical
(config, seed) pairs reproduce bit-identical outputs within this implementation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, StructuralError

_ERROR_MODES = ("absolute", "relative")


def db_to_linear(db):
    """Convert a dB value to linear scale (10^(db/10))."""
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


@dataclass
class SystemConfig:
    """All scenario constants.

    Powers are linear watts; ``from_json`` also accepts ``max_power_db``.
    ``csi_error_level`` is a per-entry variance in "absolute" mode and a
    dimensionless fraction of the path gain in "relative" mode.
    """

    num_subarrays: int = 8
    num_users: int = 15
    elements_per_subarray: int = 32
    max_power: float = 10.0
    noise_variance: float = 1.0
    csi_error_mode: str = "relative"
    csi_error_level: float = 0.1
    weights: np.ndarray | None = None
    qos_threshold: float = 0.1
    num_samples: int = 500
    pathloss_ref_db: float = 30.0
    pathloss_exponent: float = 3.0
    distance_range: tuple[float, float] = (1.0, 100.0)
    user_distances: np.ndarray | None = None  # optional per-user override

    def __post_init__(self):
        if self.weights is None:
            self.weights = np.ones(self.num_users)
        else:
            self.weights = np.asarray(self.weights, dtype=float)
        if self.user_distances is not None:
            self.user_distances = np.asarray(self.user_distances, dtype=float)
        self.distance_range = tuple(float(d) for d in self.distance_range)

    def validate(self):
        """Raise ConfigurationError naming the first offending field."""
        if self.num_subarrays < 1:
            raise ConfigurationError("num_subarrays must be >= 1")
        if self.num_users < 1:
            raise ConfigurationError("num_users must be >= 1")
        if self.elements_per_subarray < self.num_users + 1:
            raise ConfigurationError(
                "elements_per_subarray must be >= num_users + 1 "
                f"(got {self.elements_per_subarray} for {self.num_users} users)"
            )
        if not self.max_power > 0:
            raise ConfigurationError("max_power must be > 0")
        if not self.noise_variance > 0:
            raise ConfigurationError("noise_variance must be > 0")
        if self.csi_error_mode not in _ERROR_MODES:
            raise ConfigurationError(
                f"csi_error_mode must be one of {_ERROR_MODES}, got {self.csi_error_mode!r}"
            )
        if self.csi_error_level < 0:
            raise ConfigurationError("csi_error_level must be >= 0")
        if self.weights.shape != (self.num_users,):
            raise ConfigurationError("weights must have length num_users")
        if np.any(self.weights < 0):
            raise ConfigurationError("weights must be nonnegative")
        if self.qos_threshold < 0:
            raise ConfigurationError("qos_threshold must be >= 0")
        if self.num_samples < 1:
            raise ConfigurationError("num_samples must be >= 1")
        d_min, d_max = self.distance_range
        if not (0 < d_min <= d_max):
            raise ConfigurationError("distance_range must satisfy 0 < d_min <= d_max")
        if self.user_distances is not None and self.user_distances.shape != (self.num_users,):
            raise ConfigurationError("user_distances must have length num_users")
        return self

    def with_overrides(self, **kwargs) -> "SystemConfig":
        return replace(self, **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "SystemConfig":
        data = dict(data)
        if "max_power_db" in data:
            if "max_power" in data:
                raise ConfigurationError("specify max_power or max_power_db, not both")
            data["max_power"] = float(db_to_linear(data.pop("max_power_db")))
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "SystemConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class ChannelSet:
    """Estimated channels for one scenario draw.

    estimated:  (K, N) complex, row k is the estimated channel of user k
    user_distances: (K,) meters
    per_user_pathgain: (K,) linear power gain
    """

    estimated: np.ndarray
    user_distances: np.ndarray
    per_user_pathgain: np.ndarray

    @property
    def num_users(self):
        return self.estimated.shape[0]

    @property
    def num_subarrays(self):
        return self.estimated.shape[1]


@dataclass
class SampleSet:
    """M sampled channel realizations per user: h = h_hat + error.

    samples: (K, M, N) complex
    channels: the ChannelSet the samples were drawn around
    error_variance: (K,) per-entry error variance used for each user
    """

    samples: np.ndarray
    channels: ChannelSet
    error_variance: np.ndarray

    @property
    def num_samples(self):
        return self.samples.shape[1]


def pathgain(distance, ref_db, exponent):
    """Linear power gain at `distance` meters for a reference loss at 1 m."""
    return 10.0 ** (-ref_db / 10.0) * np.asarray(distance, dtype=float) ** (-exponent)


def generate_scenario(config: SystemConfig, seed: int) -> ChannelSet:
    """Draw user distances and Rayleigh-faded channel estimates.

    Distances are uniform over the configured range unless the config carries
    an explicit per-user list.  Deterministic for a fixed (config, seed).
    """
    config.validate()
    rng = np.random.default_rng(seed)
    k, n = config.num_users, config.num_subarrays
    d_min, d_max = config.distance_range
    if config.user_distances is not None:
        distances = config.user_distances.copy()
    else:
        distances = rng.uniform(d_min, d_max, size=k)
    gains = pathgain(distances, config.pathloss_ref_db, config.pathloss_exponent)
    scale = np.sqrt(gains / 2.0)[:, None]
    estimated = scale * (rng.standard_normal((k, n)) + 1j * rng.standard_normal((k, n)))
    return ChannelSet(estimated=estimated, user_distances=distances, per_user_pathgain=gains)


def draw_samples(channels: ChannelSet, config: SystemConfig, seed: int) -> SampleSet:
    """Draw M CSI-error realizations per user around the estimate.

    Per-entry error variance is ``csi_error_level`` (absolute mode) or
    ``csi_error_level * pathgain`` (relative mode).  Deterministic per seed.
    """
    config.validate()
    if channels.num_users != config.num_users or channels.num_subarrays != config.num_subarrays:
        raise StructuralError(
            "channel set dimensions "
            f"({channels.num_users} users, {channels.num_subarrays} sub-arrays) "
            "do not match the config"
        )
    k, n, m = config.num_users, config.num_subarrays, config.num_samples
    if config.csi_error_mode == "relative":
        variance = config.csi_error_level * channels.per_user_pathgain
    else:
        variance = np.full(k, config.csi_error_level)
    rng = np.random.default_rng(seed)
    scale = np.sqrt(variance / 2.0)[:, None, None]
    noise = scale * (rng.standard_normal((k, m, n)) + 1j * rng.standard_normal((k, m, n)))
    samples = channels.estimated[:, None, :] + noise
    return SampleSet(samples=samples, channels=channels, error_variance=variance)
