"""Design variables, SINRs, rates, sample-average rates and feasibility checks.

Rates are bits/s/Hz (log base 2) throughout.  A Design bundles the three
optimization blocks: the power split ``p = [p_c, p_1..p_K]``, the transmissive
coefficient matrix ``F`` with columns ``[f_c, f_1..f_K]`` and the common-rate
allocation ``c``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import StructuralError
from .scenario import SampleSet, SystemConfig

COMMON = "common"
PRIVATE = "private"


@dataclass
class Design:
    """One candidate solution.

    power:        (K+1,) nonnegative watts, index 0 = common stream
    transmissive: (N, K+1) complex, column 0 = common stream, |entries| <= 1
    common_rates: (K,) nonnegative bits/s/Hz
    """

    power: np.ndarray
    transmissive: np.ndarray
    common_rates: np.ndarray

    def __post_init__(self):
        self.power = np.asarray(self.power, dtype=float)
        self.transmissive = np.asarray(self.transmissive, dtype=complex)
        self.common_rates = np.asarray(self.common_rates, dtype=float)

    @property
    def num_users(self):
        return self.common_rates.shape[0]

    def copy(self) -> "Design":
        return Design(self.power.copy(), self.transmissive.copy(), self.common_rates.copy())

    def validate(self, config: SystemConfig, tol: float = 1e-9):
        k, n = config.num_users, config.num_subarrays
        if self.power.shape != (k + 1,):
            raise StructuralError(f"power must have shape ({k + 1},)")
        if self.transmissive.shape != (n, k + 1):
            raise StructuralError(f"transmissive must have shape ({n}, {k + 1})")
        if self.common_rates.shape != (k,):
            raise StructuralError(f"common_rates must have shape ({k},)")
        if np.any(self.power < -tol):
            raise StructuralError("power must be nonnegative")
        if self.power.sum() > config.max_power + tol:
            raise StructuralError("total power exceeds max_power")
        if np.any(np.abs(self.transmissive) > 1.0 + tol):
            raise StructuralError("transmissive entries must have magnitude <= 1")
        if np.any(self.common_rates < -tol):
            raise StructuralError("common_rates must be nonnegative")
        return self

    def to_json_dict(self) -> dict:
        f = self.transmissive
        return {
            "power": self.power.tolist(),
            "transmissive": np.stack([f.real, f.imag], axis=-1).tolist(),
            "common_rates": self.common_rates.tolist(),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "Design":
        f = np.asarray(data["transmissive"], dtype=float)
        return cls(
            power=np.asarray(data["power"], dtype=float),
            transmissive=f[..., 0] + 1j * f[..., 1],
            common_rates=np.asarray(data["common_rates"], dtype=float),
        )

    def save_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh)

    @classmethod
    def load_json(cls, path) -> "Design":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


@dataclass
class RateReport:
    """SAA-averaged rates of one design on one sample set (bits/s/Hz)."""

    avg_common: np.ndarray  # (K,)
    avg_private: np.ndarray  # (K,)
    per_user_sum: np.ndarray  # (K,) C_k + avg_private_k
    wasr: float


@dataclass
class FeasibilityVerdict:
    """Signed slack per constraint family; nonnegative slack means satisfied."""

    feasible: bool
    common_rate_slack: float  # min_k avg_common_k - sum(c)
    qos_slack: float  # min_k (c_k + avg_private_k - R_th)
    power_slack: float  # P_t - sum(p)
    power_nonneg_slack: float  # min_k p
    amplitude_slack: float  # 1 - max |F|
    common_nonneg_slack: float  # min_k c


def _received_powers(h: np.ndarray, design: Design) -> np.ndarray:
    """Per-stream received powers p_j |h^H f_j|^2, shape (K+1,)."""
    e = np.conj(h) @ design.transmissive
    return design.power * np.abs(e) ** 2


def sinr(h: np.ndarray, design: Design, k: int, stream: str, noise_var: float) -> float:
    """SINR of the common or private stream at user k (0-based) for channel h.

    The common stream sees all K private streams plus noise as interference;
    the private stream of user k sees the other K-1 private streams plus noise
    (its own common stream having been cancelled).
    """
    h = np.asarray(h, dtype=complex)
    if h.shape != (design.transmissive.shape[0],):
        raise StructuralError(
            f"channel has length {h.shape}, expected ({design.transmissive.shape[0]},)"
        )
    if not 0 <= k < design.num_users:
        raise StructuralError(f"user index {k} out of range")
    rx = _received_powers(h, design)
    private_total = rx[1:].sum()
    if stream == COMMON:
        return float(rx[0] / (private_total + noise_var))
    if stream == PRIVATE:
        own = rx[k + 1]
        return float(own / (private_total - own + noise_var))
    raise StructuralError(f"stream must be 'common' or 'private', got {stream!r}")


def rate(gamma):
    """Achievable rate log2(1 + gamma) in bits/s/Hz."""
    return np.log2(1.0 + gamma)


def average_rates(samples: SampleSet, design: Design, config: SystemConfig) -> RateReport:
    """Sample-average rates over the M realizations, plus the WASR.

    The per-sample rates are reduced with a fixed-order mean so results are
    reproducible regardless of any caller-side parallelism.
    """
    h = samples.samples  # (K, M, N)
    if h.shape[1] == 0:
        raise StructuralError("sample set is empty")
    k = design.num_users
    e = np.conj(h) @ design.transmissive  # (K, M, K+1), entry j = h^H f_j
    rx = design.power[None, None, :] * np.abs(e) ** 2
    private_total = rx[:, :, 1:].sum(axis=2)  # (K, M)
    own = rx[np.arange(k)[:, None], np.arange(h.shape[1])[None, :], np.arange(1, k + 1)[:, None]]
    gamma_c = rx[:, :, 0] / (private_total + config.noise_variance)
    gamma_p = own / (private_total - own + config.noise_variance)
    avg_common = rate(gamma_c).mean(axis=1)
    avg_private = rate(gamma_p).mean(axis=1)
    per_user_sum = design.common_rates + avg_private
    wasr = float(config.weights @ per_user_sum)
    return RateReport(avg_common, avg_private, per_user_sum, wasr)


def check_feasibility(
    report: RateReport, design: Design, config: SystemConfig, tol: float = 1e-6
) -> FeasibilityVerdict:
    """Check all problem constraints against a rate report; infeasibility is a
    verdict (signed slacks), never an exception."""
    slacks = dict(
        common_rate_slack=float(report.avg_common.min() - design.common_rates.sum()),
        qos_slack=float((design.common_rates + report.avg_private - config.qos_threshold).min()),
        power_slack=float(config.max_power - design.power.sum()),
        power_nonneg_slack=float(design.power.min()),
        amplitude_slack=float(1.0 - np.abs(design.transmissive).max()),
        common_nonneg_slack=float(design.common_rates.min()),
    )
    feasible = all(v >= -tol for v in slacks.values())
    return FeasibilityVerdict(feasible=feasible, **slacks)
