"""Rate-WMMSE machinery: per-sample MSEs, equalizers, weights and SAA-averaged
coefficients, plus a symbol-level Monte-Carlo validator of the analytic MSE.

For a scalar receive model y = h^H x + n and estimate s_hat = g * y, the MSE of
stream i at user k is

    eps = |g|^2 T - 2 Re{ sqrt(p_i) g h^H f_i } + 1,

where T is the total received power at that decode step.  The minimizer is
g = sqrt(p_i) conj(h^H f_i) / T, achieving eps = I / T with I = T - p_i|h^H f_i|^2,
which ties to the SINR via gamma = 1/eps - 1 and to the rate via R = -log2(eps).
The weighted MSE is xi = w * eps - log2(w); evaluated at w = 1/eps it equals
1 - R with R in bits.  Note that 1/eps minimizes the natural-log form
w * eps - ln(w) exactly, but not the base-2 form (whose true minimizer is
1/(eps ln 2)).  The optimizer therefore works with the natural-log surrogate
internally -- where the weight update is an exact block minimization and
1 - xi equals the rate in nats -- while the base-2 forms are kept as the
reporting convention.  Both sets of averages are exposed side by side.

The sigma^2 appearing in the total-power terms is the receiver noise variance,
not the CSI-error variance (the two symbols are kept separate throughout).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import COMMON, PRIVATE, Design, _received_powers
from .errors import ConfigurationError, NumericDomainError, StructuralError
from .scenario import SampleSet

WEIGHT_CAP = 1e12  # avoids overflow when the minimum MSE underflows
LN2 = float(np.log(2.0))


def receive_power_terms(h, design: Design, k: int, noise_var: float):
    """Total and interference received-power terms (T_c, T_p, I_c, I_p).

    T_c = sum of all K+1 stream powers + noise; T_p = T_c minus the common
    stream = I_c; I_p = T_p minus user k's own private stream.
    """
    if noise_var <= 0:
        raise ConfigurationError("noise_variance must be > 0")
    rx = _received_powers(np.asarray(h, dtype=complex), design)
    t_c = float(rx.sum() + noise_var)
    t_p = t_c - float(rx[0])
    i_p = t_p - float(rx[k + 1])
    return t_c, t_p, t_p, i_p


def _stream_terms(h, design: Design, k: int, stream: str, noise_var: float):
    """(sqrt(p_i) h^H f_i, T_i, I_i) for the requested stream at user k."""
    t_c, t_p, _, i_p = receive_power_terms(h, design, k, noise_var)
    e = np.conj(np.asarray(h, dtype=complex)) @ design.transmissive
    if stream == COMMON:
        return np.sqrt(design.power[0]) * e[0], t_c, t_p
    if stream == PRIVATE:
        return np.sqrt(design.power[k + 1]) * e[k + 1], t_p, i_p
    raise StructuralError(f"stream must be 'common' or 'private', got {stream!r}")


def mse(h, design: Design, k: int, stream: str, g: complex, noise_var: float) -> float:
    """Analytic MSE |g|^2 T - 2 Re{sqrt(p) g h^H f} + 1 for an arbitrary equalizer."""
    a, t, _ = _stream_terms(h, design, k, stream, noise_var)
    return float(abs(g) ** 2 * t - 2.0 * np.real(g * a) + 1.0)


def mmse_equalizer(h, design: Design, k: int, stream: str, noise_var: float) -> complex:
    """MSE-optimal scalar equalizer sqrt(p_i) conj(h^H f_i) / T_i."""
    a, t, _ = _stream_terms(h, design, k, stream, noise_var)
    return complex(np.conj(a) / t)


def mmse_value(h, design: Design, k: int, stream: str, noise_var: float) -> float:
    """Minimum MSE I_i / T_i, in (0, 1]."""
    _, t, i = _stream_terms(h, design, k, stream, noise_var)
    return float(i / t)


def optimal_weight(eps_mse: float) -> float:
    """MSE weight 1/eps at the MMSE point, clamped to [1, 1e12].

    The 1/ln(2) factor from differentiating log2 is omitted; it cancels in the
    optimality conditions and only rescales the weights.
    """
    if eps_mse <= 0:
        raise NumericDomainError("minimum MSE must be positive")
    return float(np.clip(1.0 / eps_mse, 1.0, WEIGHT_CAP))


def wmse(h, design: Design, k: int, stream: str, g: complex, w: float, noise_var: float) -> float:
    """Weighted MSE xi = w * eps(g) - log2(w)."""
    if w <= 0:
        raise NumericDomainError("weight must be positive")
    return float(w * mse(h, design, k, stream, g, noise_var) - np.log2(w))


def surrogate_wmse(h, design: Design, k: int, stream: str, g: complex, w: float, noise_var: float) -> float:
    """Natural-log WMSE w * eps(g) - ln(w), the functional the solver minimizes.

    Its joint minimum over (g, w) is attained exactly at the closed-form
    equalizer and weight 1/eps, where it equals 1 - R with R in nats.
    """
    if w <= 0:
        raise NumericDomainError("weight must be positive")
    return float(w * mse(h, design, k, stream, g, noise_var) - np.log(w))


@dataclass
class StreamStats:
    """Averaged WMMSE coefficients for one (stream, decoder) pair.

    Natural-log fields (v_bar_nat, xi_bar_nat) feed the solver; the base-2
    fields report the bits-convention values.  1 - xi_bar_nat is the surrogate
    average rate in nats.
    """

    equalizers: np.ndarray  # (M,) complex
    weights: np.ndarray  # (M,)
    t_bar: float
    psi_bar: np.ndarray  # (N, N) Hermitian PSD
    theta_bar: np.ndarray  # (N,) row vector
    v_bar: float
    xi_bar: float
    v_bar_nat: float
    xi_bar_nat: float


@dataclass
class WmmseState:
    """Per-sample equalizers/weights and their SAA-averaged coefficients.

    Axis 0 indexes the stream kind: 0 = common, 1 = private.

    equalizers: (2, K, M) complex      weights: (2, K, M)
    t_bar:      (2, K)                 psi_bar: (2, K, N, N) Hermitian PSD
    theta_bar:  (2, K, N) row vectors  v_bar / v_bar_nat: (2, K)
    xi_bar / xi_bar_nat: (2, K) sample-average WMSE at the per-sample optima

    v_bar/xi_bar use the base-2 log convention; the *_nat twins use the
    natural log (the solver's convention, in which the stored weights are the
    exact minimizers).
    """

    equalizers: np.ndarray
    weights: np.ndarray
    t_bar: np.ndarray
    psi_bar: np.ndarray
    theta_bar: np.ndarray
    v_bar: np.ndarray
    xi_bar: np.ndarray
    v_bar_nat: np.ndarray
    xi_bar_nat: np.ndarray

    @property
    def num_users(self):
        return self.t_bar.shape[1]


def stream_statistics(h_samples, power, f_cols, signal_col, noise_cols, noise_var) -> StreamStats:
    """Averaged WMMSE coefficients for one (stream, decoder) pair.

    h_samples: (M, N) channel samples seen by the decoder
    f_cols:    (N, J) transmissive matrix, power: (J,)
    signal_col: column index of the decoded stream
    noise_cols: column indices treated as interference (excludes the signal)

    Averages use a fixed-order reduction for reproducibility.
    """
    e = np.conj(h_samples) @ f_cols  # (M, J)
    rx = power[None, :] * np.abs(e) ** 2
    a = np.sqrt(power[signal_col]) * e[:, signal_col]
    t = np.abs(a) ** 2 + rx[:, noise_cols].sum(axis=1) + noise_var
    eps = 1.0 - np.abs(a) ** 2 / t  # = I / T
    w = np.clip(1.0 / eps, 1.0, WEIGHT_CAP)
    g = np.conj(a) / t
    tw = w * np.abs(g) ** 2
    m = h_samples.shape[0]
    psi_bar = np.einsum("m,mn,mq->nq", tw, h_samples, np.conj(h_samples)) / m
    theta_bar = np.einsum("m,mn->n", w * g, np.conj(h_samples)) / m
    lnw = np.log(w)
    log2w = lnw / LN2
    return StreamStats(
        equalizers=g,
        weights=w,
        t_bar=float(np.mean(tw)),
        psi_bar=psi_bar,
        theta_bar=theta_bar,
        v_bar=float(np.mean(w - log2w)),
        xi_bar=float(np.mean(w * eps - log2w)),
        v_bar_nat=float(np.mean(w - lnw)),
        xi_bar_nat=float(np.mean(w * eps - lnw)),
    )


def average_coefficients(samples: SampleSet, design: Design, noise_var: float) -> WmmseState:
    """Per-sample MMSE equalizers/weights and the M-sample averaged coefficients
    needed to assemble the convex subproblems."""
    if noise_var <= 0:
        raise ConfigurationError("noise_variance must be > 0")
    h = samples.samples
    k, m, n = h.shape
    if m == 0:
        raise StructuralError("sample set is empty")
    state = WmmseState(
        equalizers=np.zeros((2, k, m), dtype=complex),
        weights=np.zeros((2, k, m)),
        t_bar=np.zeros((2, k)),
        psi_bar=np.zeros((2, k, n, n), dtype=complex),
        theta_bar=np.zeros((2, k, n), dtype=complex),
        v_bar=np.zeros((2, k)),
        xi_bar=np.zeros((2, k)),
        v_bar_nat=np.zeros((2, k)),
        xi_bar_nat=np.zeros((2, k)),
    )
    private_cols = np.arange(1, k + 1)
    for user in range(k):
        pairs = (
            (0, 0, private_cols),  # common stream: all privates interfere
            (1, user + 1, private_cols[private_cols != user + 1]),  # private stream
        )
        for row, signal_col, noise_cols in pairs:
            stats = stream_statistics(
                h[user], design.power, design.transmissive, signal_col, noise_cols, noise_var
            )
            state.equalizers[row, user] = stats.equalizers
            state.weights[row, user] = stats.weights
            state.t_bar[row, user] = stats.t_bar
            state.psi_bar[row, user] = stats.psi_bar
            state.theta_bar[row, user] = stats.theta_bar
            state.v_bar[row, user] = stats.v_bar
            state.xi_bar[row, user] = stats.xi_bar
            state.v_bar_nat[row, user] = stats.v_bar_nat
            state.xi_bar_nat[row, user] = stats.xi_bar_nat
    return state


def simulate_mse(
    h,
    design: Design,
    k: int,
    stream: str,
    g: complex,
    num_symbols: int,
    noise_var: float,
    seed: int = 0,
) -> float:
    """Empirical MSE from transmitting random unit-variance symbol vectors.

    Symbols are i.i.d. CN(0, 1) so E[s s^H] = I.  The private estimate
    subtracts the received common stream before equalizing.  Evaluation is
    chunked to bound memory for large symbol counts.
    """
    if num_symbols < 1:
        raise StructuralError("num_symbols must be >= 1")
    h = np.asarray(h, dtype=complex)
    rng = np.random.default_rng(seed)
    n_streams = design.power.shape[0]
    amps = np.sqrt(design.power)
    hf = np.conj(h) @ design.transmissive  # (K+1,) h^H f_j
    target_col = 0 if stream == COMMON else k + 1
    if stream not in (COMMON, PRIVATE):
        raise StructuralError(f"stream must be 'common' or 'private', got {stream!r}")
    total = 0.0
    done = 0
    while done < num_symbols:
        batch = min(200_000, num_symbols - done)
        s = (rng.standard_normal((batch, n_streams)) + 1j * rng.standard_normal((batch, n_streams))) / np.sqrt(2.0)
        noise = np.sqrt(noise_var / 2.0) * (rng.standard_normal(batch) + 1j * rng.standard_normal(batch))
        y = s @ (amps * hf) + noise
        if stream == PRIVATE:
            y = y - amps[0] * hf[0] * s[:, 0]
        err = g * y - s[:, target_col]
        total += float(np.sum(np.abs(err) ** 2))
        done += batch
    return total / num_symbols
