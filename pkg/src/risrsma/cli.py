"""Batch CLI: convergence experiments, parameter sweeps and a self-check suite.

Examples:
    risrsma convergence --profile desk --seeds 0,1 --out results/
    risrsma sweep --var pt --values 0,5,10,15,20 --profile desk --out results/
    risrsma validate
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .baselines import SchemeKind
from .bcd import BcdConfig
from .core import COMMON, PRIVATE, Design, sinr
from .experiments import (
    SWEEP_DEFAULTS,
    profile_config,
    run_convergence,
    run_sweep,
    write_records,
)
from .scenario import SystemConfig, draw_samples, generate_scenario
from .subsolvers import SubproblemData, solve_common_rate
from .wmmse import (
    average_coefficients,
    mmse_equalizer,
    mmse_value,
    mse,
    optimal_weight,
    surrogate_wmse,
    wmse,
)


def _parse_seeds(text):
    return [int(s) for s in text.split(",") if s.strip() != ""]


def _parse_schemes(text):
    return tuple(SchemeKind(s.strip().upper()) for s in text.split(","))


def _load_config(args) -> SystemConfig:
    if args.config:
        return SystemConfig.from_json(args.config)
    return profile_config(args.profile)


def _bcd_config(args) -> BcdConfig:
    cfg = BcdConfig()
    if args.max_iterations is not None:
        cfg.max_iterations = args.max_iterations
    if args.eps is not None:
        cfg.convergence_eps = args.eps
    return cfg


def _cmd_convergence(args):
    config = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = run_convergence(config, _parse_seeds(args.seeds), _bcd_config(args), args.schemes)
    path = out / "convergence.csv"
    write_records(records, path)
    print(f"wrote {len(records)} rows to {path}")
    return 0


def _cmd_sweep(args):
    config = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    values = (
        [float(v) for v in args.values.split(",")] if args.values else SWEEP_DEFAULTS[args.var]
    )
    records = run_sweep(config, args.var, values, _parse_seeds(args.seeds), _bcd_config(args), args.schemes)
    path = out / f"sweep_{args.var}.csv"
    write_records(records, path)
    print(f"wrote {len(records)} rows to {path}")
    return 0


def _random_instance(rng, k=3, n=4):
    h = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)
    p = rng.uniform(0.1, 1.0, k + 1)
    p *= rng.uniform(0.3, 1.0) * 10.0 / p.sum()
    f = rng.uniform(0.05, 1.0, (n, k + 1)) * np.exp(2j * np.pi * rng.uniform(size=(n, k + 1)))
    c = rng.uniform(0.0, 0.2, k)
    return h, Design(power=p, transmissive=f, common_rates=c)


def _cmd_validate(args):
    """Run the identity and oracle self-checks; exit nonzero on any failure."""
    rng = np.random.default_rng(7)
    checks = []

    def check(name, ok, detail=""):
        checks.append(ok)
        print(f"{'PASS' if ok else 'FAIL'}  {name}{(' ' + detail) if detail else ''}")

    worst_rate, worst_sinr, worst_grad = 0.0, 0.0, 0.0
    for _ in range(200):
        h, design = _random_instance(rng)
        k = int(rng.integers(design.num_users))
        stream = COMMON if rng.random() < 0.5 else PRIVATE
        nv = 1.0
        eps = mmse_value(h, design, k, stream, nv)
        g = mmse_equalizer(h, design, k, stream, nv)
        w = optimal_weight(eps)
        r = -np.log2(eps)
        worst_rate = max(worst_rate, abs(wmse(h, design, k, stream, g, w, nv) - (1.0 - r)))
        worst_sinr = max(worst_sinr, abs((1.0 / eps - 1.0) - sinr(h, design, k, stream, nv)))
        d = 1e-6
        for delta in (d, -d, 1j * d, -1j * d):
            worst_grad = max(
                worst_grad,
                abs(mse(h, design, k, stream, g + delta, nv) - mse(h, design, k, stream, g - delta, nv))
                / (2 * d),
            )
    check("rate-WMMSE identity |xi* - (1-R)| <= 1e-9", worst_rate <= 1e-9, f"worst {worst_rate:.2e}")
    check("SINR-MSE identity |1/eps - 1 - gamma| <= 1e-12", worst_sinr <= 1e-12, f"worst {worst_sinr:.2e}")
    check("equalizer stationarity |d eps/d g| <= 1e-6", worst_grad <= 1e-6, f"worst {worst_grad:.2e}")

    config = SystemConfig.from_dict(
        dict(num_subarrays=3, num_users=3, elements_per_subarray=4, max_power=4.0,
             pathloss_ref_db=3.0, distance_range=(1.0, 2.0), num_samples=40)
    )
    channels = generate_scenario(config, 11)
    samples = draw_samples(channels, config, 12)
    _, design = _random_instance(rng, k=3, n=3)
    state = average_coefficients(samples, design, config.noise_variance)
    eig_min = min(
        float(np.linalg.eigvalsh(state.psi_bar[i, k]).min())
        for i in range(2)
        for k in range(config.num_users)
    )
    check("averaged Psi Hermitian PSD (min eig >= -1e-10)", eig_min >= -1e-10, f"min {eig_min:.2e}")

    data = SubproblemData.from_state(state, config)
    _, design2 = _random_instance(rng, k=3, n=3)
    assembled = data.xi_bar(design2.power, design2.transmissive)
    direct = np.zeros_like(assembled)
    for row, stream in ((0, COMMON), (1, PRIVATE)):
        for k in range(config.num_users):
            vals = [
                surrogate_wmse(
                    samples.samples[k, m], design2, k, stream,
                    state.equalizers[row, k, m], state.weights[row, k, m],
                    config.noise_variance,
                )
                for m in range(config.num_samples)
            ]
            direct[row, k] = np.mean(vals)
    gap = float(np.abs(assembled - direct).max())
    check("two-path subproblem assembly |assembled - averaged| <= 1e-9", gap <= 1e-9, f"worst {gap:.2e}")

    lp_ok = True
    for _ in range(100):
        kk = int(rng.integers(2, 6))
        xi_c = rng.uniform(0.0, 0.9, kk)
        xi_p = rng.uniform(0.5, 1.05, kk)
        data_lp = SubproblemData(
            t_bar=np.zeros((2, kk)), psi_bar=np.zeros((2, kk, 1, 1), dtype=complex),
            theta_bar=np.zeros((2, kk, 1), dtype=complex), v_bar=np.zeros((2, kk)),
            weights=rng.uniform(0.5, 2.0, kk), total_power=1.0,
            qos_threshold=float(rng.uniform(0.0, 0.2)), noise_var=1.0,
        )
        c, report = solve_common_rate(data_lp, xi_c, xi_p)
        budget = float((1.0 - xi_c).min())
        lower = np.maximum(0.0, xi_p - 1.0 + data_lp.qos_threshold)
        if lower.sum() > budget:
            lp_ok &= report.status == "infeasible"
            continue
        best = -np.inf
        for j in range(kk + 1):  # simplex vertices: lower bounds + full slack to one user
            vertex = lower.copy()
            if j < kk:
                vertex[j] += budget - lower.sum()
            best = max(best, float(data_lp.weights @ vertex))
        lp_ok &= report.status == "optimal" and abs(float(data_lp.weights @ c) - best) <= 1e-12
    check("common-rate LP matches vertex enumeration", lp_ok)

    print(f"{sum(checks)}/{len(checks)} checks passed")
    return 0 if all(checks) else 1


def main(argv=None):
    parser = argparse.ArgumentParser(prog="risrsma", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON config whose keys mirror SystemConfig fields")
        p.add_argument("--profile", default="paper", choices=["paper", "desk"])
        p.add_argument("--out", default="results")
        p.add_argument("--seeds", default="0,1,2,3,4", help="comma-separated seed list")
        p.add_argument("--schemes", default="RSMA,SDMA,NOMA", type=_parse_schemes)
        p.add_argument("--max-iterations", type=int, default=None)
        p.add_argument("--eps", type=float, default=None, help="BCD convergence threshold")

    p_conv = sub.add_parser("convergence", help="per-iteration WASR traces per scheme")
    add_common(p_conv)
    p_conv.set_defaults(func=_cmd_convergence)

    p_sweep = sub.add_parser("sweep", help="converged WASR vs a swept parameter")
    add_common(p_sweep)
    p_sweep.add_argument("--var", required=True, choices=["pt", "users", "subarrays"])
    p_sweep.add_argument("--values", help="comma-separated values (pt in dB)")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_val = sub.add_parser("validate", help="run the identity/oracle self-checks")
    p_val.set_defaults(func=_cmd_validate)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
