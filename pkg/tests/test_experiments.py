import json

import numpy as np
import pytest

from risrsma.baselines import SchemeKind
from risrsma.bcd import BcdConfig
from risrsma.cli import main
from risrsma.errors import ConfigurationError
from risrsma.experiments import (
    CSV_HEADER,
    PROFILES,
    profile_config,
    read_records,
    run_convergence,
    run_sweep,
    write_records,
)


def tiny_config():
    return profile_config("desk").with_overrides(
        num_users=2, num_subarrays=2, elements_per_subarray=4, num_samples=5,
        weights=np.ones(2), qos_threshold=0.0,
    )


def tiny_bcd():
    return BcdConfig(max_iterations=4, convergence_eps=1e-3)


def test_paper_profile_matches_reported_setup():
    paper = PROFILES["paper"]
    assert paper["num_subarrays"] == 8
    assert paper["num_users"] == 15
    assert paper["elements_per_subarray"] == 32
    assert paper["max_power"] == pytest.approx(10.0)  # 10 dB
    assert paper["num_samples"] == 500
    assert paper["qos_threshold"] == pytest.approx(0.1)
    assert paper["pathloss_ref_db"] == 30.0
    assert paper["distance_range"] == (1.0, 100.0)
    desk = PROFILES["desk"]
    assert (desk["num_users"], desk["num_subarrays"], desk["num_samples"]) == (4, 4, 50)


def test_run_convergence_records_shape_and_monotonicity():
    records = run_convergence(tiny_config(), seeds=[0, 1], bcd_config=tiny_bcd())
    assert records
    keys = {(r.experiment, r.scheme, r.seed, r.value, r.iteration) for r in records}
    assert len(keys) == len(records)  # natural key unique
    for scheme in ("RSMA", "SDMA", "NOMA"):
        for seed in (0, 1):
            trace = sorted(
                (r for r in records if r.scheme == scheme and r.seed == seed and r.iteration >= 0),
                key=lambda r: r.iteration,
            )
            assert trace[0].iteration == 0
            wasr = [r.wasr for r in trace]
            assert all(b - a >= -1e-6 for a, b in zip(wasr, wasr[1:]))
            summary = [r for r in records if r.scheme == scheme and r.seed == seed and r.iteration == -1]
            assert len(summary) == 1
            assert summary[0].wasr == pytest.approx(max(wasr))
            assert all(r.wasr >= 0 for r in trace)


def test_run_convergence_scheme_subset():
    records = run_convergence(tiny_config(), seeds=[0], bcd_config=tiny_bcd(), schemes=(SchemeKind.RSMA,))
    assert {r.scheme for r in records} == {"RSMA"}


def test_csv_write_read_deterministic(tmp_path):
    records = run_convergence(tiny_config(), seeds=[0], bcd_config=tiny_bcd())
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_records(records, p1)
    write_records(run_convergence(tiny_config(), seeds=[0], bcd_config=tiny_bcd()), p2)

    def data_columns(path):  # all columns except the wall-clock one
        return [line.rsplit(",", 1)[0] for line in path.read_text().splitlines()]

    assert data_columns(p1) == data_columns(p2)
    loaded = read_records(p1)
    assert len(loaded) == len(records)
    assert loaded[0].experiment == "convergence"
    assert p1.read_text().splitlines()[0] == ",".join(CSV_HEADER)


def test_run_sweep_values_and_averages():
    records = run_sweep(
        tiny_config(), "pt", [0.0, 10.0], seeds=[0, 1], bcd_config=tiny_bcd(),
        schemes=(SchemeKind.RSMA,),
    )
    per_seed = [r for r in records if r.seed >= 0]
    averages = [r for r in records if r.seed == -1]
    assert len(per_seed) == 4 and len(averages) == 2
    for avg in averages:
        members = [r.wasr for r in per_seed if r.value == avg.value]
        assert avg.wasr == pytest.approx(np.mean(members))
        assert avg.iteration == -1
    keys = {(r.scheme, r.seed, r.value) for r in records}
    assert len(keys) == len(records)


def test_run_sweep_requires_increasing_values():
    with pytest.raises(ConfigurationError):
        run_sweep(tiny_config(), "pt", [10.0, 5.0], seeds=[0])
    with pytest.raises(ConfigurationError):
        run_sweep(tiny_config(), "bandwidth", [1.0, 2.0], seeds=[0])


def test_sweep_users_and_subarrays_reshape_config():
    records = run_sweep(
        tiny_config(), "subarrays", [2, 3], seeds=[0], bcd_config=tiny_bcd(),
        schemes=(SchemeKind.SDMA,),
    )
    assert {r.value for r in records} == {2.0, 3.0}
    records = run_sweep(
        tiny_config(), "users", [2, 3], seeds=[0], bcd_config=tiny_bcd(),
        schemes=(SchemeKind.SDMA,),
    )
    assert {r.value for r in records} == {2.0, 3.0}


def test_cli_convergence_and_sweep(tmp_path):
    cfg = dict(
        num_subarrays=2, num_users=2, elements_per_subarray=4, max_power=4.0,
        num_samples=5, pathloss_ref_db=3.0, distance_range=[1.0, 2.0], qos_threshold=0.0,
    )
    cfg_path = tmp_path / "tiny.json"
    cfg_path.write_text(json.dumps(cfg))
    out = tmp_path / "results"
    rc = main([
        "convergence", "--config", str(cfg_path), "--seeds", "0",
        "--out", str(out), "--max-iterations", "3", "--schemes", "RSMA,SDMA",
    ])
    assert rc == 0
    lines = (out / "convergence.csv").read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert len(lines) > 3
    rc = main([
        "sweep", "--var", "pt", "--values", "0,5", "--config", str(cfg_path),
        "--seeds", "0", "--out", str(out), "--max-iterations", "3", "--schemes", "RSMA",
    ])
    assert rc == 0
    assert (out / "sweep_pt.csv").exists()


def test_failed_runs_recorded_as_nan_rows():
    config = tiny_config().with_overrides(qos_threshold=50.0)  # unattainable
    bcd = BcdConfig(max_iterations=2, infeasible_qos_policy="abort")
    records = run_convergence(config, seeds=[0], bcd_config=bcd, schemes=(SchemeKind.RSMA,))
    assert len(records) == 1
    assert records[0].iteration == -1 and np.isnan(records[0].wasr)
    sweep = run_sweep(config, "pt", [0.0, 5.0], seeds=[0], bcd_config=bcd, schemes=(SchemeKind.RSMA,))
    per_seed = [r for r in sweep if r.seed >= 0]
    assert all(np.isnan(r.wasr) for r in per_seed)


def test_cli_validate():
    assert main(["validate"]) == 0
