"""Metrics and the experiment harness."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wattscope import eval as weval
from wattscope import nn
from wattscope.errors import LengthMismatch, UnknownScenario, ZeroMeanTruth
from wattscope.eval import ScenarioConfig, mae, nmae, run_experiment


def test_mae_hand_values():
    assert mae([10.0, 20.0], [12.0, 16.0]) == 3.0
    assert mae([5.0, 5.0], [5.0, 5.0]) == 0.0


def test_nmae_hand_values():
    assert nmae([0.0, 0.0], [10.0, 10.0]) == 1.0
    truth = np.full(100, 18.0)
    pred = truth + 3.76
    assert nmae(pred, truth) == pytest.approx(3.76 / 18.0)
    assert nmae([7.0, 7.0], [7.0, 7.0]) == 0.0


def test_metric_input_validation():
    with pytest.raises(LengthMismatch):
        mae([1.0], [1.0, 2.0])
    with pytest.raises(LengthMismatch):
        mae([], [])
    with pytest.raises(LengthMismatch):
        mae([[1.0, 2.0]], [[1.0, 2.0]])
    with pytest.raises(ZeroMeanTruth):
        nmae([1.0, 2.0], [0.0, 0.0])
    with pytest.raises(ZeroMeanTruth):
        nmae([1.0, 2.0], [5.0, -5.0])


def test_nmae_times_mean_recovers_mae():
    rng = np.random.default_rng(0)
    for _ in range(100):
        T = int(rng.integers(2, 400))
        truth = rng.uniform(1.0, 200.0, T)
        pred = np.clip(truth + rng.normal(0, 20, T), 0, None)
        m, n = mae(pred, truth), nmae(pred, truth)
        assert abs(n * truth.mean() - m) <= 1e-9 * m + 1e-15


@given(
    truth=st.lists(st.floats(0.5, 300.0), min_size=1, max_size=50),
    noise=st.floats(-30.0, 30.0),
)
def test_metric_identity_property(truth, noise):
    pred = [v + noise for v in truth]
    assert nmae(pred, truth) * np.mean(truth) == pytest.approx(abs(noise), rel=1e-9)


def test_unknown_scenario():
    with pytest.raises(UnknownScenario):
        run_experiment(ScenarioConfig(name="fig9_style"))


SMALL = dict(
    seed=0,
    train_samples=600,
    test_samples=120,
    network=nn.desk_config(epochs=1),
)


def test_table1_runs_and_reports(tmp_path):
    reports, rows = run_experiment(
        ScenarioConfig(name="table1_style", **SMALL), out_dir=str(tmp_path)
    )
    assert [r.scenario for r in reports] == [
        "table1_style/Mean", "table1_style/CO", "table1_style/SlidingWindow"
    ]
    for rep in reports:
        assert set(rep.per_job) == {"job1", "job2", "job3", "job4", "job5"}
        for m, n in rep.per_job.values():
            assert m >= 0 and n >= 0
        assert rep.aggregate_mae_w >= 0
    assert [row["bucket"] for row in rows] == ["Mean", "CO", "SlidingWindow"]
    assert all(row["n_jobs"] == 5 for row in rows)


def test_output_files_format(tmp_path):
    run_experiment(ScenarioConfig(name="table1_style", **SMALL), out_dir=str(tmp_path))
    csv_text = (tmp_path / "table1_style.csv").read_text()
    lines = csv_text.strip().splitlines()
    assert lines[0] == "bucket,mean_nmae,p5,p95,n_jobs"
    assert len(lines) == 4
    first = lines[1].split(",")
    assert first[0] == "Mean"
    float(first[1]), float(first[2]), float(first[3])
    assert first[4] == "5"
    assert (tmp_path / "table1_style_summary.json").exists()


def test_experiment_deterministic(tmp_path):
    outs = []
    for sub in ("one", "two"):
        out = tmp_path / sub
        run_experiment(ScenarioConfig(name="table1_style", **SMALL), out_dir=str(out))
        outs.append(
            (
                (out / "table1_style.csv").read_bytes(),
                (out / "table1_style_summary.json").read_bytes(),
            )
        )
    assert outs[0] == outs[1]


def test_seed_changes_report():
    a, _ = run_experiment(ScenarioConfig(name="table1_style", **SMALL))
    b, _ = run_experiment(ScenarioConfig(name="table1_style", **{**SMALL, "seed": 1}))
    assert a[0].per_job != b[0].per_job


def test_build_table1_server_mix():
    server = weval.build_table1_server(0, 600)
    assert [j.job_id for j in server.jobs] == ["job1", "job2", "job3", "job4", "job5"]
    total = sum(j.power_w for j in server.jobs)
    assert np.allclose(server.aggregate_w, total, atol=1e-9)
    # job3 is the constant one, job5 the irregular one
    assert np.std(server.job("job3").power_w) == pytest.approx(0.0, abs=1e-12)
    assert np.std(server.job("job5").power_w) > 1.0
