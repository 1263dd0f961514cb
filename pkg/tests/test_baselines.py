"""Mean and combinatorial-optimization baselines."""

import itertools

import numpy as np
import pytest

from wattscope import baselines, nn
from wattscope.baselines import (
    co_fit,
    co_predict,
    load_baseline,
    mean_fit,
    mean_predict,
    save_baseline,
)
from wattscope.errors import ModelFormatError, StateSpaceTooLarge, UnknownJob


def test_mean_constant_prediction():
    model = mean_fit({"a": [41.8, 41.8, 41.8]})
    pred = mean_predict(model, np.zeros(5))
    assert pred["a"].tolist() == [41.8] * 5


def test_mean_prediction_ignores_aggregate():
    model = mean_fit({"a": [10.0, 30.0]})
    lo = mean_predict(model, np.zeros(4))["a"]
    hi = mean_predict(model, np.full(4, 1e6))["a"]
    assert np.array_equal(lo, hi)
    assert np.var(lo) == 0.0


def test_mean_mae_equals_mad_oracle():
    rng = np.random.default_rng(0)
    # magnitudes in the tens of watts, like a busy shared server
    for mean_w in (41.8, 18.0, 24.9, 35.6, 11.0):
        train = np.clip(mean_w + 8 * rng.standard_normal(300), 0, 200)
        test = np.clip(mean_w + 8 * rng.standard_normal(150), 0, 200)
        model = mean_fit({"j": train})
        pred = mean_predict(model, np.zeros(150))["j"]
        mu = train.mean()
        mad = np.mean(np.abs(test - mu))
        assert np.mean(np.abs(pred - test)) == pytest.approx(mad, rel=1e-9)


def test_mean_unknown_job():
    with pytest.raises(UnknownJob):
        mean_fit({"a": []})
    model = mean_fit({"a": [1.0]})
    with pytest.raises(UnknownJob):
        mean_predict(model, np.zeros(3), job_ids=["b"])


def test_co_fit_states_are_quantiles():
    series = np.arange(101, dtype=float)  # 0..100
    model = co_fit({"a": series}, k=4)
    states = model.job_states_w["a"]
    assert states == sorted(states)
    assert states[0] == series.min()
    assert states[-1] == series.max()
    assert states == pytest.approx([0.0, 100 / 3, 200 / 3, 100.0])


def test_co_fit_needs_two_states():
    with pytest.raises(StateSpaceTooLarge):
        co_fit({"a": [1.0, 2.0]}, k=1)


def two_job_model():
    return baselines.CoModel(job_states_w={"a": [0.0, 10.0], "b": [0.0, 20.0]})


def test_co_exact_combination():
    pred = co_predict(two_job_model(), [30.0])
    assert pred["a"][0] == 10.0
    assert pred["b"][0] == 20.0


def test_co_zero_aggregate():
    pred = co_predict(two_job_model(), [0.0, 0.0])
    assert pred["a"].tolist() == [0.0, 0.0]
    assert pred["b"].tolist() == [0.0, 0.0]


def test_co_tie_breaks_lexicographic():
    model = baselines.CoModel(job_states_w={"a": [0.0, 10.0], "b": [0.0, 10.0]})
    # (0,10) and (10,0) both reconstruct 10 exactly; the first job takes
    # the lower state
    pred = co_predict(model, [10.0])
    assert pred["a"][0] == 0.0
    assert pred["b"][0] == 10.0


def test_co_equidistant_prefers_lower_total():
    model = baselines.CoModel(job_states_w={"a": [0.0, 10.0]})
    pred = co_predict(model, [5.0])
    assert pred["a"][0] == 0.0


def brute_force_co(agg, states_by_job):
    """Independent oracle: try every combination per timestep."""
    ids = list(states_by_job)
    out = {j: [] for j in ids}
    for p in agg:
        best = None
        for combo in itertools.product(*(states_by_job[j] for j in ids)):
            key = (abs(p - sum(combo)), sum(combo), combo)
            if best is None or key < best:
                best = key
        for j, v in zip(ids, best[2]):
            out[j].append(v)
    return {j: np.asarray(v) for j, v in out.items()}


def test_co_exhaustive_matches_brute_force():
    rng = np.random.default_rng(42)
    checked = 0
    for trial in range(200):
        n_jobs = int(rng.integers(1, 5))
        k = int(rng.integers(2, 5))
        if k**n_jobs > 10**4:
            continue
        states = {}
        for j in range(n_jobs):
            # distinct levels on a coarse grid force plenty of exact ties
            # across jobs without degenerate repeated states within one
            levels = np.sort(rng.choice(np.arange(7), size=k, replace=False) * 10.0)
            states[f"j{j}"] = [float(v) for v in levels]
        model = baselines.CoModel(job_states_w=states)
        agg = rng.integers(0, 20, size=4) * 5.0
        got = co_predict(model, agg, mode="exhaustive")
        want = brute_force_co(agg, states)
        for j in states:
            assert np.array_equal(got[j], want[j]), (trial, j, states, agg.tolist())
        checked += 1
    assert checked >= 150


def test_co_exhaustive_too_large():
    states = {f"j{i}": [0.0, 1.0, 2.0, 3.0] for i in range(11)}  # 4^11 > 1e6
    model = baselines.CoModel(job_states_w=states)
    with pytest.raises(StateSpaceTooLarge):
        co_predict(model, [5.0], mode="exhaustive")


def test_co_auto_falls_back_to_greedy():
    states = {f"j{i}": [0.0, 1.0, 2.0, 3.0] for i in range(11)}
    model = baselines.CoModel(job_states_w=states)
    pred = co_predict(model, [12.0, 33.0, 0.0])
    total = sum(pred[j] for j in states)
    # greedy still lands on valid states and a sane residual
    for j, vals in pred.items():
        assert all(v in states[j] for v in vals)
    assert abs(total[2] - 0.0) <= 1e-12
    assert abs(total[0] - 12.0) <= 3.0


def test_co_greedy_matches_exhaustive_on_easy_instance():
    # separable instance: greedy coordinate descent reaches the optimum
    model = baselines.CoModel(job_states_w={"a": [0.0, 100.0], "b": [0.0, 1.0]})
    agg = [101.0, 1.0, 100.0, 0.0]
    ex = co_predict(model, agg, mode="exhaustive")
    gr = co_predict(model, agg, mode="greedy")
    for j in ("a", "b"):
        assert np.array_equal(ex[j], gr[j])


def test_co_residual_minimal_exhaustive():
    rng = np.random.default_rng(7)
    states = {f"j{i}": sorted(float(v) for v in rng.uniform(0, 50, 3)) for i in range(3)}
    model = baselines.CoModel(job_states_w=states)
    agg = rng.uniform(0, 150, 20)
    pred = co_predict(model, agg, mode="exhaustive")
    total = sum(pred[j] for j in states)
    for t, p in enumerate(agg):
        best = min(abs(p - sum(c)) for c in itertools.product(*states.values()))
        assert abs(p - total[t]) == pytest.approx(best, abs=1e-9)


def test_save_load_mean(tmp_path):
    model = mean_fit({"a": [10.0, 20.0], "b": [5.0]})
    save_baseline(model, str(tmp_path / "m"))
    back = load_baseline(str(tmp_path / "m"))
    assert isinstance(back, baselines.MeanModel)
    assert back.job_means_w == model.job_means_w


def test_save_load_co(tmp_path):
    model = co_fit({"a": np.arange(10.0), "b": np.arange(5.0)}, k=3)
    save_baseline(model, str(tmp_path / "m"))
    back = load_baseline(str(tmp_path / "m"))
    assert isinstance(back, baselines.CoModel)
    assert back.job_states_w == model.job_states_w


def test_load_baseline_rejects_bad_magic(tmp_path):
    model = mean_fit({"a": [1.0]})
    out = tmp_path / "m"
    save_baseline(model, str(out))
    blob = (out / "weights.bin").read_bytes()
    (out / "weights.bin").write_bytes(b"ZZZZ" + blob[4:])
    with pytest.raises(ModelFormatError):
        load_baseline(str(out))


def test_baseline_dir_shares_network_format(tmp_path):
    # both persistence paths write the same magic, so a directory listing
    # can't confuse model kinds
    save_baseline(mean_fit({"a": [1.0]}), str(tmp_path / "mean"))
    blob = (tmp_path / "mean" / "weights.bin").read_bytes()
    assert blob[:4] == nn.WEIGHT_MAGIC
