"""Trace parsing, synthetic job generation, and server composition."""

import collections

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wattscope import characterize, powermodel, trace
from wattscope.errors import (
    GapTooLong,
    InfeasibleSpec,
    IrregularInterval,
    LengthMismatch,
    MalformedRow,
    MixedInputs,
)
from wattscope.trace import (
    BaseloadPolicy,
    JobSeries,
    SyntheticJobSpec,
    TraceFormat,
    generate_synthetic_job,
    parse_job_trace,
    synthesize_server,
)


def usage_csv(rows):
    return "timestamp,job_id,cpu_util,mem_gb\n" + "\n".join(rows) + "\n"


def power_csv(rows):
    return "timestamp,job_id,power_w\n" + "\n".join(rows) + "\n"


def test_parse_two_rows_echo():
    out = parse_job_trace(usage_csv(["0,a,0.5,1.0", "300,a,0.5,1.0"]), TraceFormat.UsageCsv)
    assert len(out) == 1
    job = out[0]
    assert job.T == 2
    assert job.sampling_interval_s == 300
    assert job.cpu_util.tolist() == [0.5, 0.5]
    assert job.mem_gb.tolist() == [1.0, 1.0]
    assert not job.has_power


def test_parse_accepts_bytes_and_streams(tmp_path):
    text = power_csv(["0,a,10.0", "300,a,12.5"])
    from_str = parse_job_trace(text, TraceFormat.PowerCsv)
    from_bytes = parse_job_trace(text.encode(), TraceFormat.PowerCsv)
    p = tmp_path / "t.csv"
    p.write_text(text)
    with open(p, "rb") as f:
        from_file = parse_job_trace(f, TraceFormat.PowerCsv)
    for out in (from_str, from_bytes, from_file):
        assert out[0].power_w.tolist() == [10.0, 12.5]
        assert out[0].has_power


def test_parse_alternating_interval_rejected():
    rows = []
    t = 0
    for i in range(10):
        rows.append(f"{t},a,0.1,0.0")
        t += 300 if i % 2 == 0 else 600
    with pytest.raises(IrregularInterval):
        parse_job_trace(usage_csv(rows), TraceFormat.UsageCsv)


def test_parse_three_jobs_matches_group_by_oracle():
    rows = []
    for k in range(288):
        for jid in ("alpha", "beta", "gamma"):
            rows.append(f"{k * 300},{jid},{(k % 7) / 10},{k % 3}")
    text = usage_csv(rows)
    # independent count: group the raw lines by their job_id column
    counts = collections.Counter(line.split(",")[1] for line in text.splitlines()[1:])
    out = parse_job_trace(text, TraceFormat.UsageCsv)
    assert sorted(j.job_id for j in out) == sorted(counts)
    for j in out:
        assert j.T == counts[j.job_id] == 288


def test_parse_forward_fills_short_gap():
    # delta 1200s = 3 missing samples at 300s cadence, filled from the left
    rows = ["0,a,10.0", "300,a,20.0", "1500,a,30.0", "1800,a,40.0", "2100,a,41.0",
            "2400,a,42.0", "2700,a,43.0", "3000,a,44.0"]
    out = parse_job_trace(power_csv(rows), TraceFormat.PowerCsv)
    assert out[0].power_w.tolist() == [10.0, 20.0, 20.0, 20.0, 20.0, 30.0, 40.0,
                                       41.0, 42.0, 43.0, 44.0]


def test_parse_long_gap_rejected():
    rows = ["0,a,1.0", "300,a,1.0", "1800,a,1.0"]  # 4 missing samples
    with pytest.raises(GapTooLong):
        parse_job_trace(power_csv(rows), TraceFormat.PowerCsv)


@pytest.mark.parametrize(
    "text",
    [
        "timestamp,job,power_w\n0,a,1.0\n",  # wrong header
        power_csv(["0,a"]),  # missing field
        power_csv(["0,a,notanumber"]),
        power_csv([]).rstrip("\n"),  # header only
        "",
    ],
)
def test_parse_malformed_rejected(text):
    with pytest.raises(MalformedRow):
        parse_job_trace(text, TraceFormat.PowerCsv)


def test_parse_duplicate_timestamp_rejected():
    with pytest.raises(IrregularInterval):
        parse_job_trace(power_csv(["0,a,1.0", "0,a,2.0"]), TraceFormat.PowerCsv)


def test_generate_zero_cov_is_constant():
    spec = SyntheticJobSpec(target_cov=0.0, period_samples=None, mean_power_w=50.0)
    job = generate_synthetic_job(spec, 100)
    assert np.all(job.power_w == 50.0)
    assert job.has_power


def test_generate_hits_cov_and_period():
    spec = SyntheticJobSpec(target_cov=0.5, period_samples=288, mean_power_w=60.0,
                            noise_seed=7)
    job = generate_synthetic_job(spec, 2016)
    assert 0.45 <= characterize.cov(job.power_w) <= 0.55
    periods = characterize.detect_periods(job.power_w)
    assert periods, "expected a detected period"
    assert abs(periods[0].period_samples - 288) <= 2


def test_generate_infeasible_cov_rejected():
    # the widest distribution on [0,200] with mean 195 has std sqrt(195*5)=31.2W,
    # so CoV tops out around 0.16
    spec = SyntheticJobSpec(target_cov=2.0, mean_power_w=195.0)
    with pytest.raises(InfeasibleSpec):
        generate_synthetic_job(spec, 500, cap=200.0)


def test_generate_needs_two_periods():
    spec = SyntheticJobSpec(target_cov=0.3, period_samples=288, mean_power_w=50.0)
    with pytest.raises(InfeasibleSpec):
        generate_synthetic_job(spec, 500)


def test_generate_mean_above_cap_rejected():
    with pytest.raises(InfeasibleSpec):
        generate_synthetic_job(SyntheticJobSpec(mean_power_w=250.0), 100, cap=200.0)


def test_generate_deterministic():
    spec = SyntheticJobSpec(target_cov=0.4, period_samples=96, mean_power_w=70.0,
                            noise_seed=123)
    a = generate_synthetic_job(spec, 400)
    b = generate_synthetic_job(spec, 400)
    assert np.array_equal(a.power_w, b.power_w)


@pytest.mark.parametrize("cov_t", [0.1, 0.3, 0.5, 0.8])
@pytest.mark.parametrize("mean_w", [20.0, 50.0, 100.0])
@pytest.mark.parametrize("period", [None, 96])
def test_generate_cov_tolerance_grid(cov_t, mean_w, period):
    spec = SyntheticJobSpec(target_cov=cov_t, period_samples=period,
                            mean_power_w=mean_w, noise_seed=11)
    job = generate_synthetic_job(spec, 600)
    assert abs(characterize.cov(job.power_w) - cov_t) <= 0.05
    assert job.power_w.min() >= 0.0
    assert job.power_w.max() <= 200.0


def test_generate_sine_template():
    spec = SyntheticJobSpec(target_cov=0.3, period_samples=96, mean_power_w=60.0,
                            template="sine", period_score_target=0.9)
    job = generate_synthetic_job(spec, 600)
    periods = characterize.detect_periods(job.power_w)
    assert periods and abs(periods[0].period_samples - 96) <= 2


def constant_job(job_id, watts, T=50):
    return JobSeries(job_id=job_id, cpu_util=np.zeros(T), mem_gb=np.zeros(T),
                     power_w=np.full(T, watts), has_power=True)


def test_synthesize_constant_sum():
    server = synthesize_server([constant_job(f"j{i}", 40.0) for i in range(5)])
    assert np.allclose(server.aggregate_w, 200.0)
    assert server.T == 50


def test_synthesize_full_utilization_peaks_at_cap_times_n():
    curve = powermodel.reference_curve()
    for n in (2, 5):
        jobs = [
            JobSeries(job_id=f"j{i}", cpu_util=np.ones(10), mem_gb=np.zeros(10),
                      power_w=np.zeros(10), has_power=False)
            for i in range(n)
        ]
        server = synthesize_server(jobs, model=curve, cap=200.0)
        assert np.allclose(server.aggregate_w, 200.0 * n)


def test_synthesize_matches_elementwise_sum_oracle():
    jobs = [
        generate_synthetic_job(
            SyntheticJobSpec(target_cov=0.3, period_samples=None, mean_power_w=m,
                             noise_seed=s),
            120,
        )
        for s, m in ((1, 30.0), (2, 55.0), (3, 80.0))
    ]
    server = synthesize_server(jobs)
    total = [sum(j.power_w[t] for j in jobs) for t in range(120)]
    assert np.allclose(server.aggregate_w, total, rtol=0, atol=0)


def test_synthesize_mixed_inputs_rejected():
    usage = JobSeries(job_id="u", cpu_util=np.full(10, 0.5), mem_gb=np.zeros(10),
                      power_w=np.zeros(10), has_power=False)
    with pytest.raises(MixedInputs):
        synthesize_server([usage, constant_job("p", 40.0, T=10)])
    with pytest.raises(MixedInputs):
        synthesize_server([usage])  # usage path needs a curve


def test_synthesize_length_mismatch_rejected():
    with pytest.raises(LengthMismatch):
        synthesize_server([constant_job("a", 10.0, T=10), constant_job("b", 10.0, T=11)])
    with pytest.raises(LengthMismatch):
        synthesize_server([])


def test_synthesize_equal_share_splits_baseload():
    curve = powermodel.reference_curve()
    jobs = [
        JobSeries(job_id=f"j{i}", cpu_util=np.zeros(8), mem_gb=np.zeros(8),
                  power_w=np.zeros(8), has_power=False)
        for i in range(4)
    ]
    server = synthesize_server(jobs, model=curve, cap=200.0,
                               policy=BaseloadPolicy.EqualShare)
    share = curve.baseload_w * (200.0 / curve.peak_w) / 4
    for j in server.jobs:
        assert np.allclose(j.power_w, share)


@settings(max_examples=30, deadline=None)
@given(
    means=st.lists(st.floats(5.0, 150.0), min_size=1, max_size=6),
    seed=st.integers(0, 2**31),
)
def test_conservation_property(means, seed):
    jobs = [
        generate_synthetic_job(
            SyntheticJobSpec(target_cov=0.2, mean_power_w=m, noise_seed=seed + i),
            80,
        )
        for i, m in enumerate(means)
    ]
    for i, j in enumerate(jobs):
        j.job_id = f"j{i}"
    server = synthesize_server(jobs)
    total = np.sum([j.power_w for j in server.jobs], axis=0)
    mask = server.aggregate_w > 0
    rel = np.abs(server.aggregate_w - total)[mask] / server.aggregate_w[mask]
    assert rel.max(initial=0.0) <= 1e-9


def test_server_round_trip(tmp_path):
    jobs = [
        generate_synthetic_job(
            SyntheticJobSpec(target_cov=0.4, period_samples=48, mean_power_w=m,
                             noise_seed=i),
            200,
        )
        for i, m in enumerate((25.0, 60.0, 90.0))
    ]
    for i, j in enumerate(jobs):
        j.job_id = f"job-{i}"
    server = synthesize_server(jobs, server_id="rt")
    out = tmp_path / "trace"
    trace.save_server_trace(server, str(out))
    back = trace.load_server_trace(str(out))
    assert back.server_id == "rt"
    assert [j.job_id for j in back.jobs] == [j.job_id for j in server.jobs]
    assert np.array_equal(back.aggregate_w, server.aggregate_w)
    for a, b in zip(server.jobs, back.jobs):
        assert np.array_equal(a.power_w, b.power_w)
        assert b.sampling_interval_s == a.sampling_interval_s
