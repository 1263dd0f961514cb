"""MAE/NMAE metrics and the seeded experiment harness.

Scenarios build synthetic servers, train the sliding-window model per
target job, and report per-bucket NMAE with a p5-p95 dispersion band.
Everything derives from the scenario seed, so identical configs produce
identical reports. Sweep sizes default to desk scale.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import baselines as _baselines
from . import characterize as _char
from . import nn as _nn
from . import trace as _trace
from .errors import LengthMismatch, UnknownScenario, ZeroMeanTruth
from .library import ModelKey, ModelLibrary

SCENARIOS = (
    "variability_sweep",
    "regularity_sweep",
    "intensity_sweep",
    "scalability",
    "robustness",
    "generalization",
    "table1_style",
)


@dataclass
class MetricsReport:
    per_job: Dict[str, Tuple[float, float]]  # job -> (mae_w, nmae)
    aggregate_mae_w: float
    aggregate_nmae: float
    scenario: str


@dataclass
class ScenarioConfig:
    name: str
    seed: int = 0
    cap_w: float = 200.0
    interval_s: int = 300
    train_samples: int = 2016  # 7 days at 300 s
    test_samples: int = 576  # 2 days
    network: Optional[_nn.NetworkConfig] = None

    def net(self, seed: int) -> _nn.NetworkConfig:
        if self.network is not None:
            return _nn.NetworkConfig(
                **{**self.network.__dict__, "seed": seed}
            )
        return _nn.desk_config(seed=seed)


def mae(pred: Sequence[float], truth: Sequence[float]) -> float:
    p = np.asarray(pred, dtype=float)
    t = np.asarray(truth, dtype=float)
    if p.shape != t.shape or p.ndim != 1 or len(p) < 1:
        raise LengthMismatch(f"shapes {p.shape} vs {t.shape}")
    return float(np.mean(np.abs(p - t)))


def nmae(pred: Sequence[float], truth: Sequence[float]) -> float:
    t = np.asarray(truth, dtype=float)
    m = mae(pred, truth)
    denom = float(t.mean())
    if denom <= 1e-9:
        raise ZeroMeanTruth(f"mean true power {denom} too small to normalize")
    return m / denom


def _unit_seed(base: int, label: str) -> int:
    digest = hashlib.blake2b(f"{base}:{label}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little") % (2**63)


def _make_job(
    job_id: str,
    T: int,
    cap: float,
    interval_s: int,
    seed: int,
    cov: float,
    period: Optional[int],
    mean_w: float,
    score: float = 0.8,
) -> _trace.JobSeries:
    spec = _trace.SyntheticJobSpec(
        target_cov=cov,
        period_samples=period,
        period_score_target=score,
        mean_power_w=mean_w,
        noise_seed=seed,
    )
    job = _trace.generate_synthetic_job(spec, T, cap=cap, interval_s=interval_s)
    job.job_id = job_id
    return job


_BACKGROUND_MIX = (
    # (cov, period, mean_w)
    (0.30, 288, 70.0),
    (0.15, 144, 40.0),
    (0.00, None, 50.0),
    (0.60, None, 30.0),
)


def _background_jobs(sc: ScenarioConfig, T: int, label: str, n: int = 4) -> List[_trace.JobSeries]:
    jobs = []
    for i in range(n):
        cov, period, mean_w = _BACKGROUND_MIX[i % len(_BACKGROUND_MIX)]
        jobs.append(
            _make_job(
                f"bg{i}",
                T,
                sc.cap_w,
                sc.interval_s,
                _unit_seed(sc.seed, f"{label}/bg{i}"),
                cov,
                period,
                mean_w,
            )
        )
    return jobs


def _train_target(
    sc: ScenarioConfig, server: _trace.ServerTrace, job_id: str, train_T: int, label: str
) -> _nn.TrainedModel:
    job = server.job(job_id)
    return _nn.train(
        sc.net(_unit_seed(sc.seed, f"{label}/net")),
        [(server.aggregate_w[:train_T], job.power_w[:train_T])],
        cap=sc.cap_w,
    )


def _test_metrics(
    model: _nn.TrainedModel, server: _trace.ServerTrace, job_id: str, train_T: int
) -> Tuple[float, float, np.ndarray, np.ndarray]:
    preds = _nn.forward_series(model, server.aggregate_w)[train_T:]
    truth = server.job(job_id).power_w[train_T:]
    return mae(preds, truth), nmae(preds, truth), preds, truth


def _bucket_report(
    scenario: str, bucket: str, jobs: Dict[str, Tuple[float, float]], preds, truths
) -> Tuple[MetricsReport, Dict]:
    all_pred = np.concatenate(preds)
    all_truth = np.concatenate(truths)
    report = MetricsReport(
        per_job=jobs,
        aggregate_mae_w=mae(all_pred, all_truth),
        aggregate_nmae=nmae(all_pred, all_truth),
        scenario=f"{scenario}/{bucket}",
    )
    nmaes = [v[1] for v in jobs.values()]
    row = {
        "bucket": bucket,
        "mean_nmae": float(np.mean(nmaes)),
        "p5": float(np.percentile(nmaes, 5)),
        "p95": float(np.percentile(nmaes, 95)),
        "n_jobs": len(nmaes),
    }
    return report, row


def _sweep(sc: ScenarioConfig, buckets: Dict[str, List[Tuple[float, Optional[int], float, float]]]):
    """Generic per-bucket sweep: each entry (cov, period, mean_w, score) gets
    its own 5-job server; the target model is trained and scored per job."""
    T = sc.train_samples + sc.test_samples
    reports, rows = [], []
    for bucket, entries in buckets.items():
        jobs_out, preds, truths = {}, [], []
        for i, (cov, period, mean_w, score) in enumerate(entries):
            label = f"{sc.name}/{bucket}/{i}"
            target = _make_job(
                f"target{i}",
                T,
                sc.cap_w,
                sc.interval_s,
                _unit_seed(sc.seed, label),
                cov,
                period,
                mean_w,
                score,
            )
            server = _trace.synthesize_server(
                [target] + _background_jobs(sc, T, label), cap=sc.cap_w
            )
            model = _train_target(sc, server, target.job_id, sc.train_samples, label)
            m, n, p, t = _test_metrics(model, server, target.job_id, sc.train_samples)
            jobs_out[f"{bucket}:{i}"] = (m, n)
            preds.append(p)
            truths.append(t)
        rep, row = _bucket_report(sc.name, bucket, jobs_out, preds, truths)
        reports.append(rep)
        rows.append(row)
    return reports, rows


def _run_variability(sc: ScenarioConfig):
    return _sweep(
        sc,
        {
            "cov[0.0,0.2)": [(c, 144, 60.0, 0.8) for c in (0.05, 0.10, 0.15)],
            "cov[0.2,0.6)": [(c, 144, 60.0, 0.8) for c in (0.30, 0.40, 0.50)],
            "cov[0.6,1.0)": [(c, 144, 60.0, 0.8) for c in (0.65, 0.75, 0.85)],
        },
    )


def _run_regularity(sc: ScenarioConfig):
    return _sweep(
        sc,
        {
            "score~0.1": [(0.4, 144, 60.0, 0.10) for _ in range(3)],
            "score~0.4": [(0.4, 144, 60.0, 0.40) for _ in range(3)],
            "score~0.8": [(0.4, 144, 60.0, 0.85) for _ in range(3)],
        },
    )


def _run_intensity(sc: ScenarioConfig):
    return _sweep(
        sc,
        {
            "low": [(0.3, 144, 20.0, 0.8) for _ in range(3)],
            "medium": [(0.3, 144, 60.0, 0.8) for _ in range(3)],
            "high": [(0.3, 144, 130.0, 0.8) for _ in range(3)],
        },
    )


def _run_scalability(sc: ScenarioConfig):
    T = sc.train_samples + sc.test_samples
    reports, rows = [], []
    for n_bg in (5, 10, 20):
        bucket = f"n={n_bg}"
        jobs_out, preds, truths = {}, [], []
        for rep_i in range(2):
            label = f"{sc.name}/{bucket}/{rep_i}"
            # same target spec across n, fresh backgrounds per server
            target = _make_job(
                "target",
                T,
                sc.cap_w,
                sc.interval_s,
                _unit_seed(sc.seed, f"{sc.name}/target/{rep_i}"),
                0.3,
                144,
                60.0,
            )
            server = _trace.synthesize_server(
                [target] + _background_jobs(sc, T, label, n=n_bg), cap=sc.cap_w
            )
            model = _train_target(sc, server, "target", sc.train_samples, label)
            m, n, p, t = _test_metrics(model, server, "target", sc.train_samples)
            jobs_out[f"{bucket}:{rep_i}"] = (m, n)
            preds.append(p)
            truths.append(t)
        rep, row = _bucket_report(sc.name, bucket, jobs_out, preds, truths)
        reports.append(rep)
        rows.append(row)
    return reports, rows


def _run_robustness(sc: ScenarioConfig):
    sizes = (500, 1500, 4000)
    T = max(sizes) + sc.test_samples
    label = f"{sc.name}/server"
    target = _make_job(
        "target", T, sc.cap_w, sc.interval_s, _unit_seed(sc.seed, label), 0.3, 144, 60.0
    )
    server = _trace.synthesize_server([target] + _background_jobs(sc, T, label), cap=sc.cap_w)
    reports, rows = [], []
    for size in sizes:
        bucket = f"train={size}"
        # train on the `size` samples immediately before the shared test span
        lo = T - sc.test_samples - size
        job = server.job("target")
        model = _nn.train(
            sc.net(_unit_seed(sc.seed, f"{label}/{size}/net")),
            [(server.aggregate_w[lo : lo + size], job.power_w[lo : lo + size])],
            cap=sc.cap_w,
        )
        preds = _nn.forward_series(model, server.aggregate_w)[T - sc.test_samples :]
        truth = job.power_w[T - sc.test_samples :]
        m, n = mae(preds, truth), nmae(preds, truth)
        rep, row = _bucket_report(sc.name, bucket, {bucket: (m, n)}, [preds], [truth])
        reports.append(rep)
        rows.append(row)
    return reports, rows


_TABLE1_JOBS = (
    # (job_id, cov, period, mean_w, score)
    ("job1", 0.50, 288, 60.0, 0.8),
    ("job2", 0.15, 144, 30.0, 0.8),
    ("job3", 0.00, None, 50.0, 0.8),
    ("job4", 0.80, 288, 100.0, 0.8),
    ("job5", 1.00, None, 10.0, 0.8),
)


def build_table1_server(
    seed: int, T: int, cap: float = 200.0, interval_s: int = 300
) -> _trace.ServerTrace:
    """Five jobs spanning the variability/regularity/intensity classes."""
    jobs = [
        _make_job(job_id, T, cap, interval_s, _unit_seed(seed, f"table1/{job_id}"), c, p, mw, s)
        for job_id, c, p, mw, s in _TABLE1_JOBS
    ]
    return _trace.synthesize_server(jobs, cap=cap, server_id=f"table1-{seed}")


def _run_table1(sc: ScenarioConfig):
    T = sc.train_samples + sc.test_samples
    server = build_table1_server(sc.seed, T, cap=sc.cap_w, interval_s=sc.interval_s)
    train_T = sc.train_samples
    train_data = {j.job_id: j.power_w[:train_T] for j in server.jobs}
    test_truth = {j.job_id: j.power_w[train_T:] for j in server.jobs}
    test_agg = server.aggregate_w[train_T:]

    predictions: Dict[str, Dict[str, np.ndarray]] = {}
    mean_model = _baselines.mean_fit(train_data)
    predictions["Mean"] = _baselines.mean_predict(mean_model, test_agg)
    co_model = _baselines.co_fit(train_data)
    predictions["CO"] = _baselines.co_predict(co_model, test_agg)
    sw = {}
    for j in server.jobs:
        model = _train_target(sc, server, j.job_id, train_T, f"{sc.name}/{j.job_id}")
        sw[j.job_id] = _nn.forward_series(model, server.aggregate_w)[train_T:]
    predictions["SlidingWindow"] = sw

    reports, rows = [], []
    for model_type in ("Mean", "CO", "SlidingWindow"):
        per_job = {
            j: (mae(predictions[model_type][j], test_truth[j]), nmae(predictions[model_type][j], test_truth[j]))
            for j in train_data
        }
        total_pred = np.sum([predictions[model_type][j] for j in train_data], axis=0)
        rep = MetricsReport(
            per_job=per_job,
            aggregate_mae_w=mae(total_pred, test_agg),
            aggregate_nmae=nmae(total_pred, test_agg),
            scenario=f"{sc.name}/{model_type}",
        )
        nmaes = [v[1] for v in per_job.values()]
        rows.append(
            {
                "bucket": model_type,
                "mean_nmae": float(np.mean(nmaes)),
                "p5": float(np.percentile(nmaes, 5)),
                "p95": float(np.percentile(nmaes, 95)),
                "n_jobs": len(nmaes),
            }
        )
        reports.append(rep)
    return reports, rows


def _run_generalization(sc: ScenarioConfig):
    """Train on one server, select by class triple (no tag) for a second
    server's jobs, and score the reused models there."""
    import tempfile

    T = sc.train_samples + sc.test_samples
    server_a = build_table1_server(_unit_seed(sc.seed, "gen/A"), T, sc.cap_w, sc.interval_s)
    server_b = build_table1_server(_unit_seed(sc.seed, "gen/B"), T, sc.cap_w, sc.interval_s)
    train_T = sc.train_samples
    with tempfile.TemporaryDirectory() as tmp:
        lib = ModelLibrary(tmp)
        for j in server_a.jobs:
            model = _train_target(sc, server_a, j.job_id, train_T, f"{sc.name}/A/{j.job_id}")
            prof = _char.profile(j.power_w[:train_T], cap=sc.cap_w)
            key = ModelKey(
                variability=prof.classes.variability,
                regularity=prof.classes.regularity,
                intensity=prof.classes.intensity,
                n_background=len(server_a.jobs) - 1,
                model_type="SlidingWindow",
                job_tag=f"A/{j.job_id}",
            )
            lib.store(model, key)
        jobs_out, preds, truths = {}, [], []
        for j in server_b.jobs:
            prof = _char.profile(j.power_w[:train_T], cap=sc.cap_w)
            query = ModelKey(
                variability=prof.classes.variability,
                regularity=prof.classes.regularity,
                intensity=prof.classes.intensity,
                n_background=len(server_b.jobs) - 1,
                model_type="SlidingWindow",
            )
            model, _dist = lib.select(query)
            p = _nn.forward_series(model, server_b.aggregate_w)[train_T:]
            t = j.power_w[train_T:]
            jobs_out[j.job_id] = (mae(p, t), nmae(p, t))
            preds.append(p)
            truths.append(t)
    rep, row = _bucket_report(sc.name, "cross_server", jobs_out, preds, truths)
    return [rep], [row]


_RUNNERS = {
    "variability_sweep": _run_variability,
    "regularity_sweep": _run_regularity,
    "intensity_sweep": _run_intensity,
    "scalability": _run_scalability,
    "robustness": _run_robustness,
    "generalization": _run_generalization,
    "table1_style": _run_table1,
}


def run_experiment(
    scenario: ScenarioConfig, out_dir: Optional[str] = None
) -> Tuple[List[MetricsReport], List[Dict]]:
    """Run one scenario; optionally write `<name>.csv` and a JSON summary."""
    if scenario.name not in _RUNNERS:
        raise UnknownScenario(f"scenario must be one of {SCENARIOS}, got {scenario.name!r}")
    reports, rows = _RUNNERS[scenario.name](scenario)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, f"{scenario.name}.csv"), "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=["bucket", "mean_nmae", "p5", "p95", "n_jobs"])
            writer.writeheader()
            writer.writerows(rows)
        summary = [
            {
                "scenario": r.scenario,
                "per_job": {k: [v[0], v[1]] for k, v in r.per_job.items()},
                "aggregate_mae_w": r.aggregate_mae_w,
                "aggregate_nmae": r.aggregate_nmae,
            }
            for r in reports
        ]
        with open(os.path.join(out_dir, f"{scenario.name}_summary.json"), "w") as f:
            json.dump(summary, f, indent=2, sort_keys=True)
    return reports, rows
