"""Job trace ingestion, synthetic job generation, and server composition.

A server trace couples an aggregate power series P(t) with the per-job
ground-truth series p_i(t) it was built from, so evaluation can score
disaggregation output against exact targets.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (
    GapTooLong,
    InfeasibleSpec,
    IrregularInterval,
    LengthMismatch,
    MalformedRow,
    MixedInputs,
    UnknownJob,
)

DEFAULT_INTERVAL_S = 300
DEFAULT_CAP_W = 200.0

# gap handling: deltas that are an integer multiple k of the base interval
# stand for k-1 missing samples; fill up to 3, reject beyond
MAX_FILL_SAMPLES = 3
# if this fraction of intervals (or more) are gap events, the cadence is not
# "fixed interval with occasional holes" but genuinely irregular
IRREGULAR_GAP_FRACTION = 0.25


class TraceFormat(Enum):
    UsageCsv = "usage"
    PowerCsv = "power"


class BaseloadPolicy(Enum):
    Proportional = "proportional"
    EqualShare = "equal_share"


@dataclass
class JobSeries:
    """One application's sampled series; all sequences share length T."""

    job_id: str
    sampling_interval_s: int = DEFAULT_INTERVAL_S
    cpu_util: np.ndarray = field(default_factory=lambda: np.zeros(0))
    mem_gb: np.ndarray = field(default_factory=lambda: np.zeros(0))
    power_w: np.ndarray = field(default_factory=lambda: np.zeros(0))
    has_power: bool = False

    def __post_init__(self):
        self.cpu_util = np.asarray(self.cpu_util, dtype=float)
        self.mem_gb = np.asarray(self.mem_gb, dtype=float)
        self.power_w = np.asarray(self.power_w, dtype=float)
        lengths = {len(self.cpu_util), len(self.mem_gb), len(self.power_w)}
        if len(lengths) != 1:
            raise LengthMismatch(
                f"job {self.job_id}: cpu/mem/power lengths differ: "
                f"{len(self.cpu_util)}/{len(self.mem_gb)}/{len(self.power_w)}"
            )
        if self.sampling_interval_s <= 0:
            raise IrregularInterval(f"job {self.job_id}: non-positive interval")

    @property
    def T(self) -> int:
        return len(self.power_w)


@dataclass
class ServerTrace:
    """Aggregate power plus the per-job ground truth that sums to it."""

    server_id: str
    jobs: list
    aggregate_w: np.ndarray
    per_job_cap_w: float = DEFAULT_CAP_W
    baseload_policy: BaseloadPolicy = BaseloadPolicy.Proportional

    def __post_init__(self):
        self.aggregate_w = np.asarray(self.aggregate_w, dtype=float)
        lengths = {j.T for j in self.jobs} | {len(self.aggregate_w)}
        if len(lengths) != 1:
            raise LengthMismatch(f"server {self.server_id}: series lengths differ")
        intervals = {j.sampling_interval_s for j in self.jobs}
        if len(intervals) > 1:
            raise IrregularInterval(f"server {self.server_id}: mixed sampling intervals")

    @property
    def T(self) -> int:
        return len(self.aggregate_w)

    @property
    def sampling_interval_s(self) -> int:
        return self.jobs[0].sampling_interval_s if self.jobs else DEFAULT_INTERVAL_S

    def job(self, job_id: str) -> JobSeries:
        for j in self.jobs:
            if j.job_id == job_id:
                return j
        known = ", ".join(j.job_id for j in self.jobs)
        raise UnknownJob(f"no job {job_id!r} in server trace; have: {known}")


@dataclass
class SyntheticJobSpec:
    """Controls for one synthetic job: variability, period, and level."""

    target_cov: float = 0.0
    period_samples: Optional[int] = None
    period_score_target: float = 0.8
    mean_power_w: float = 50.0
    noise_seed: int = 0
    template: str = "square"  # or "sine"

    def __post_init__(self):
        if self.target_cov < 0:
            raise InfeasibleSpec("target_cov must be non-negative")
        if not (0.0 <= self.period_score_target < 1.0):
            raise InfeasibleSpec("period_score_target must be in [0,1)")
        if self.period_samples is not None and self.period_samples < 2:
            raise InfeasibleSpec("period_samples must be >= 2")


def _parse_rows(source, fmt: TraceFormat):
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        raw = source.read()
        text = raw.decode("utf-8") if isinstance(raw, bytes) else raw
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise MalformedRow("empty input")
    expected = (
        ["timestamp", "job_id", "cpu_util", "mem_gb"]
        if fmt is TraceFormat.UsageCsv
        else ["timestamp", "job_id", "power_w"]
    )
    if [h.strip() for h in header] != expected:
        raise MalformedRow(f"expected header {','.join(expected)}, got {','.join(header)}")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(expected):
            raise MalformedRow(f"line {lineno}: expected {len(expected)} fields, got {len(row)}")
        try:
            ts = int(row[0])
            vals = [float(v) for v in row[2:]]
        except ValueError as exc:
            raise MalformedRow(f"line {lineno}: {exc}") from exc
        rows.append((ts, row[1], vals))
    return rows


def _fill_series(job_id: str, timestamps, columns):
    """Validate cadence, forward-fill short gaps, return (interval, filled columns)."""
    if len(timestamps) == 1:
        return DEFAULT_INTERVAL_S, columns
    deltas = np.diff(timestamps)
    if np.any(deltas <= 0):
        raise IrregularInterval(f"job {job_id}: timestamps not strictly increasing")
    base = int(deltas.min())
    ratios = deltas / base
    if np.any(np.abs(ratios - np.round(ratios)) > 1e-9):
        raise IrregularInterval(f"job {job_id}: intervals are not multiples of {base}s")
    ks = np.round(ratios).astype(int)
    if np.any(ks > MAX_FILL_SAMPLES + 1):
        worst = int(ks.max()) - 1
        raise GapTooLong(f"job {job_id}: gap of {worst} missing samples exceeds {MAX_FILL_SAMPLES}")
    gap_events = int(np.sum(ks > 1))
    if gap_events >= IRREGULAR_GAP_FRACTION * len(ks):
        raise IrregularInterval(
            f"job {job_id}: {gap_events}/{len(ks)} intervals deviate from {base}s cadence"
        )
    filled = [[col[0]] for col in columns]
    for idx, k in enumerate(ks):
        for _ in range(int(k)):  # k-1 forward-filled copies, then the real sample
            for c, col in enumerate(columns):
                filled[c].append(col[idx])
        for c, col in enumerate(columns):
            filled[c][-1] = col[idx + 1]
    return base, [np.asarray(col, dtype=float) for col in filled]


def parse_job_trace(source, fmt: TraceFormat) -> list:
    """Parse UsageCsv or PowerCsv content into one JobSeries per job_id."""
    rows = _parse_rows(source, fmt)
    if not rows:
        raise MalformedRow("no data rows")
    by_job: dict = {}
    order = []
    for ts, job_id, vals in rows:
        if job_id not in by_job:
            by_job[job_id] = []
            order.append(job_id)
        by_job[job_id].append((ts, vals))
    out = []
    for job_id in order:
        recs = sorted(by_job[job_id], key=lambda r: r[0])
        timestamps = np.array([r[0] for r in recs], dtype=np.int64)
        ncols = len(recs[0][1])
        columns = [np.array([r[1][c] for r in recs], dtype=float) for c in range(ncols)]
        interval, columns = _fill_series(job_id, timestamps, columns)
        T = len(columns[0])
        if fmt is TraceFormat.UsageCsv:
            series = JobSeries(
                job_id=job_id,
                sampling_interval_s=interval,
                cpu_util=columns[0],
                mem_gb=columns[1],
                power_w=np.zeros(T),
                has_power=False,
            )
        else:
            series = JobSeries(
                job_id=job_id,
                sampling_interval_s=interval,
                cpu_util=np.zeros(T),
                mem_gb=np.zeros(T),
                power_w=columns[0],
                has_power=True,
            )
        out.append(series)
    return out


def _cov_of(values: np.ndarray) -> float:
    m = float(values.mean())
    if m <= 1e-9:
        return float("inf")
    return float(values.std() / m)


def _deviation_template(spec: SyntheticJobSpec, T: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-variance deviation mixing a seasonal template with noise."""
    noise = rng.standard_normal(T)
    if spec.period_samples is None:
        return noise
    p = spec.period_samples
    phase = np.arange(T) % p
    if spec.template == "sine":
        seasonal = np.sqrt(2.0) * np.sin(2 * np.pi * phase / p)
    else:
        seasonal = np.where(phase < p // 2, 1.0, -1.0)
    seasonal = seasonal - seasonal.mean()
    svar = float(np.mean(seasonal**2))
    if svar > 0:
        seasonal = seasonal / np.sqrt(svar)
    s = spec.period_score_target
    return np.sqrt(s) * seasonal + np.sqrt(1.0 - s) * noise


def generate_synthetic_job(
    spec: SyntheticJobSpec, T: int, cap: float = DEFAULT_CAP_W, interval_s: int = DEFAULT_INTERVAL_S
) -> JobSeries:
    """Deterministic synthetic job whose realized CoV lands within 0.05 of target."""
    mu = spec.mean_power_w
    if mu <= 0 or mu > cap:
        raise InfeasibleSpec(f"mean {mu}W outside (0, cap={cap}W]")
    if spec.period_samples is not None and T < 2 * spec.period_samples:
        raise InfeasibleSpec(f"T={T} shorter than two periods of {spec.period_samples}")
    # extremal two-point distribution on [0, cap] bounds the reachable std
    std_bound = np.sqrt(mu * (cap - mu))
    if spec.target_cov * mu > std_bound + 1e-12:
        raise InfeasibleSpec(
            f"cov {spec.target_cov} at mean {mu}W needs std {spec.target_cov * mu:.1f}W "
            f"> bound {std_bound:.1f}W under [0,{cap}]W"
        )
    rng = np.random.default_rng(spec.noise_seed)
    dev = _deviation_template(spec, T, rng)

    def realized(scale: float) -> np.ndarray:
        return np.clip(mu + scale * mu * dev, 0.0, cap)

    if spec.target_cov == 0.0:
        power = np.full(T, mu)
    else:
        lo, hi = 0.0, 1.0
        while _cov_of(realized(hi)) < spec.target_cov and hi < 1e4:
            hi *= 2.0
        if _cov_of(realized(hi)) < spec.target_cov - 0.05:
            raise InfeasibleSpec(
                f"cov {spec.target_cov} unreachable with clipping at mean {mu}W "
                f"(max realized {_cov_of(realized(hi)):.3f})"
            )
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if _cov_of(realized(mid)) < spec.target_cov:
                lo = mid
            else:
                hi = mid
        power = realized(hi)
        if abs(_cov_of(power) - spec.target_cov) > 0.05:
            raise InfeasibleSpec(
                f"cov {spec.target_cov}: closest realizable is {_cov_of(power):.3f}"
            )
    return JobSeries(
        job_id=f"synth-{spec.noise_seed}",
        sampling_interval_s=interval_s,
        cpu_util=np.zeros(T),
        mem_gb=np.zeros(T),
        power_w=power,
        has_power=True,
    )


def synthesize_server(
    jobs: Sequence[JobSeries],
    model=None,
    cap: float = DEFAULT_CAP_W,
    policy: BaseloadPolicy = BaseloadPolicy.Proportional,
    server_id: str = "server0",
) -> ServerTrace:
    """Compose jobs into a server: derive per-job power if needed, sum to P(t).

    Usage-bearing jobs run through the power curve, rescaled so a fully
    loaded job draws `cap` watts. The curve embeds one baseload copy per
    job; Proportional keeps that (usage-monotone attribution), EqualShare
    replaces the n copies with a single server baseload split evenly.
    """
    if not jobs:
        raise LengthMismatch("no jobs to compose")
    lengths = {j.T for j in jobs}
    if len(lengths) != 1:
        raise LengthMismatch(f"job series lengths differ: {sorted(lengths)}")
    bearing = {j.has_power for j in jobs}
    if len(bearing) != 1:
        raise MixedInputs("some jobs carry power, others carry usage")
    out_jobs = []
    if not jobs[0].has_power:
        if model is None:
            raise MixedInputs("usage-bearing jobs require a PowerCurve")
        scale = cap / model.peak_w
        raws = []
        for j in jobs:
            raw = model.power_of_series(j.cpu_util, j.mem_gb) * scale
            raws.append(np.clip(raw, 0.0, cap))
        if policy is BaseloadPolicy.EqualShare:
            base = model.baseload_w * scale
            n = len(jobs)
            raws = [r - base + base / n for r in raws]
        for j, r in zip(jobs, raws):
            out_jobs.append(
                JobSeries(
                    job_id=j.job_id,
                    sampling_interval_s=j.sampling_interval_s,
                    cpu_util=j.cpu_util,
                    mem_gb=j.mem_gb,
                    power_w=r,
                    has_power=True,
                )
            )
    else:
        out_jobs = list(jobs)
    aggregate = np.sum([j.power_w for j in out_jobs], axis=0)
    return ServerTrace(
        server_id=server_id,
        jobs=out_jobs,
        aggregate_w=aggregate,
        per_job_cap_w=cap,
        baseload_policy=policy,
    )


def _power_csv_text(job_id: str, power: np.ndarray, interval_s: int, t0: int = 0) -> str:
    lines = ["timestamp,job_id,power_w"]
    for k, v in enumerate(power):
        lines.append(f"{t0 + k * interval_s},{job_id},{float(v)!r}")
    return "\n".join(lines) + "\n"


def save_server_trace(tr: ServerTrace, out_dir: str) -> None:
    """Persist as a directory: meta.json + one PowerCsv per job + aggregate."""
    os.makedirs(out_dir, exist_ok=True)
    files = {}
    for idx, j in enumerate(tr.jobs):
        fname = f"job{idx:03d}.csv"
        files[j.job_id] = fname
        with open(os.path.join(out_dir, fname), "w") as f:
            f.write(_power_csv_text(j.job_id, j.power_w, tr.sampling_interval_s))
    with open(os.path.join(out_dir, "aggregate.csv"), "w") as f:
        f.write(_power_csv_text(tr.server_id, tr.aggregate_w, tr.sampling_interval_s))
    meta = {
        "server_id": tr.server_id,
        "per_job_cap_w": tr.per_job_cap_w,
        "baseload_policy": tr.baseload_policy.value,
        "sampling_interval_s": tr.sampling_interval_s,
        "jobs": files,
    }
    with open(os.path.join(out_dir, "meta.json"), "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)


def load_server_trace(in_dir: str) -> ServerTrace:
    with open(os.path.join(in_dir, "meta.json")) as f:
        meta = json.load(f)
    jobs = []
    for job_id, fname in meta["jobs"].items():
        with open(os.path.join(in_dir, fname), "rb") as f:
            parsed = parse_job_trace(f.read(), TraceFormat.PowerCsv)
        series = parsed[0]
        series.job_id = job_id
        jobs.append(series)
    with open(os.path.join(in_dir, "aggregate.csv"), "rb") as f:
        agg = parse_job_trace(f.read(), TraceFormat.PowerCsv)[0]
    return ServerTrace(
        server_id=meta["server_id"],
        jobs=jobs,
        aggregate_w=agg.power_w,
        per_job_cap_w=meta["per_job_cap_w"],
        baseload_policy=BaseloadPolicy(meta["baseload_policy"]),
    )
