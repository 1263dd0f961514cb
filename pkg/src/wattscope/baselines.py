"""Reference disaggregators: constant-mean and combinatorial optimization.

Both fit on per-job training power and predict from the aggregate alone.
CO assigns each job one of K quantile-derived power states per timestep,
picking the combination whose total best matches the aggregate sample.
"""

from __future__ import annotations

import json
import os
from bisect import bisect_left
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import ModelFormatError, StateSpaceTooLarge, UnknownJob
from .nn import WEIGHT_MAGIC

EXHAUSTIVE_LIMIT = 10**6


@dataclass
class MeanModel:
    job_means_w: Dict[str, float]


@dataclass
class CoModel:
    job_states_w: Dict[str, List[float]]


def mean_fit(data: Dict[str, Sequence[float]]) -> MeanModel:
    means = {}
    for job_id, series in data.items():
        x = np.asarray(series, dtype=float)
        if x.size == 0:
            raise UnknownJob(f"no training samples for job {job_id!r}")
        means[job_id] = float(x.mean())
    return MeanModel(job_means_w=means)


def mean_predict(
    model: MeanModel, aggregate: Sequence[float], job_ids: Optional[Sequence[str]] = None
) -> Dict[str, np.ndarray]:
    """Constant prediction per job, independent of the aggregate values."""
    T = len(aggregate)
    ids = list(model.job_means_w) if job_ids is None else list(job_ids)
    out = {}
    for job_id in ids:
        if job_id not in model.job_means_w:
            raise UnknownJob(f"job {job_id!r} not in model")
        out[job_id] = np.full(T, model.job_means_w[job_id])
    return out


def co_fit(data: Dict[str, Sequence[float]], k: int = 4) -> CoModel:
    if k < 2:
        raise StateSpaceTooLarge(f"need at least 2 states, got {k}")
    states = {}
    qs = np.arange(k) / (k - 1)
    for job_id, series in data.items():
        x = np.asarray(series, dtype=float)
        if x.size == 0:
            raise UnknownJob(f"no training samples for job {job_id!r}")
        states[job_id] = [float(v) for v in np.quantile(x, qs)]
    return CoModel(job_states_w=states)


def _decode(index: int, radices: List[int]) -> List[int]:
    # mixed-radix digits, first job most significant (matches product order)
    digits = [0] * len(radices)
    for j in range(len(radices) - 1, -1, -1):
        digits[j] = index % radices[j]
        index //= radices[j]
    return digits


def co_predict(
    model: CoModel,
    aggregate: Sequence[float],
    job_ids: Optional[Sequence[str]] = None,
    mode: str = "auto",
) -> Dict[str, np.ndarray]:
    """Per-timestep state assignment minimizing |aggregate - total assigned|.

    Exhaustive search enumerates every state combination when the lattice
    has at most 10^6 points; otherwise (or when mode="greedy") coordinate
    descent from the previous timestep's assignment. Ties break toward the
    lowest total, then the lexicographically smallest state vector in job
    order.
    """
    ids = list(model.job_states_w) if job_ids is None else list(job_ids)
    for job_id in ids:
        if job_id not in model.job_states_w:
            raise UnknownJob(f"job {job_id!r} not in model")
    agg = np.asarray(aggregate, dtype=float)
    states = [np.asarray(model.job_states_w[j], dtype=float) for j in ids]
    radices = [len(s) for s in states]
    lattice = 1
    for r in radices:
        lattice *= r
    if mode == "exhaustive" and lattice > EXHAUSTIVE_LIMIT:
        raise StateSpaceTooLarge(f"{lattice} combinations exceed {EXHAUSTIVE_LIMIT}")
    exhaustive = mode == "exhaustive" or (mode == "auto" and lattice <= EXHAUSTIVE_LIMIT)
    if exhaustive:
        assign = _co_exhaustive(agg, states, radices)
    else:
        assign = _co_greedy(agg, states)
    return {job_id: assign[:, j] for j, job_id in enumerate(ids)}


def _co_exhaustive(agg: np.ndarray, states: List[np.ndarray], radices: List[int]) -> np.ndarray:
    totals = np.zeros(1)
    for s in states:
        totals = (totals[:, None] + s[None, :]).ravel()
    # stable sort keeps lex order (= enumeration index) within equal totals,
    # so the first occurrence of a total is its lex-smallest combination
    order = np.argsort(totals, kind="stable")
    sorted_totals = totals[order]
    uniq_pos = np.concatenate([[True], np.diff(sorted_totals) > 0])
    sorted_totals = sorted_totals[uniq_pos]
    sorted_index = order[uniq_pos]
    level_list = sorted_totals.tolist()
    T = len(agg)
    assign = np.empty((T, len(states)))
    for t in range(T):
        p = agg[t]
        i = bisect_left(level_list, p)
        if i == 0:
            best = 0
        elif i >= len(level_list):
            best = len(level_list) - 1
        else:
            lo, hi = level_list[i - 1], level_list[i]
            # equidistant -> lower total wins
            best = i - 1 if p - lo <= hi - p else i
        digits = _decode(int(sorted_index[best]), radices)
        for j, s in enumerate(states):
            assign[t, j] = s[digits[j]]
    return assign


def _co_greedy(agg: np.ndarray, states: List[np.ndarray]) -> np.ndarray:
    n = len(states)
    T = len(agg)
    assign = np.empty((T, n))
    digits = [0] * n  # first state is the observed minimum
    for t in range(T):
        total = sum(states[j][digits[j]] for j in range(n))
        changed = True
        while changed:
            changed = False
            for j in range(n):
                s = states[j]
                cur = digits[j]
                rest = total - s[cur]
                best = cur
                best_key = (abs(agg[t] - total), total)
                for c in range(len(s)):
                    cand_total = rest + s[c]
                    key = (abs(agg[t] - cand_total), cand_total)
                    if key < best_key or (key == best_key and s[c] < s[best]):
                        best, best_key = c, key
                if best != cur:
                    digits[j] = best
                    total = rest + s[best]
                    changed = True
        for j in range(n):
            assign[t, j] = states[j][digits[j]]
    return assign


def save_baseline(model, out_dir: str) -> None:
    """Model directory with the shared magic-prefixed weight-file layout."""
    os.makedirs(out_dir, exist_ok=True)
    if isinstance(model, MeanModel):
        model_type = "Mean"
        ids = list(model.job_means_w)
        flat = np.asarray([model.job_means_w[j] for j in ids], dtype="<f8")
        extra = {}
    elif isinstance(model, CoModel):
        model_type = "CO"
        ids = list(model.job_states_w)
        k = len(next(iter(model.job_states_w.values())))
        flat = np.asarray(
            [v for j in ids for v in model.job_states_w[j]], dtype="<f8"
        )
        extra = {"k": k}
    else:
        raise ModelFormatError(f"unsupported baseline model {type(model).__name__}")
    with open(os.path.join(out_dir, "weights.bin"), "wb") as f:
        f.write(WEIGHT_MAGIC)
        f.write(flat.tobytes())
    meta = {"format": WEIGHT_MAGIC.decode(), "model_type": model_type, "job_ids": ids}
    meta.update(extra)
    with open(os.path.join(out_dir, "metadata.json"), "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)


def load_baseline(in_dir: str):
    with open(os.path.join(in_dir, "metadata.json")) as f:
        meta = json.load(f)
    if meta.get("format") != WEIGHT_MAGIC.decode():
        raise ModelFormatError(f"unknown model format {meta.get('format')!r}")
    with open(os.path.join(in_dir, "weights.bin"), "rb") as f:
        blob = f.read()
    if blob[:4] != WEIGHT_MAGIC:
        raise ModelFormatError("weight file missing WSM1 magic")
    flat = np.frombuffer(blob[4:], dtype="<f8")
    ids = meta["job_ids"]
    if meta["model_type"] == "Mean":
        if len(flat) != len(ids):
            raise ModelFormatError("mean weight count does not match job list")
        return MeanModel(job_means_w={j: float(v) for j, v in zip(ids, flat)})
    if meta["model_type"] == "CO":
        k = meta["k"]
        if len(flat) != len(ids) * k:
            raise ModelFormatError("state weight count does not match job list")
        return CoModel(
            job_states_w={
                j: [float(v) for v in flat[i * k : (i + 1) * k]] for i, j in enumerate(ids)
            }
        )
    raise ModelFormatError(f"unsupported model type {meta['model_type']!r}")
