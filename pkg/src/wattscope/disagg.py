"""Per-job power estimation from the aggregate stream.

Selects one model per job from the library, slides windows over the
aggregate, and optionally reconciles estimates so they sum back to the
meter reading. Batch and streaming paths run the exact same per-window
predictor, so feeding samples one at a time reproduces batch output
bit for bit.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import baselines as _baselines
from . import nn as _nn
from .characterize import Level
from .errors import ShapeMismatch
from .library import ModelKey, ModelLibrary

RECONCILE_FLOOR_W = 1e-6


@dataclass
class DisaggResult:
    per_job_w: Dict[str, np.ndarray]
    reconciled: bool
    model_keys_used: List[ModelKey]
    # timesteps where reconciliation was skipped because the raw estimates
    # summed to ~0 while the meter read nonzero
    warnings: List[Dict] = field(default_factory=list)


def default_query(job_id: str, n_jobs: int, model_type: str = "SlidingWindow") -> ModelKey:
    """Fallback lookup key when the caller has no profile for a job: match
    on the job tag and background count, neutral on the class triple."""
    return ModelKey(
        variability=Level.Medium,
        regularity=Level.Medium,
        intensity=Level.Medium,
        n_background=max(n_jobs - 1, 0),
        model_type=model_type,
        job_tag=job_id,
    )


class _Predictor:
    """Single-window predictor shared by the batch and streaming paths."""

    def __init__(self, model, job_id: str):
        self.job_id = job_id
        self.model = model
        self.engine = None
        if isinstance(model, _nn.TrainedModel):
            self.window = model.config.window
            if model.config.conv_stride == 1:
                from .serving import ServingEngine

                self.engine = ServingEngine(model)
        else:
            self.window = 1

    def predict_window(self, window_vals: np.ndarray) -> float:
        m = self.model
        if isinstance(m, _nn.TrainedModel):
            if self.engine is not None:
                return self.engine.predict(window_vals)
            return _nn.forward(m, window_vals)
        if isinstance(m, _baselines.MeanModel):
            return _baselines.mean_predict(m, [0.0], job_ids=[self.job_id])[self.job_id][0]
        out = _baselines.co_predict(m, [float(window_vals[-1])], job_ids=[self.job_id])
        return float(out[self.job_id][0])


def _resolve(library: ModelLibrary, job_ids: Sequence[str], queries) -> Dict[str, tuple]:
    resolved = {}
    loaded = {}
    for job_id in job_ids:
        query = queries.get(job_id) if queries else None
        if query is None:
            query = default_query(job_id, len(job_ids))
        stored_id, key, _dist = library.select_entry(query)
        if stored_id not in loaded:
            loaded[stored_id] = library.load(stored_id)
        resolved[job_id] = (loaded[stored_id], key)
    return resolved


def _reconcile(per_job: Dict[str, np.ndarray], aggregate: np.ndarray, warnings: List[Dict]):
    ids = list(per_job)
    stack = np.stack([per_job[j] for j in ids])
    totals = stack.sum(axis=0)
    for t in range(len(aggregate)):
        if totals[t] > RECONCILE_FLOOR_W:
            stack[:, t] *= aggregate[t] / totals[t]
        else:
            warnings.append(
                {"t": t, "aggregate_w": float(aggregate[t]), "total_inferred_w": float(totals[t])}
            )
    return {j: stack[i] for i, j in enumerate(ids)}


def disaggregate(
    aggregate: Sequence[float],
    job_ids: Sequence[str],
    library: ModelLibrary,
    reconcile: bool = False,
    queries: Optional[Dict[str, ModelKey]] = None,
    resample_factor: int = 1,
) -> DisaggResult:
    """Estimate each job's power at every timestep of the aggregate.

    queries maps job_id to the library lookup key; missing entries fall
    back to a tag-match query. resample_factor > 1 averages the outputs
    over non-overlapping blocks for coarser-interval energy attribution.
    """
    agg = np.asarray(aggregate, dtype=float)
    if agg.ndim != 1 or len(agg) < 1:
        raise ShapeMismatch("aggregate must be a non-empty 1-D series")
    if resample_factor < 1:
        raise ShapeMismatch("resample_factor must be >= 1")
    resolved = _resolve(library, job_ids, queries)
    per_job: Dict[str, np.ndarray] = {}
    keys_used: List[ModelKey] = []
    for job_id in job_ids:
        model, key = resolved[job_id]
        keys_used.append(key)
        pred = _Predictor(model, job_id)
        w = pred.window
        padded = np.concatenate([np.full(w - 1, agg[0]), agg])
        out = np.empty(len(agg))
        for t in range(len(agg)):
            out[t] = pred.predict_window(padded[t : t + w])
        per_job[job_id] = out
    warnings: List[Dict] = []
    if reconcile:
        per_job = _reconcile(per_job, agg, warnings)
    if resample_factor > 1:
        per_job = {j: _block_mean(v, resample_factor) for j, v in per_job.items()}
    return DisaggResult(
        per_job_w=per_job, reconciled=reconcile, model_keys_used=keys_used, warnings=warnings
    )


def _block_mean(x: np.ndarray, factor: int) -> np.ndarray:
    n_full = len(x) // factor
    out = []
    if n_full:
        out.append(x[: n_full * factor].reshape(n_full, factor).mean(axis=1))
    if len(x) % factor:
        out.append([x[n_full * factor :].mean()])
    return np.concatenate(out) if out else np.empty(0)


class StreamDisaggregator:
    """Online variant: push one aggregate sample, get per-job estimates.

    The window buffer starts filled with the first sample, matching the
    batch path's start padding exactly.
    """

    def __init__(
        self,
        library: ModelLibrary,
        job_ids: Sequence[str],
        reconcile: bool = False,
        queries: Optional[Dict[str, ModelKey]] = None,
    ):
        self.job_ids = list(job_ids)
        self.reconcile = reconcile
        resolved = _resolve(library, self.job_ids, queries)
        self.model_keys_used = [resolved[j][1] for j in self.job_ids]
        self._predictors = [_Predictor(resolved[j][0], j) for j in self.job_ids]
        max_w = max(p.window for p in self._predictors)
        self._buffer: deque = deque(maxlen=max_w)
        self.warnings: List[Dict] = []
        self._t = 0

    def push(self, aggregate_w: float) -> Dict[str, float]:
        if not self._buffer:
            self._buffer.extend([float(aggregate_w)] * self._buffer.maxlen)
        else:
            self._buffer.append(float(aggregate_w))
        buf = np.asarray(self._buffer)
        out = {}
        for pred in self._predictors:
            out[pred.job_id] = pred.predict_window(buf[len(buf) - pred.window :])
        if self.reconcile:
            total = sum(out.values())
            if total > RECONCILE_FLOOR_W:
                scale = float(aggregate_w) / total
                out = {j: v * scale for j, v in out.items()}
            else:
                self.warnings.append(
                    {
                        "t": self._t,
                        "aggregate_w": float(aggregate_w),
                        "total_inferred_w": float(total),
                    }
                )
        self._t += 1
        return out
