"""Online drift monitor over aggregate reconstruction error.

Each sample compares the metered aggregate against the sum of inferred
per-job power; a relative error above threshold is a breach, and a run of
`persistence` consecutive breaches signals model reselection.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Sequence

from .errors import NonPositiveAggregate

DEFAULT_THRESHOLD_NMAE = 0.10
DEFAULT_PERSISTENCE = 12  # one hour at 300 s sampling
HISTORY_LIMIT = 288


class MonitorEvent(Enum):
    Ok = "Ok"
    Degraded = "Degraded"
    Reselect = "Reselect"


@dataclass
class MonitorState:
    threshold_nmae: float = DEFAULT_THRESHOLD_NMAE
    persistence: int = DEFAULT_PERSISTENCE
    breach_run: int = 0
    history: deque = field(default_factory=lambda: deque(maxlen=HISTORY_LIMIT))


def observe(state: MonitorState, p_t: float, inferred_w: Sequence[float]) -> MonitorEvent:
    """Advance the monitor by one sample and classify it."""
    if p_t <= 0:
        raise NonPositiveAggregate(f"aggregate must be positive, got {p_t}")
    rel_err = abs(p_t - float(sum(inferred_w))) / p_t
    state.history.append(rel_err)
    if rel_err <= state.threshold_nmae:
        state.breach_run = 0
        return MonitorEvent.Ok
    state.breach_run += 1
    if state.breach_run >= state.persistence:
        state.breach_run = 0
        return MonitorEvent.Reselect
    return MonitorEvent.Degraded


def event_record(timestamp: int, server_id: str, rel_err: float, event: MonitorEvent) -> Dict:
    return {
        "timestamp": int(timestamp),
        "server_id": server_id,
        "rel_err": float(rel_err),
        "event": event.value,
    }


def monitor_stream(
    state: MonitorState,
    server_id: str,
    timestamps: Iterable[int],
    aggregate_w: Sequence[float],
    inferred_per_job: Dict[str, Sequence[float]],
) -> List[Dict]:
    """Run the monitor over a whole trace; one record per sample."""
    records = []
    ids = list(inferred_per_job)
    for i, ts in enumerate(timestamps):
        p_t = float(aggregate_w[i])
        inferred = [float(inferred_per_job[j][i]) for j in ids]
        event = observe(state, p_t, inferred)
        records.append(event_record(ts, server_id, state.history[-1], event))
    return records


def records_to_jsonl(records: List[Dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)
