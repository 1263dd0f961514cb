"""On-disk model library keyed by workload metadata.

Layout: one directory per stored model plus an index manifest. The index
is replaced atomically (write temp, rename), so a crash mid-store leaves
at worst an orphaned model directory, never a dangling index entry.
"""

from __future__ import annotations

import json
import os
import shutil
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from .characterize import Level
from .errors import DuplicateKey, EmptyLibrary, IoFailure, ModelFormatError
from . import baselines as _baselines
from . import nn as _nn

MODEL_TYPES = ("Mean", "CO", "SlidingWindow")

_ORDINAL = {Level.Low: 0, Level.Medium: 1, Level.High: 2}

N_BACKGROUND_CAP = 3
TAG_MATCH_BONUS = 0.5


@dataclass(frozen=True)
class ModelKey:
    variability: Level
    regularity: Level
    intensity: Level
    n_background: int
    model_type: str = "SlidingWindow"
    job_tag: Optional[str] = None

    def __post_init__(self):
        if self.n_background < 0:
            raise ValueError(f"n_background must be >= 0, got {self.n_background}")
        if self.model_type not in MODEL_TYPES:
            raise ValueError(f"model_type must be one of {MODEL_TYPES}")

    def to_dict(self) -> Dict:
        return {
            "variability": self.variability.value,
            "regularity": self.regularity.value,
            "intensity": self.intensity.value,
            "n_background": self.n_background,
            "model_type": self.model_type,
            "job_tag": self.job_tag,
        }

    @staticmethod
    def from_dict(d: Dict) -> "ModelKey":
        return ModelKey(
            variability=Level(d["variability"]),
            regularity=Level(d["regularity"]),
            intensity=Level(d["intensity"]),
            n_background=int(d["n_background"]),
            model_type=d["model_type"],
            job_tag=d.get("job_tag"),
        )


def key_distance(query: ModelKey, candidate: ModelKey) -> float:
    """Ordinal L1 over the class triple, capped background-count gap,
    minus a bonus when both keys carry the same job tag."""
    d = 0.0
    for attr in ("variability", "regularity", "intensity"):
        d += abs(_ORDINAL[getattr(query, attr)] - _ORDINAL[getattr(candidate, attr)])
    d += min(abs(query.n_background - candidate.n_background), N_BACKGROUND_CAP)
    if query.job_tag is not None and query.job_tag == candidate.job_tag:
        d -= TAG_MATCH_BONUS
    return d


class ModelLibrary:
    def __init__(self, root: str):
        self.root = root
        self.index_path = os.path.join(root, "index.json")

    def _read_index(self) -> List[Dict]:
        if not os.path.exists(self.index_path):
            return []
        try:
            with open(self.index_path) as f:
                return json.load(f)["entries"]
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise IoFailure(f"cannot read index: {exc}") from exc

    def _write_index(self, entries: List[Dict]) -> None:
        tmp = self.index_path + ".tmp"
        try:
            os.makedirs(self.root, exist_ok=True)
            with open(tmp, "w") as f:
                json.dump({"entries": entries}, f, indent=2)
            os.replace(tmp, self.index_path)
        except OSError as exc:
            raise IoFailure(f"cannot write index: {exc}") from exc

    def store(self, model, key: ModelKey, overwrite: bool = False) -> str:
        entries = self._read_index()
        key_d = key.to_dict()
        existing = [e for e in entries if e["key"] == key_d]
        if existing and not overwrite:
            raise DuplicateKey(f"key already stored: {key_d}")
        seq = 1 + max((e["seq"] for e in entries), default=0)
        model_dir = os.path.join(self.root, f"m{seq:06d}")
        try:
            if isinstance(model, _nn.TrainedModel):
                _nn.save_model(model, model_dir, model_type=key.model_type)
            else:
                _baselines.save_baseline(model, model_dir)
        except OSError as exc:
            raise IoFailure(f"cannot write model: {exc}") from exc
        entries = [e for e in entries if e["key"] != key_d]
        entries.append({"seq": seq, "key": key_d, "path": f"m{seq:06d}"})
        self._write_index(entries)
        for e in existing:
            shutil.rmtree(os.path.join(self.root, e["path"]), ignore_errors=True)
        return f"m{seq:06d}"

    def list_keys(self) -> List[Tuple[str, ModelKey]]:
        return [(e["path"], ModelKey.from_dict(e["key"])) for e in self._read_index()]

    def load(self, stored_id: str):
        model_dir = os.path.join(self.root, stored_id)
        with open(os.path.join(model_dir, "metadata.json")) as f:
            model_type = json.load(f).get("model_type")
        if model_type == "SlidingWindow":
            return _nn.load_model(model_dir)
        if model_type in ("Mean", "CO"):
            return _baselines.load_baseline(model_dir)
        raise ModelFormatError(f"unknown model type {model_type!r}")

    def select(self, query: ModelKey) -> Tuple[object, float]:
        """Closest stored model of the query's type; ties go to the most
        recently stored entry."""
        entries = [
            e
            for e in self._read_index()
            if e["key"]["model_type"] == query.model_type
        ]
        if not entries:
            raise EmptyLibrary(f"no stored {query.model_type} models")
        best = min(
            entries,
            key=lambda e: (key_distance(query, ModelKey.from_dict(e["key"])), -e["seq"]),
        )
        dist = key_distance(query, ModelKey.from_dict(best["key"]))
        return self.load(best["path"]), dist

    def select_entry(self, query: ModelKey) -> Tuple[str, ModelKey, float]:
        """Like select but returns (stored id, key, distance) without loading."""
        entries = [
            e
            for e in self._read_index()
            if e["key"]["model_type"] == query.model_type
        ]
        if not entries:
            raise EmptyLibrary(f"no stored {query.model_type} models")
        best = min(
            entries,
            key=lambda e: (key_distance(query, ModelKey.from_dict(e["key"])), -e["seq"]),
        )
        key = ModelKey.from_dict(best["key"])
        return best["path"], key, key_distance(query, key)
