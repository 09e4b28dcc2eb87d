"""Embedding memory: entries with metadata, incremental clusters and their tuned planners."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..container import ContainerError, pack, unpack
from ..planner.idm import PlannerParams
from ..scenario.types import get_class
from .dbscan import NOISE, DbscanParams, IncrementalDBSCAN, cosine_distances_to

logger = logging.getLogger(__name__)

MAGIC = b"MEM\x00"
FORMAT_VERSION = 1


class MemoryFormatError(ContainerError):
    pass


@dataclass
class MemoryEntry:
    id: int
    z: np.ndarray
    label: int | None = None
    cluster: int = NOISE
    is_core: bool = False
    meta: dict = field(default_factory=dict)


@dataclass
class ClusterState:
    cluster_id: int
    members: frozenset
    centroid: np.ndarray
    best_params: PlannerParams | None = None
    best_score: float = float("nan")


def _normalize(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    if norm == 0 or not np.isfinite(norm):
        raise ValueError("cannot normalise a zero or non-finite vector")
    return v / norm


class MemoryBank:
    """Single-writer store. ``insert`` keeps DBSCAN clusters current and marks clusters
    that gained members as stale so the caller can re-tune them."""

    def __init__(self, params: DbscanParams = DbscanParams()):
        self.params = params
        self.entries: dict[int, MemoryEntry] = {}
        self._engine = IncrementalDBSCAN(params.eps, params.min_pts)
        self._tuned: dict[int, tuple[PlannerParams, float]] = {}
        self.stale: set[int] = set()

    def __len__(self):
        return len(self.entries)

    def __contains__(self, entry_id):
        return entry_id in self.entries

    # -- writes
    def insert(self, entry_id: int, z, label=None, meta: dict | None = None) -> set[int]:
        entry_id = int(entry_id)
        if entry_id in self.entries:
            raise KeyError(f"memory already holds id {entry_id}")
        z = np.asarray(z, dtype=np.float64)
        if label is not None:
            label = get_class(label).id
        before = {lab: self._members(lab) for lab in self._engine_labels()}
        touched = self._engine.insert(z, entry_id)
        self.entries[entry_id] = MemoryEntry(entry_id, z.copy(), label, meta=dict(meta or {}))
        self._sync()
        for old, new in self._engine.merges_:
            # a merged-away cluster's tuning no longer describes anything
            self._tuned.pop(new, None)
        self._engine.merges_.clear()
        changed = {lab for lab in touched if lab in self._engine_labels() and self._members(lab) != before.get(lab)}
        self.stale |= changed
        self.stale &= set(self._engine_labels())
        return changed

    def set_params(self, cluster_id: int, params: PlannerParams, score: float) -> None:
        if cluster_id not in self._engine_labels():
            raise KeyError(f"no cluster {cluster_id}")
        self._tuned[cluster_id] = (params, float(score))
        self.stale.discard(cluster_id)

    # -- reads
    def _engine_labels(self) -> list[int]:
        if not self.entries:
            return []
        return sorted({int(x) for x in self._engine.labels_ if x != NOISE})

    def _members(self, cluster_id: int) -> frozenset:
        labels = self._engine.labels_
        return frozenset(self._engine.ids_[i] for i in np.flatnonzero(labels == cluster_id))

    def _sync(self):
        for i, pid in enumerate(self._engine.ids_):
            e = self.entries[pid]
            e.cluster = int(self._engine.labels_[i])
            e.is_core = bool(self._engine._core[i])

    def cluster_ids(self) -> list[int]:
        return self._engine_labels()

    def clusters(self) -> dict[int, ClusterState]:
        out = {}
        for cid in self._engine_labels():
            members = self._members(cid)
            Z = np.stack([self.entries[m].z for m in sorted(members)])
            params, score = self._tuned.get(cid, (None, float("nan")))
            out[cid] = ClusterState(cid, members, _normalize(Z.mean(axis=0)), params, score)
        return out

    def tuned_clusters(self) -> dict[int, ClusterState]:
        return {cid: c for cid, c in self.clusters().items() if c.best_params is not None}

    def query_knn(self, z, k: int) -> list[tuple[MemoryEntry, float]]:
        """Top-k entries by ascending cosine distance, ties broken by ascending id."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if not self.entries:
            return []
        ids = np.array(sorted(self.entries))
        Z = np.stack([self.entries[i].z for i in ids])
        d = cosine_distances_to(Z, _normalize(np.asarray(z, dtype=np.float64)))
        order = np.lexsort((ids, d))[:k]
        return [(self.entries[int(ids[i])], float(d[i])) for i in order]

    # -- persistence
    def to_bytes(self) -> bytes:
        order = list(self._engine.ids_) if self.entries else []
        meta = {
            "eps": self.params.eps,
            "min_pts": self.params.min_pts,
            "entries": [{"id": i, "label": self.entries[i].label, "meta": self.entries[i].meta} for i in order],
            "tuned": [{"cluster": c, "params": p.to_dict(), "score": s} for c, (p, s) in sorted(self._tuned.items())],
            "stale": sorted(self.stale),
            "next_cluster": self._engine.next_cluster_ if self.entries else 0,
            "labels": [int(x) for x in self._engine.labels_] if self.entries else [],
        }
        Z = np.stack([self.entries[i].z for i in order]) if order else np.zeros((0, 0))
        return pack(MAGIC, FORMAT_VERSION, meta, {"z": Z})

    @classmethod
    def from_bytes(cls, data: bytes) -> "MemoryBank":
        try:
            meta, arrays = unpack(data, MAGIC, FORMAT_VERSION)
        except ContainerError as exc:
            raise MemoryFormatError(str(exc)) from None
        bank = cls(DbscanParams(meta["eps"], meta["min_pts"]))
        # replaying inserts in the original order rebuilds identical cluster ids
        for rec, z in zip(meta["entries"], arrays["z"]):
            bank.insert(rec["id"], z, rec["label"], rec["meta"])
        if [e.cluster for e in (bank.entries[r["id"]] for r in meta["entries"])] != meta["labels"]:
            raise MemoryFormatError("replayed cluster labels differ from the snapshot")
        for rec in meta["tuned"]:
            bank._tuned[rec["cluster"]] = (PlannerParams.from_dict(rec["params"]), float(rec["score"]))
        bank.stale = set(meta["stale"])
        return bank

    def save(self, path) -> None:
        from pathlib import Path as FsPath

        FsPath(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "MemoryBank":
        from pathlib import Path as FsPath

        return cls.from_bytes(FsPath(path).read_bytes())


def sample_synthetic(prototype, sigma: float, n: int, seed: int) -> np.ndarray:
    """n draws of p + sigma * g, each renormalised to unit length."""
    if sigma < 0 or n < 0:
        raise ValueError("sigma and n must be >= 0")
    p = _normalize(np.asarray(prototype, dtype=np.float64))
    if n == 0:
        return np.zeros((0, len(p)))
    g = np.random.default_rng(seed).standard_normal((n, len(p)))
    draws = p + sigma * g
    return draws / np.linalg.norm(draws, axis=1, keepdims=True)
