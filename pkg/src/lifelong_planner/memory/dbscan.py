"""Offline and incremental DBSCAN under cosine distance."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from sklearn.base import BaseEstimator, ClusterMixin

NOISE = -1


@dataclass(frozen=True)
class DbscanParams:
    eps: float = 0.3
    min_pts: int = 5

    def __post_init__(self):
        if not 0.0 < self.eps <= 2.0:
            raise ValueError(f"eps must lie in (0, 2], got {self.eps}")
        if int(self.min_pts) != self.min_pts or self.min_pts < 1:
            raise ValueError(f"min_pts must be an integer >= 1, got {self.min_pts}")


def cosine_distances_to(Z: np.ndarray, z: np.ndarray) -> np.ndarray:
    """1 - cos between every row of ``Z`` and ``z``.

    Elementwise product plus a per-row sum keeps d(a, b) == d(b, a) bitwise, which
    matters on the eps boundary when offline and incremental runs must agree.
    """
    Z = np.asarray(Z, dtype=np.float64)
    if len(Z) == 0:
        return np.zeros(0)
    dots = np.sum(Z * np.asarray(z, dtype=np.float64), axis=1)
    return np.clip(1.0 - dots, 0.0, 2.0)


def pairwise_cosine(Z: np.ndarray) -> np.ndarray:
    return np.stack([cosine_distances_to(Z, z) for z in Z]) if len(Z) else np.zeros((0, 0))


def _check_unit(Z: np.ndarray) -> np.ndarray:
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    if Z.size and not np.all(np.isfinite(Z)):
        raise ValueError("embeddings must be finite")
    if Z.size and not np.allclose(np.linalg.norm(Z, axis=1), 1.0, atol=1e-6):
        raise ValueError("embeddings must be unit-norm")
    return Z


def assign_borders(D: np.ndarray, is_core: np.ndarray, core_labels: np.ndarray, eps: float,
                   rows=None) -> np.ndarray:
    """Cluster of the nearest core within eps for each non-core row (ties -> smaller cluster id)."""
    n = D.shape[0]
    rows = range(n) if rows is None else rows
    out = {}
    core_idx = np.flatnonzero(is_core)
    for i in rows:
        if is_core[i]:
            continue
        if len(core_idx) == 0:
            out[i] = NOISE
            continue
        d = D[i, core_idx]
        near = d <= eps
        if not near.any():
            out[i] = NOISE
            continue
        d_min = d[near].min()
        tied = core_idx[near & (d == d_min)]
        out[i] = int(min(core_labels[j] for j in tied))
    return out


def cluster_offline(Z, params: DbscanParams = DbscanParams()) -> tuple[np.ndarray, np.ndarray]:
    """Classic DBSCAN. Returns (labels, is_core); clusters are numbered by their first core index."""
    Z = _check_unit(Z) if len(Z) else np.zeros((0, 0))
    n = len(Z)
    if n == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=bool)
    D = pairwise_cosine(Z)
    adj = D <= params.eps
    is_core = adj.sum(axis=1) >= params.min_pts
    labels = np.full(n, NOISE, dtype=np.int64)
    core_idx = np.flatnonzero(is_core)
    if len(core_idx):
        sub = adj[np.ix_(core_idx, core_idx)]
        _, comp = connected_components(csr_matrix(sub), directed=False)
        # relabel components in order of first appearance so labels are canonical
        remap = {}
        for c in comp:
            remap.setdefault(c, len(remap))
        labels[core_idx] = [remap[c] for c in comp]
    for i, lab in assign_borders(D, is_core, labels, params.eps).items():
        labels[i] = lab
    return labels, is_core


class IncrementalDBSCAN(ClusterMixin, BaseEstimator):
    """DBSCAN that accepts points one at a time.

    Inserting a point raises the neighbour count of everything within eps. Points whose
    count reaches ``min_pts`` become core and join (or bridge) the clusters of their core
    neighbours; bridged clusters keep the smallest id. Cores are never demoted because
    counts only grow, so the final partition matches ``cluster_offline`` on the same set.
    """

    def __init__(self, eps: float = 0.3, min_pts: int = 5):
        self.eps = eps
        self.min_pts = min_pts

    # -- sklearn surface
    def fit(self, X, y=None):
        self._reset(np.asarray(X).shape[1] if len(X) else 0)
        return self.partial_fit(X)

    def partial_fit(self, X, y=None, ids=None):
        X = _check_unit(X) if len(X) else np.zeros((0, 0))
        if not hasattr(self, "Z_"):
            self._reset(X.shape[1])
        ids = list(range(self.next_index_, self.next_index_ + len(X))) if ids is None else list(ids)
        if len(ids) != len(X):
            raise ValueError("ids and X differ in length")
        for z, pid in zip(X, ids):
            self.insert(z, pid)
        return self

    @property
    def labels_(self) -> np.ndarray:
        return self._labels[: self.n_]

    @property
    def core_sample_indices_(self) -> np.ndarray:
        return np.flatnonzero(self._core[: self.n_])

    # -- state
    def _reset(self, dim: int):
        DbscanParams(self.eps, self.min_pts)
        self.Z_ = np.zeros((0, dim))
        self.ids_: list = []
        self._index: dict = {}
        self._counts = np.zeros(0, dtype=np.int64)
        self._labels = np.zeros(0, dtype=np.int64)
        self._core = np.zeros(0, dtype=bool)
        self._D = np.zeros((0, 0))
        self.n_ = 0
        self.next_index_ = 0
        self.next_cluster_ = 0
        self.merges_: list[tuple[int, int]] = []

    def insert(self, z, point_id) -> set[int]:
        """Insert one unit vector; returns the cluster ids whose membership changed."""
        if not hasattr(self, "Z_"):
            self._reset(len(z))
        if point_id in self._index:
            raise KeyError(f"duplicate id {point_id!r}")
        z = _check_unit(z)[0]
        d = cosine_distances_to(self.Z_, z)
        n = self.n_
        self.Z_ = np.vstack([self.Z_, z[None]]) if n else z[None].copy()
        D = np.zeros((n + 1, n + 1))
        D[:n, :n] = self._D
        D[n, :n] = D[:n, n] = d
        self._D = D
        self.ids_.append(point_id)
        self._index[point_id] = n
        self.n_ = n + 1
        self.next_index_ += 1

        nbr = np.flatnonzero(D[n] <= self.eps)  # includes the new point itself
        self._counts = np.append(self._counts, 0)
        self._counts[nbr] += 1
        self._counts[n] = len(nbr)
        self._labels = np.append(self._labels, NOISE)
        self._core = np.append(self._core, False)

        touched: set[int] = set()
        new_cores = [i for i in nbr if not self._core[i] and self._counts[i] >= self.min_pts]
        for c in sorted(new_cores):
            self._core[c] = True
            old = self._labels[c]
            near = np.flatnonzero((self._D[c] <= self.eps) & self._core)
            found = sorted({int(self._labels[j]) for j in near if j != c and self._labels[j] != NOISE
                            and self._core[j]})
            if found:
                target = found[0]
                for other in found[1:]:
                    self._labels[self._labels == other] = target
                    self.merges_.append((target, other))
                    touched.add(other)
            else:
                target = self.next_cluster_
                self.next_cluster_ += 1
            self._labels[c] = target
            touched.add(target)
            if old != NOISE:
                touched.add(int(old))

        # re-derive border assignments that could have changed
        rows = set()
        if not self._core[n]:
            rows.add(n)
        for c in new_cores:
            rows.update(int(j) for j in np.flatnonzero(self._D[c] <= self.eps))
        for lab in touched:
            rows.update(int(j) for j in np.flatnonzero(self._labels == lab))
        for i, lab in assign_borders(self._D, self._core[: self.n_], self._labels[: self.n_], self.eps,
                                     sorted(rows)).items():
            if self._labels[i] != lab:
                touched.update(x for x in (int(self._labels[i]), lab) if x != NOISE)
                self._labels[i] = lab
        return touched

    def label_of(self, point_id) -> int:
        return int(self._labels[self._index[point_id]])

    def is_core(self, point_id) -> bool:
        return bool(self._core[self._index[point_id]])
