import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lifelong_planner.memory import (
    NOISE,
    DbscanParams,
    MemoryBank,
    MemoryFormatError,
    cluster_offline,
    sample_synthetic,
)
from lifelong_planner.planner import PlannerParams

from helpers import random_unit

EPS = (1 - math.cos(0.1)) * 1.01


def arc(plane, angles):
    """Unit vectors in the x-y (plane=1) or x-z (plane=2) plane."""
    out = np.zeros((len(angles), 3))
    out[:, 0] = np.cos(angles)
    out[:, plane] = np.sin(angles)
    return out


def two_chains(b_angle=0.1):
    # two chains meeting near the x axis; their nearest cores are not linked to each other
    a = arc(1, [0.1, 0.15, 0.2, 0.25, 0.3])
    b = arc(2, [b_angle, b_angle + 0.05, b_angle + 0.1, b_angle + 0.15, b_angle + 0.2])
    return np.vstack([a, b, [[1.0, 0.0, 0.0]]])


def test_border_tie_goes_to_smaller_cluster():
    labels, core = cluster_offline(two_chains(), DbscanParams(EPS, 4))
    assert not core[-1]
    assert labels[-1] == min(labels[0], labels[5]) == 0


def test_border_goes_to_nearest_core():
    for order in (range(11), reversed(range(11))):
        Z = two_chains(0.09)
        bank = MemoryBank(DbscanParams(EPS, 4))
        for i in order:
            bank.insert(i, Z[i])
        assert bank.entries[10].cluster == bank.entries[5].cluster != bank.entries[0].cluster


def test_knn_single_entry_clamps():
    bank = MemoryBank()
    bank.insert(7, [1.0, 0.0])
    hits = bank.query_knn([0.0, 1.0], 3)
    assert [(e.id, d) for e, d in hits] == [(7, 1.0)]


def test_knn_exact_match_first():
    Z = random_unit(np.random.default_rng(1), 6, 4)
    bank = MemoryBank()
    for i, z in enumerate(Z):
        bank.insert(i, z)
    (e, d), *_ = bank.query_knn(Z[3], 2)
    assert e.id == 3 and d == pytest.approx(0.0, abs=1e-12)


def test_knn_matches_exhaustive_sort():
    Z = np.eye(5) + 0.05 * np.random.default_rng(2).standard_normal((5, 5))
    Z /= np.linalg.norm(Z, axis=1, keepdims=True)
    bank = MemoryBank()
    for i, z in enumerate(Z):
        bank.insert(100 - i, z)
    q = Z[2] + Z[4]
    q /= np.linalg.norm(q)
    oracle = sorted(((1 - float(z @ q)), 100 - i) for i, z in enumerate(Z))[:2]
    got = [(e.id, d) for e, d in bank.query_knn(q, 2)]
    assert [i for _, i in oracle] == [i for i, _ in got]
    assert np.allclose([d for d, _ in oracle], [d for _, d in got])


def test_knn_ties_by_id():
    bank = MemoryBank()
    for i in (5, 2, 9):
        bank.insert(i, [1.0, 0.0])
    assert [e.id for e, _ in bank.query_knn([1.0, 0.0], 3)] == [2, 5, 9]
    with pytest.raises(ValueError):
        bank.query_knn([1.0, 0.0], 0)


@settings(max_examples=30)
@given(st.integers(0, 10_000), st.integers(1, 40), st.integers(1, 10))
def test_monotone_size_and_sorted_distances(seed, n, k):
    rng = np.random.default_rng(seed)
    Z = random_unit(rng, n, 5)
    bank = MemoryBank(DbscanParams(0.3, 3))
    for i, z in enumerate(Z):
        bank.insert(i, z)
        assert len(bank) == i + 1
    d = [dist for _, dist in bank.query_knn(random_unit(rng, 1, 5)[0], k)]
    assert len(d) == min(k, n) and d == sorted(d)
    for e in bank.entries.values():
        assert not e.is_core or e.cluster != NOISE
    for c in bank.clusters().values():
        assert c.members and all(bank.entries[m].cluster == c.cluster_id for m in c.members)
        assert np.linalg.norm(c.centroid) == pytest.approx(1.0)


def test_duplicate_id_rejected():
    bank = MemoryBank()
    bank.insert(1, [1.0, 0.0])
    with pytest.raises(KeyError):
        bank.insert(1, [0.0, 1.0])


def test_stale_tracking_and_params():
    bank = MemoryBank(DbscanParams(EPS, 3))
    Z = arc(1, [0.0, 0.1, 0.2])
    for i, z in enumerate(Z):
        bank.insert(i, z, label="changing_lane")
    assert bank.stale == {0}
    bank.set_params(0, PlannerParams(lo=1.0), 88.0)
    assert bank.stale == set() and bank.tuned_clusters()[0].best_params.lo == 1.0
    bank.insert(3, arc(1, [0.3])[0])
    assert bank.stale == {0}
    with pytest.raises(KeyError):
        bank.set_params(5, PlannerParams(), 1.0)


def _bank(n, tuned):
    bank = MemoryBank(DbscanParams(0.2, 2))
    for i, z in enumerate(random_unit(np.random.default_rng(n), n, 3)):
        bank.insert(i * 3, z, label=i % 14 if i % 2 else None, meta={"seed": i})
    if tuned:
        for cid in bank.cluster_ids():
            bank.set_params(cid, PlannerParams(s0=1.0 + cid), 50.0 + cid)
    return bank


@pytest.mark.parametrize("n,tuned", [(0, False), (1, False), (30, True)])
def test_snapshot_roundtrip(n, tuned):
    bank = _bank(n, tuned)
    back = MemoryBank.from_bytes(bank.to_bytes())
    assert back.to_bytes() == bank.to_bytes()
    assert sorted(back.entries) == sorted(bank.entries)
    for i, e in bank.entries.items():
        f = back.entries[i]
        assert np.array_equal(e.z, f.z) and (e.label, e.cluster, e.is_core, e.meta) == (f.label, f.cluster, f.is_core, f.meta)
    assert {c: s.best_params for c, s in back.clusters().items()} == {c: s.best_params for c, s in bank.clusters().items()}


def test_snapshot_rejects_bad_bytes(tmp_path):
    data = bytearray(_bank(5, False).to_bytes())
    data[4] ^= 0xFF
    with pytest.raises(MemoryFormatError):
        MemoryBank.from_bytes(bytes(data))
    with pytest.raises(MemoryFormatError):
        MemoryBank.from_bytes(b"nope")


def test_sample_synthetic():
    p = np.array([3.0, 4.0, 0.0])
    assert sample_synthetic(p, 0.1, 0, seed=0).shape == (0, 3)
    assert np.allclose(sample_synthetic(p, 0.0, 4, seed=0), [[0.6, 0.8, 0.0]] * 4)
    draws = sample_synthetic(p, 0.05, 1000, seed=0)
    assert np.allclose(np.linalg.norm(draws, axis=1), 1.0)
    mean = draws.mean(axis=0)
    assert 1 - mean @ p / (np.linalg.norm(mean) * 5.0) <= 0.01
    assert np.array_equal(draws, sample_synthetic(p, 0.05, 1000, seed=0))
    with pytest.raises(ValueError):
        sample_synthetic(p, -1.0, 3, seed=0)
