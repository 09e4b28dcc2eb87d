"""Hand-built scenes and brute-force reference implementations used across the tests."""
from __future__ import annotations

import math

import numpy as np

from lifelong_planner.planner import DEFAULT_PARAMS, IdmContext, idm_accel
from lifelong_planner.scenario.types import (
    AGENT_CHANNELS, DT, FOOTPRINTS, T_HIST, AgentKind, AgentTrack, EgoState, Scenario, VectorizedMap, get_class,
)


def track(agent_id, x, y, vx=0.0, vy=0.0, kind=AgentKind.VEHICLE, length=None, width=None, observed=T_HIST):
    """Agent that moved at constant velocity during its history and ends at (x, y)."""
    kind = AgentKind(kind)
    t = (np.arange(T_HIST) - (T_HIST - 1)) * DT
    h = np.zeros((T_HIST, AGENT_CHANNELS))
    h[:, 0], h[:, 1] = x + vx * t, y + vy * t
    h[:, 2], h[:, 3] = vx, vy
    h[:, 5 + int(kind)] = 1.0
    mask = np.zeros(T_HIST, dtype=bool)
    mask[T_HIST - observed:] = True
    h[~mask] = 0.0
    L, W = FOOTPRINTS[kind]
    return AgentTrack(agent_id, kind, h, mask, float(length or L), float(width or W))


def constant_future(x, y, vx, vy, n, heading=None):
    t = np.arange(1, n + 1) * DT
    h = math.atan2(vy, vx) if heading is None and (vx or vy) else (heading or 0.0)
    return np.stack([x + vx * t, y + vy * t, np.full(n, h), np.full(n, vx), np.full(n, vy)], axis=-1)


def stopping_future(x, v, decel, n, y=0.0):
    """Lead on the x axis braking at ``decel`` until stopped."""
    out = np.zeros((n, 5))
    s, cur = x, v
    for k in range(n):
        nv = max(cur - decel * DT, 0.0)
        s += 0.5 * (cur + nv) * DT
        cur = nv
        out[k] = (s, y, 0.0, cur, 0.0)
    return out


def straight_scene(ego_v=10.0, agents=(), futures=(), speed_limit=15.0, horizon=15.0, cls="following_lane_with_lead",
                   seed=0, expert_progress=None, length=400.0, ego_a=0.0):
    n = int(round(horizon / DT))
    agents = tuple(agents)
    fut = np.stack(list(futures)) if agents else np.zeros((0, n, 5))
    ref = np.array([[-20.0, 0.0], [length, 0.0]])
    if expert_progress is None:
        expert_progress = speed_limit * horizon * 0.9
    return Scenario(
        map=VectorizedMap.empty(), agents=agents, ego=EgoState(0.0, 0.0, 0.0, ego_v, ego_a, 0.0), ego_route=(),
        label=get_class(cls), seed=seed, future=fut, reference_path=ref, speed_limit=speed_limit,
        expert_progress=expert_progress, drivable_half_width=1.75,
    )


# --------------------------------------------------------------------------- reference implementations

def idm_reference(v, v0, s, dv, s0, a_m, b, T_h=1.5, delta=4.0):
    """Direct transcription of the IDM law, written independently of the package."""
    s_star = s0 + max(0.0, v * T_h + v * dv / (2.0 * math.sqrt(a_m * b)))
    return s_star, a_m * (1.0 - (v / v0) ** delta - (s_star / s) ** 2)


def brute_force_dbscan(Z, eps, min_pts):
    """Density-connectivity by definition: flood fill from every core point, border -> nearest core."""
    Z = np.asarray(Z, dtype=np.float64)
    n = len(Z)
    D = np.array([[max(0.0, min(2.0, 1.0 - float(np.sum(Z[i] * Z[j])))) for j in range(n)] for i in range(n)])
    near = D <= eps
    core = near.sum(axis=1) >= min_pts
    comp = -np.ones(n, dtype=int)
    c = 0
    for i in range(n):
        if core[i] and comp[i] < 0:
            stack = [i]
            comp[i] = c
            while stack:
                j = stack.pop()
                for k in np.flatnonzero(near[j] & core):
                    if comp[k] < 0:
                        comp[k] = c
                        stack.append(k)
            c += 1
    labels = comp.copy()
    for i in range(n):
        if core[i]:
            continue
        cands = [j for j in range(n) if core[j] and near[i, j]]
        if cands:
            dmin = min(D[i, j] for j in cands)
            labels[i] = min(comp[j] for j in cands if D[i, j] == dmin)
    return labels, core


def same_partition(a, b) -> bool:
    """Equal up to relabelling, with noise (-1) kept fixed."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape or not np.array_equal(a < 0, b < 0):
        return False
    fwd, back = {}, {}
    for x, y in zip(a, b):
        if x < 0:
            continue
        if fwd.setdefault(x, y) != y or back.setdefault(y, x) != x:
            return False
    return True


def random_unit(rng, n, dim):
    Z = rng.standard_normal((n, dim))
    return Z / np.linalg.norm(Z, axis=1, keepdims=True)


def follow_lead(lead_accel, v_ego, v_lead, gap, p=DEFAULT_PARAMS, v0=15.0, dt=0.1):
    """Single-lane IDM follower; returns the smallest gap seen."""
    min_gap = gap
    for a_lead in lead_accel:
        dv = v_ego - v_lead
        acc = idm_accel(IdmContext(v_ego, v0, max(gap, 1e-6), dv), p)
        new_ego = max(v_ego + acc * dt, 0.0)
        new_lead = max(v_lead + a_lead * dt, 0.0)
        gap += 0.5 * (v_lead + new_lead) * dt - 0.5 * (v_ego + new_ego) * dt
        v_ego, v_lead = new_ego, new_lead
        min_gap = min(min_gap, gap)
    return min_gap


def random_lead_profile(rng, b, steps=600):
    out = np.empty(steps)
    k = 0
    while k < steps:
        dur = rng.integers(5, 60)
        out[k:k + dur] = rng.uniform(-b, 1.0)
        k += dur
    return out


def finite_difference_error(loss_fn, tensors, rng, per_tensor=3, step=1e-5, floor=1e-6):
    """Worst relative gap between autograd and central differences over sampled coordinates.

    ``tensors`` are (name, leaf tensor) pairs whose ``.grad`` has already been filled.
    Coordinates whose gradient is below ``floor`` in both estimates are skipped.
    """
    import torch

    worst, where = 0.0, None
    for name, p in tensors:
        flat = p.data.view(-1)
        for i in rng.choice(flat.numel(), size=min(per_tensor, flat.numel()), replace=False):
            old = float(flat[i])
            with torch.no_grad():
                flat[i] = old + step
                up = float(loss_fn())
                flat[i] = old - step
                down = float(loss_fn())
                flat[i] = old
            numeric = (up - down) / (2 * step)
            analytic = float(p.grad.view(-1)[i])
            scale = max(abs(numeric), abs(analytic))
            if scale > floor and abs(numeric - analytic) / scale > worst:
                worst, where = abs(numeric - analytic) / scale, f"{name}[{int(i)}]"
    return worst, where
