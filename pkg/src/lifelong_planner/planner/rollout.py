"""Compiled pre-simulation of IDM candidate policies in route (Frenet) coordinates."""
import math

import numba
import numpy as np

STATIONARY_SPEED = 0.05  # m/s


@numba.njit(cache=True)
def idm_step_accel(v, v0, gap, dv, s0, a_m, b, T_h, delta):
    free = 1.0 - (v / v0) ** delta
    if gap == np.inf:
        return a_m * free
    dyn = v * T_h + v * dv / (2.0 * math.sqrt(a_m * b))
    s_star = s0 + max(0.0, dyn)
    return a_m * (free - (s_star / gap) ** 2)


@numba.njit(cache=True)
def lead_and_ttc(s, d, v, k, ag_s, ag_d, ag_v, ag_hs, ag_hd, ego_hl, ego_hw, lat_margin):
    """Gap/speed of the nearest laterally-overlapping agent ahead at forecast step k, plus TTC."""
    gap = np.inf
    v_lead = 0.0
    for i in range(ag_s.shape[0]):
        if abs(ag_d[i, k] - d) >= ego_hw + ag_hd[i] + lat_margin:
            continue
        if ag_s[i, k] <= s:
            continue
        g = ag_s[i, k] - ag_hs[i] - s - ego_hl
        if g < gap:
            gap = g
            v_lead = ag_v[i, k]
    ttc = np.inf
    if gap <= 0.0:
        ttc = 0.0
    elif gap < np.inf and v > v_lead:
        ttc = gap / (v - v_lead)
    return gap, v_lead, ttc


@numba.njit(cache=True)
def at_fault_overlap(s, d, v, k, ag_s, ag_d, ag_v, ag_hs, ag_hd, ego_hl, ego_hw, rear_axle):
    """True if the ego footprint overlaps an agent in a way attributed to the ego."""
    if v < STATIONARY_SPEED:
        return False
    for i in range(ag_s.shape[0]):
        if abs(ag_s[i, k] - s) < ag_hs[i] + ego_hl and abs(ag_d[i, k] - d) < ag_hd[i] + ego_hw:
            if ag_s[i, k] < s - rear_axle and ag_v[i, k] > v:
                continue
            return True
    return False


@numba.njit(cache=True)
def rollout_candidates(s_e, d_e, v_e, a_prev, offsets, targets,
                       ag_s, ag_d, ag_v, ag_hs, ag_hd,
                       s0, a_m, b, th, T_h, delta, dt, n_steps, tau,
                       ego_hl, ego_hw, rear_axle, lat_margin, speed_limit, comfort_a, comfort_jerk):
    n_c = offsets.shape[0]
    traj = np.zeros((n_c, n_steps + 1, 4))  # s, d, v, a
    collided = np.zeros(n_c, dtype=np.bool_)
    ttc_ok = np.zeros(n_c)
    speed_ok = np.zeros(n_c)
    comfort_ok = np.zeros(n_c)
    alpha = 1.0 - math.exp(-dt / tau)
    for c in range(n_c):
        s = s_e
        d = d_e
        v = v_e
        a_last = a_prev
        traj[c, 0, 0] = s
        traj[c, 0, 1] = d
        traj[c, 0, 2] = v
        for k in range(n_steps):
            gap, v_lead, ttc = lead_and_ttc(s, d, v, k, ag_s, ag_d, ag_v, ag_hs, ag_hd, ego_hl, ego_hw, lat_margin)
            acc = idm_step_accel(v, targets[c], max(gap, 1e-3), v - v_lead, s0, a_m, b, T_h, delta)
            if ttc < th:
                acc = min(acc, -b)
            acc = min(max(acc, -b), a_m)
            if v + acc * dt < 0.0:
                acc = -v / dt
            jerk = (acc - a_last) / dt
            if abs(acc) <= comfort_a + 1e-9 and abs(jerk) <= comfort_jerk + 1e-9:
                comfort_ok[c] += 1.0
            if ttc >= th or v < STATIONARY_SPEED:
                ttc_ok[c] += 1.0
            if v <= speed_limit + 1e-6:
                speed_ok[c] += 1.0
            nv = max(v + acc * dt, 0.0)
            s += 0.5 * (v + nv) * dt
            v = nv
            d += (offsets[c] - d) * alpha
            a_last = acc
            traj[c, k, 3] = acc
            traj[c, k + 1, 0] = s
            traj[c, k + 1, 1] = d
            traj[c, k + 1, 2] = v
            if not collided[c] and at_fault_overlap(s, d, v, k + 1, ag_s, ag_d, ag_v, ag_hs, ag_hd,
                                                    ego_hl, ego_hw, rear_axle):
                collided[c] = True
        traj[c, n_steps, 3] = traj[c, n_steps - 1, 3]
    return traj, collided, ttc_ok / n_steps, speed_ok / n_steps, comfort_ok / n_steps


@numba.njit(cache=True)
def braking_rollout(s_e, d_e, v_e, b, dt, n_steps):
    traj = np.zeros((n_steps + 1, 4))
    s = s_e
    v = v_e
    traj[0, 0] = s
    traj[0, 1] = d_e
    traj[0, 2] = v
    for k in range(n_steps):
        acc = -b
        if v + acc * dt < 0.0:
            acc = -v / dt
        nv = max(v + acc * dt, 0.0)
        s += 0.5 * (v + nv) * dt
        v = nv
        traj[k, 3] = acc
        traj[k + 1, 0] = s
        traj[k + 1, 1] = d_e
        traj[k + 1, 2] = v
    traj[n_steps, 3] = 0.0
    return traj
