"""PDM-style behaviour planner: IDM candidates over lateral offsets and target speeds,
pre-simulated against constant-velocity forecasts, best candidate executed."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry import Path
from ..state import EGO_LENGTH, EGO_REAR_AXLE, EGO_WIDTH, WorldState, is_pedestrian
from .idm import IDM_DELTA, IDM_HEADWAY, PlannerParams
from .rollout import braking_rollout, rollout_candidates

SPEED_FRACTIONS = (0.2, 0.4, 0.6, 0.8, 1.0)
PEDESTRIAN_SPEED_CAP = 3.0
# composite weights shared with closed-loop scoring: ttc, progress, speed, comfort
SCORE_WEIGHTS = (5.0, 5.0, 4.0, 2.0)


@dataclass(frozen=True)
class PlannerConfig:
    dt: float = 0.1
    horizon: float = 4.0
    T_h: float = IDM_HEADWAY
    delta: float = IDM_DELTA
    steering_tau: float = 0.5
    lateral_margin: float = 0.2
    comfort_accel: float = 2.4
    comfort_jerk: float = 4.0
    speed_fractions: tuple = SPEED_FRACTIONS

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))


@dataclass(frozen=True)
class Candidate:
    index: int
    offset: float
    fraction: float
    target_speed: float


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Waypoints (x, y, heading, v, t) every ``dt``; ``accel[k]`` is applied over [t_k, t_k+1]."""

    waypoints: np.ndarray
    accel: np.ndarray
    station: np.ndarray = field(default=None)
    offset: np.ndarray = field(default=None)
    candidate: int = -1

    def __post_init__(self):
        w = self.waypoints
        if w.ndim != 2 or w.shape[1] != 5 or len(w) < 2:
            raise ValueError("trajectory needs at least two (x, y, heading, v, t) waypoints")
        if not np.all(np.isfinite(w)):
            raise ValueError("trajectory has non-finite values")
        if np.any(np.diff(w[:, 4]) <= 0):
            raise ValueError("trajectory timestamps must strictly increase")
        if np.any(w[:, 3] < 0):
            raise ValueError("trajectory speeds must be >= 0")

    @property
    def fallback(self) -> bool:
        return self.candidate < 0

    def to_bytes(self) -> bytes:
        return self.waypoints.tobytes() + self.accel.tobytes()


def forecast_agents(state: WorldState, horizon: float, dt: float) -> np.ndarray:
    """Constant-velocity extrapolation of every agent; (A, n+1, 5) poses, step 0 = now."""
    if horizon <= 0:
        raise ValueError("forecast horizon must be positive")
    n = int(round(horizon / dt))
    agents = np.asarray(state.agents, dtype=np.float64)
    if len(agents) == 0:
        return np.zeros((0, n + 1, 5))
    vel = agents[:, 3:5].copy()
    speed = np.hypot(vel[:, 0], vel[:, 1])
    cap = is_pedestrian(state.agent_kinds) & (speed > PEDESTRIAN_SPEED_CAP)
    vel[cap] *= (PEDESTRIAN_SPEED_CAP / speed[cap])[:, None]
    t = np.arange(n + 1) * dt
    out = np.empty((len(agents), n + 1, 5))
    out[:, :, 0] = agents[:, None, 0] + vel[:, None, 0] * t
    out[:, :, 1] = agents[:, None, 1] + vel[:, None, 1] * t
    out[:, :, 2] = agents[:, None, 2]
    out[:, :, 3] = vel[:, None, 0]
    out[:, :, 4] = vel[:, None, 1]
    return out


def generate_candidates(route, p: PlannerParams, v0: float,
                        fractions=SPEED_FRACTIONS) -> list[Candidate]:
    """Offsets {0, +lo, -lo} x target-speed fractions of ``v0``, duplicates removed."""
    if route is None or len(np.asarray(getattr(route, "xy", route))) < 2:
        raise ValueError("route is empty")
    offsets = [0.0] if p.lo == 0 else [0.0, p.lo, -p.lo]
    out = []
    for off in offsets:
        for frac in fractions:
            out.append(Candidate(len(out), off, frac, frac * v0))
    return out


def candidate_centerline(route: Path, offset: float, s_from: float, s_to: float, n: int = 50) -> np.ndarray:
    """Offset copy of the route centerline between two stations, (n, 2)."""
    s = np.linspace(s_from, s_to, n)
    x, y, _ = route.frenet_to_xy(s, np.full(n, offset))
    return np.stack([x, y], axis=-1)


class PDMPlanner:
    def __init__(self, config: PlannerConfig | None = None):
        self.config = config or PlannerConfig()

    def __call__(self, state: WorldState, params: PlannerParams, route: Path) -> Trajectory:
        return self.plan(state, params, route)

    def plan(self, state: WorldState, params: PlannerParams, route: Path) -> Trajectory:
        cfg = self.config
        n = cfg.n_steps
        ego = state.ego
        s_e, d_e, _ = route.project(np.array([[ego.x, ego.y]]))
        s_e, d_e = float(s_e[0]), float(d_e[0])

        fc = forecast_agents(state, cfg.horizon, cfg.dt)
        lookahead = max(ego.v, state.speed_limit) * cfg.horizon + 60.0
        if len(fc):
            ag_s, ag_d, ph = route.project(fc[..., :2], s_e - 40.0, s_e + lookahead)
            rel = fc[..., 2] - ph
            half_l = state.agent_dims[:, 0:1] / 2
            half_w = state.agent_dims[:, 1:2] / 2
            ag_hs = (np.abs(np.cos(rel)) * half_l + np.abs(np.sin(rel)) * half_w)[:, 0]
            ag_hd = (np.abs(np.sin(rel)) * half_l + np.abs(np.cos(rel)) * half_w)[:, 0]
            ag_v = fc[..., 3] * np.cos(ph) + fc[..., 4] * np.sin(ph)
        else:
            ag_s = ag_d = ag_v = np.zeros((0, n + 1))
            ag_hs = ag_hd = np.zeros(0)

        cands = generate_candidates(route, params, state.speed_limit, cfg.speed_fractions)
        offsets = np.array([c.offset for c in cands])
        targets = np.array([max(c.target_speed, 1e-3) for c in cands])
        traj, collided, ttc_ok, speed_ok, comfort_ok = rollout_candidates(
            s_e, d_e, ego.v, ego.a, offsets, targets,
            np.ascontiguousarray(ag_s), np.ascontiguousarray(ag_d), np.ascontiguousarray(ag_v),
            np.ascontiguousarray(ag_hs), np.ascontiguousarray(ag_hd),
            params.s0, params.a_m, params.b, params.th, cfg.T_h, cfg.delta, cfg.dt, n, cfg.steering_tau,
            EGO_LENGTH / 2, EGO_WIDTH / 2, EGO_REAR_AXLE, cfg.lateral_margin, state.speed_limit,
            cfg.comfort_accel, cfg.comfort_jerk)

        if collided.all():
            best = -1
            chosen = braking_rollout(s_e, d_e, ego.v, params.b, cfg.dt, n)
        else:
            scores = candidate_scores(traj[:, -1, 0] - s_e, collided, ttc_ok, speed_ok, comfort_ok)
            best = int(np.argmax(scores))
            chosen = traj[best]
        return self._to_trajectory(route, chosen, ego.t, best)

    def _to_trajectory(self, route: Path, rollout: np.ndarray, t0: float, candidate: int) -> Trajectory:
        dt = self.config.dt
        s, d, v, a = rollout[:, 0], rollout[:, 1], rollout[:, 2], rollout[:, 3]
        x, y, h = route.frenet_to_xy(s, d)
        d_dot = np.gradient(d, dt) if len(d) > 1 else np.zeros_like(d)
        heading = h + np.where(v > 0.1, np.arctan2(d_dot, np.maximum(v, 0.1)), 0.0)
        t = t0 + np.arange(len(s)) * dt
        wp = np.stack([x, y, heading, v, t], axis=-1)
        return Trajectory(wp, a.copy(), s.copy(), d.copy(), candidate)


def candidate_scores(progress, collided, ttc_ok, speed_ok, comfort_ok, weights=SCORE_WEIGHTS) -> np.ndarray:
    """Gate x weighted mean of (ttc, progress ratio, speed, comfort); progress normalised by the best safe candidate."""
    progress = np.asarray(progress, dtype=np.float64)
    safe = ~np.asarray(collided)
    best_progress = progress[safe].max() if safe.any() else 0.0
    ratio = np.clip(progress / best_progress, 0.0, 1.0) if best_progress > 1e-6 else np.ones_like(progress)
    w = np.asarray(weights)
    terms = np.stack([ttc_ok, ratio, speed_ok, comfort_ok], axis=-1)
    return safe * (terms @ w) / w.sum()
