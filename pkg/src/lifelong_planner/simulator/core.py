"""10 Hz closed-loop simulation against non-reactive scripted agents."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..geometry import Path, box_corners, boxes_overlap, to_local_frame
from ..planner.idm import DEFAULT_PARAMS, PlannerParams
from ..planner.pdm import PDMPlanner, Trajectory
from ..scenario.types import EgoState, Scenario
from ..state import EGO_LENGTH, EGO_REAR_AXLE, EGO_WIDTH, WorldState, agent_dims

logger = logging.getLogger(__name__)

STATIONARY_SPEED = 0.05


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.1
    horizon: float = 15.0
    reasoner_period: float = 15.0
    ego_length: float = EGO_LENGTH
    ego_width: float = EGO_WIDTH
    comfort_accel: float = 2.4
    comfort_jerk: float = 4.0
    ttc_threshold: float = 1.0
    # weights: ttc, progress, speed, comfort
    weights: tuple = (5.0, 5.0, 4.0, 2.0)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        n = self.horizon / self.dt
        if abs(n - round(n)) > 1e-9 or round(n) < 1:
            raise ValueError(f"horizon {self.horizon} is not a positive multiple of dt {self.dt}")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def reasoner_steps(self) -> int:
        return max(1, int(round(self.reasoner_period / self.dt)))


@dataclass
class SimTrace:
    """Rows k = 0..K of ego state (t, x, y, heading, v, a) and agent poses; ``a`` at row k is
    the acceleration applied over [t_k, t_k+1]. ``params`` has one row per executed step."""

    scenario_id: str
    ego: np.ndarray
    agents: np.ndarray
    params: np.ndarray
    events: list = field(default_factory=list)

    @property
    def n_steps(self) -> int:
        return len(self.ego) - 1

    def to_bytes(self) -> bytes:
        body = json.dumps({"id": self.scenario_id, "events": self.events}, sort_keys=True).encode()
        return self.ego.tobytes() + self.agents.tobytes() + self.params.tobytes() + body

    def to_csv(self) -> str:
        by_step: dict[int, list[str]] = {}
        for ev in self.events:
            by_step.setdefault(ev["step"], []).append(ev["kind"])
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "x", "y", "heading", "v", "a", "event"])
        for k, row in enumerate(self.ego):
            writer.writerow([f"{row[0]:.1f}"] + [repr(float(v)) for v in row[1:]] + [";".join(by_step.get(k, []))])
        return buf.getvalue()


@dataclass(frozen=True)
class ClosedLoopScore:
    no_at_fault_collision: bool
    drivable_area: bool
    ttc_compliance: float
    progress_ratio: float
    speed_compliance: float
    comfort: float
    composite: float

    def to_dict(self) -> dict:
        return {
            "no_at_fault_collision": self.no_at_fault_collision,
            "drivable_area": self.drivable_area,
            "ttc_compliance": self.ttc_compliance,
            "progress_ratio": self.progress_ratio,
            "speed_compliance": self.speed_compliance,
            "comfort": self.comfort,
            "composite": self.composite,
        }


def composite_score(gates, terms, weights) -> float:
    gate = 1.0 if all(gates) else 0.0
    w = np.asarray(weights, dtype=np.float64)
    return float(100.0 * gate * np.dot(w, np.asarray(terms, dtype=np.float64)) / w.sum())


# --------------------------------------------------------------------------- geometry checks

def agent_boxes(agents: np.ndarray, dims: np.ndarray) -> np.ndarray:
    if len(agents) == 0:
        return np.zeros((0, 4, 2))
    return box_corners(agents[:, 0], agents[:, 1], agents[:, 2], dims[:, 0], dims[:, 1])


def collisions(ego: EgoState, agents: np.ndarray, dims: np.ndarray, config: SimConfig) -> list[dict]:
    """Oriented-rectangle overlaps between the ego and every agent, with fault attribution."""
    if len(agents) == 0:
        return []
    ego_box = box_corners(ego.x, ego.y, ego.heading, config.ego_length, config.ego_width)
    hits = np.flatnonzero(boxes_overlap(ego_box, agent_boxes(agents, dims)))
    events = []
    for i in hits:
        rel = to_local_frame(agents[i, :2], ego.x, ego.y, ego.heading)
        v_along = agents[i, 3] * math.cos(ego.heading) + agents[i, 4] * math.sin(ego.heading)
        # struck from behind: the collider sits behind the rear axle and is closing in
        from_behind = rel[0] < -EGO_REAR_AXLE and v_along > ego.v
        at_fault = not (ego.v < STATIONARY_SPEED or from_behind)
        events.append({"kind": "collision", "agent": int(i), "at_fault": bool(at_fault)})
    return events


def time_to_collision(ego_row, agents: np.ndarray, dims: np.ndarray, config: SimConfig) -> float:
    """Gap / closing speed to the nearest laterally-overlapping agent ahead (ego frame)."""
    _, x, y, heading, v, _ = ego_row
    if len(agents) == 0:
        return math.inf
    rel = to_local_frame(agents[:, :2], x, y, heading)
    rel_h = agents[:, 2] - heading
    hl, hw = dims[:, 0] / 2, dims[:, 1] / 2
    hs = np.abs(np.cos(rel_h)) * hl + np.abs(np.sin(rel_h)) * hw
    hd = np.abs(np.sin(rel_h)) * hl + np.abs(np.cos(rel_h)) * hw
    ahead = (rel[:, 0] > 0) & (np.abs(rel[:, 1]) < config.ego_width / 2 + hd)
    if not ahead.any():
        return math.inf
    gap = rel[ahead, 0] - hs[ahead] - config.ego_length / 2
    v_along = agents[ahead, 3] * math.cos(heading) + agents[ahead, 4] * math.sin(heading)
    closing = v - v_along
    ttc = np.where(gap <= 0, 0.0, np.where(closing > 1e-9, gap / np.maximum(closing, 1e-9), np.inf))
    return float(ttc.min())


# --------------------------------------------------------------------------- stepping

def step(world: WorldState, trajectory: Trajectory, scenario: Scenario,
         config: SimConfig = SimConfig()) -> tuple[WorldState, list[dict]]:
    """Advance one tick: ego jumps to the planned waypoint at t + dt, agents replay their futures."""
    wp = trajectory.waypoints
    t_next = world.ego.t + config.dt
    if wp[-1, 4] < t_next - 1e-9:
        raise ValueError("trajectory is shorter than one simulation step")
    k = int(np.searchsorted(wp[:, 4], t_next - 1e-9))
    if abs(wp[k, 4] - t_next) > 1e-9:
        # interpolate between waypoints when the trajectory is sampled differently
        frac = (t_next - wp[k - 1, 4]) / (wp[k, 4] - wp[k - 1, 4])
        row = wp[k - 1] + frac * (wp[k] - wp[k - 1])
        acc = float(trajectory.accel[k - 1])
    else:
        row = wp[k]
        acc = float(trajectory.accel[max(k - 1, 0)])
    ego = EgoState(float(row[0]), float(row[1]), float(row[2]), max(float(row[3]), 0.0), acc, t_next)
    nxt = world.step + 1
    agents = scenario.agent_poses(nxt)
    new_world = WorldState(nxt, ego, agents, world.agent_dims, world.agent_kinds, world.speed_limit)
    events = collisions(ego, agents, world.agent_dims, config)
    for ev in events:
        ev["step"] = nxt
    return new_world, events


def run_episode(scenario: Scenario, policy=None, reasoner=None, params: PlannerParams | None = None,
                config: SimConfig = SimConfig()) -> tuple[SimTrace, ClosedLoopScore]:
    """Closed-loop rollout. ``policy(state, params, route) -> Trajectory``;
    ``reasoner(scenario, state) -> PlannerParams`` (or an object with ``.params``) fires at t = 0
    and then every ``reasoner_period`` seconds."""
    n = config.n_steps
    if scenario.horizon_steps < n:
        raise ValueError(f"scenario futures cover {scenario.horizon_steps} steps, horizon needs {n}")
    policy = policy or PDMPlanner()
    route = Path(scenario.reference_path)
    current = params or DEFAULT_PARAMS
    world = WorldState.initial(scenario)
    ego_rows = [_ego_row(world.ego)]
    agent_rows = [world.agents]
    param_rows = []
    events: list[dict] = []
    aborted = False

    for k in range(n):
        if reasoner is not None and k % config.reasoner_steps == 0:
            try:
                decision = reasoner(scenario, world)
                current = getattr(decision, "params", decision)
                events.append({"kind": "reasoner", "step": k,
                               "source": str(getattr(getattr(decision, "source", None), "value", "direct"))})
            except Exception as exc:  # noqa: BLE001 - selection faults keep the current parameters
                logger.warning("reasoner failure in %s at step %d: %s", scenario.id, k, exc)
                events.append({"kind": "reasoner_failure", "step": k, "error": str(exc)})
        try:
            traj = policy(world, current, route)
            world, new_events = step(world, traj, scenario, config)
        except Exception as exc:  # noqa: BLE001 - any policy fault ends the episode
            logger.warning("policy failure in %s at step %d: %s", scenario.id, k, exc)
            events.append({"kind": "policy_failure", "step": k, "error": str(exc)})
            aborted = True
            break
        ego_rows[-1][5] = world.ego.a
        ego_rows.append(_ego_row(world.ego))
        agent_rows.append(world.agents)
        param_rows.append(current.as_tuple())
        events.extend(new_events)
        if any(ev["kind"] == "collision" for ev in new_events):
            break

    trace = SimTrace(
        scenario_id=scenario.id,
        ego=np.array(ego_rows),
        agents=np.stack(agent_rows) if len(scenario.agents) else np.zeros((len(ego_rows), 0, 5)),
        params=np.array(param_rows).reshape(-1, 5),
        events=events,
    )
    if aborted:
        zero = ClosedLoopScore(True, True, 0.0, 0.0, 0.0, 0.0, 0.0)
        return trace, zero
    return trace, score_trace(trace, scenario, config)


def _ego_row(ego: EgoState) -> list:
    return [ego.t, ego.x, ego.y, ego.heading, ego.v, 0.0]


# --------------------------------------------------------------------------- scoring

def score_trace(trace: SimTrace, scenario: Scenario, config: SimConfig = SimConfig()) -> ClosedLoopScore:
    """Gates x weighted mean of ttc / progress / speed / comfort terms, scaled to [0, 100]."""
    if any(ev["kind"] == "policy_failure" for ev in trace.events):
        return ClosedLoopScore(True, True, 0.0, 0.0, 0.0, 0.0, 0.0)
    ego = trace.ego
    n = max(trace.n_steps, 1)
    rows = ego[:n]
    dims = agent_dims(scenario)

    no_collision = not any(ev["kind"] == "collision" and ev["at_fault"] for ev in trace.events)

    route = Path(scenario.reference_path)
    s, d, _ = route.project(ego[:, 1:3])
    drivable = bool(np.all(np.abs(d) <= scenario.drivable_half_width + 1e-9))

    ttc_ok = 0
    for k in range(n):
        if rows[k, 4] < STATIONARY_SPEED:
            ttc_ok += 1
            continue
        if time_to_collision(rows[k], trace.agents[k], dims, config) >= config.ttc_threshold:
            ttc_ok += 1
    ttc_compliance = ttc_ok / n

    covered = float(s[-1] - s[0])
    if scenario.expert_progress < 1.0:
        progress = 1.0
    else:
        progress = float(np.clip(covered / scenario.expert_progress, 0.0, 1.0))

    speed_compliance = 1.0 - float(np.sum(rows[:, 4] > scenario.speed_limit + 1e-6)) / n

    acc = rows[:, 5]
    prev = np.concatenate([[scenario.ego.a], acc[:-1]])
    jerk = (acc - prev) / config.dt
    ok = (np.abs(acc) <= config.comfort_accel + 1e-9) & (np.abs(jerk) <= config.comfort_jerk + 1e-9)
    comfort = float(ok.mean())

    terms = (ttc_compliance, progress, speed_compliance, comfort)
    composite = composite_score((no_collision, drivable), terms, config.weights)
    return ClosedLoopScore(no_collision, drivable, ttc_compliance, progress, speed_compliance, comfort, composite)


def export_episode(out_dir, trace: SimTrace, score: ClosedLoopScore, extra: dict | None = None) -> None:
    from pathlib import Path as FsPath

    out = FsPath(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = trace.scenario_id.replace("/", "__")
    (out / f"{stem}.csv").write_text(trace.to_csv())
    record = {"scenario": trace.scenario_id, **score.to_dict(), "events": trace.events, **(extra or {})}
    (out / f"{stem}.json").write_text(json.dumps(record, indent=2, sort_keys=True))
