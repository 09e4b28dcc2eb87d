"""Parameterised synthetic scenarios for the ten common and four long-tail classes.

Every template is built in the ego frame, moved to a random world pose and
normalised back, so the normalisation path is exercised on every sample.
Each template exposes a handful of physical knobs (speeds, gaps, actor
counts); unspecified knobs are drawn from seeded ranges.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..geometry import Path, polyline_headings, resample_polyline, rigid_transform
from .transform import normalize_to_ego
from .types import (
    AGENT_CHANNELS,
    CROSSWALK_POINTS,
    DT,
    FOOTPRINTS,
    N_AGENTS,
    N_CROSSWALKS,
    N_ROADS,
    N_ROUTE_LANES,
    QUERY_RADIUS,
    ROAD_POINTS,
    ROUTE_POINTS,
    T_HIST,
    AgentKind,
    AgentTrack,
    EgoState,
    Scenario,
    ScenarioClass,
    TrafficLight,
    VectorizedMap,
    get_class,
    wrap_angle,
)

LANE_WIDTH = 3.5
EGO_START_STATION = 10.0
EGO_HALF_LENGTH, EGO_HALF_WIDTH = 2.3, 1.0

# privileged expert used to set the achievable progress of each scenario
EXPERT_PARAMS = dict(s0=2.0, a_m=1.5, b=2.0, T_h=1.5, delta=4.0)

COMMON_KNOBS = {"horizon": 15.0, "route_length": None, "query_radius": QUERY_RADIUS}


class GeneratorError(ValueError):
    pass


@dataclass
class _AgentSpec:
    kind: AgentKind
    path: np.ndarray
    s0: float
    v0: float
    events: list = field(default_factory=list)  # (t_start, accel); applies until the next event
    v_max: float = 40.0
    length: float | None = None
    width: float | None = None
    first_obs: int = 0
    expert_blocking: bool = True


class _SceneBuilder:
    def __init__(self, rng: np.random.Generator, knobs: dict):
        self.rng = rng
        self.knobs = knobs
        self.lanes: list[tuple[np.ndarray, TrafficLight]] = []
        self.crosswalks: list[np.ndarray] = []
        self.agents: list[_AgentSpec] = []
        self.route: np.ndarray | None = None
        self.ego_v = 0.0
        self.speed_limit = 10.0
        self.drivable_half_width = LANE_WIDTH / 2.0
        self.expert = dict(EXPERT_PARAMS)

    def u(self, lo, hi):
        return float(self.rng.uniform(lo, hi))

    def knob(self, name, lo, hi=None):
        value = self.knobs.get(name)
        if value is not None:
            return value
        return lo if hi is None else self.u(lo, hi)

    def lane(self, xy, tl=TrafficLight.UNKNOWN):
        self.lanes.append((np.asarray(xy, dtype=np.float64), tl))

    def agent(self, kind, path, s0, v0, **kw):
        self.agents.append(_AgentSpec(AgentKind(kind), np.asarray(path, dtype=np.float64), s0, v0, **kw))

    def vehicle_on_lane(self, lane_xy, x_ahead, v, **kw):
        """Vehicle on a straight +x or -x lane whose centre is at longitudinal coordinate ``x_ahead``."""
        path = Path(lane_xy)
        s, _, _ = path.project(np.array([[x_ahead, lane_xy[0][1]]]))
        self.agent(AgentKind.VEHICLE, lane_xy, float(s[0]), v, **kw)


def _line(x0, y0, x1, y1, n=2):
    return np.stack([np.linspace(x0, x1, n), np.linspace(y0, y1, n)], axis=-1)


def _arc(cx, cy, radius, a0, a1, n=60):
    t = np.linspace(a0, a1, n)
    return np.stack([cx + radius * np.cos(t), cy + radius * np.sin(t)], axis=-1)


def _turn_path(x_turn, radius, left: bool, tail: float, back=EGO_START_STATION):
    """Straight along +x until ``x_turn`` then a 90 degree arc and a straight tail."""
    sign = 1.0 if left else -1.0
    straight = _line(-back, 0.0, x_turn, 0.0, 20)
    cy = sign * radius
    start = -sign * math.pi / 2
    arc = _arc(x_turn, cy, radius, start, start + sign * math.pi / 2)
    ex, ey = x_turn + radius, cy
    end = _line(ex, ey, ex, ey + sign * tail, 20)
    return np.concatenate([straight, arc[1:], end[1:]])


def _offset_polyline(xy, d):
    """Parallel curve at lateral offset ``d`` (left positive)."""
    h = polyline_headings(xy)
    return np.stack([xy[:, 0] - d * np.sin(h), xy[:, 1] + d * np.cos(h)], axis=-1)


def _route_length(b: _SceneBuilder):
    rl = b.knobs.get("route_length")
    if rl is None:
        horizon = b.knobs["horizon"]
        return max(b.speed_limit, b.ego_v) * (horizon + 4.0) * 1.2 + 80.0
    if not rl > 0:
        raise GeneratorError(f"route_length must be positive, got {rl}")
    return float(rl)


# --------------------------------------------------------------------------- templates

def _straight_lanes(b, length, same_left=1, same_right=0, opposite_left=False, back=60.0):
    lanes = {}
    for k in range(-same_right, same_left + 1):
        xy = _line(-back, k * LANE_WIDTH, length, k * LANE_WIDTH, 2)
        b.lane(xy)
        lanes[k] = xy
    if opposite_left:
        k = same_left + 1
        xy = _line(length, k * LANE_WIDTH, -back, k * LANE_WIDTH, 2)
        b.lane(xy)
        lanes["opp"] = xy
    return lanes


def _side_traffic(b, lane_xy, count, v_lo, v_hi, x_lo, x_hi, min_spacing=9.0):
    xs = []
    for _ in range(count * 4):
        if len(xs) >= count:
            break
        x = b.u(x_lo, x_hi)
        if all(abs(x - o) > min_spacing for o in xs):
            xs.append(x)
    for x in sorted(xs):
        b.vehicle_on_lane(lane_xy, x, b.u(v_lo, v_hi))


def _t_behind_long_vehicle(b: _SceneBuilder):
    b.speed_limit = 13.0
    v_truck = b.knob("truck_speed", 5.0, 8.0)
    gap = b.knob("gap", 12.0, 25.0)
    length = b.knob("truck_length", 12.0, 16.0)
    b.ego_v = v_truck + b.u(0.0, 1.5)
    L = _route_length(b)
    lanes = _straight_lanes(b, L, same_left=1, opposite_left=True)
    b.route = lanes[0]
    t_ev = b.u(3.0, 8.0)
    b.vehicle_on_lane(lanes[0], EGO_HALF_LENGTH + gap + length / 2, v_truck,
                      events=[(t_ev, b.u(-0.4, 0.4)), (t_ev + 2.0, 0.0)], length=length, width=2.5)
    _side_traffic(b, lanes[1], int(b.knob("n_side", 1, 4)), 8.0, 11.0, -30.0, 60.0)
    _side_traffic(b, lanes["opp"], int(b.rng.integers(0, 3)), 9.0, 12.0, 20.0, 120.0)


def _t_following_lane_with_lead(b):
    b.speed_limit = 15.0
    v_lead = b.knob("lead_speed", 8.0, 11.0)
    gap = b.knob("gap", 15.0, 30.0)
    b.ego_v = max(0.0, v_lead + b.u(-1.0, 1.0))
    L = _route_length(b)
    lanes = _straight_lanes(b, L, same_left=1, same_right=1)
    b.route = lanes[0]
    t_ev = b.u(2.0, 5.0)
    b.vehicle_on_lane(lanes[0], 2 * EGO_HALF_LENGTH + gap, v_lead,
                      events=[(t_ev, -1.0), (t_ev + 2.0, 0.8), (t_ev + 4.5, 0.0)], v_max=v_lead + 1.0)
    _side_traffic(b, lanes[1], int(b.knob("n_side", 1, 4)), 9.0, 13.0, -30.0, 70.0)
    _side_traffic(b, lanes[-1], int(b.rng.integers(0, 3)), 9.0, 13.0, -30.0, 70.0)


def _t_high_lateral_acceleration(b):
    b.speed_limit = 12.0
    radius = b.knob("radius", 35.0, 60.0)
    left = bool(b.knob("left", int(b.rng.integers(0, 2))))
    b.ego_v = b.knob("ego_speed", 8.0, 11.0)
    L = _route_length(b)
    x_turn = b.u(10.0, 25.0)
    sign = 1.0 if left else -1.0
    # a long bend of ~100 degrees followed by a straight tail
    straight = _line(-EGO_START_STATION, 0.0, x_turn, 0.0, 20)
    start = -sign * math.pi / 2
    arc = _arc(x_turn, sign * radius, radius, start, start + sign * math.radians(100), 80)
    h_end = sign * math.radians(100)
    ex, ey = arc[-1]
    tail = _line(ex, ey, ex + L * math.cos(h_end), ey + L * math.sin(h_end), 20)
    route = np.concatenate([straight, arc[1:], tail[1:]])
    b.route = route
    b.lane(route)
    b.lane(_offset_polyline(route, LANE_WIDTH))
    if b.rng.uniform() < 0.6:
        lead = route
        s_lead = EGO_START_STATION + b.u(35.0, 50.0)
        b.agent(AgentKind.VEHICLE, lead, s_lead, b.ego_v + b.u(-0.5, 0.5), v_max=12.0)


def _t_low_magnitude_speed(b):
    b.speed_limit = 6.0
    b.ego_v = b.knob("ego_speed", 1.0, 3.0)
    L = _route_length(b)
    lanes = _straight_lanes(b, L, same_left=0, opposite_left=True)
    b.route = lanes[0]
    for _ in range(int(b.knob("n_parked", 1, 4))):
        x = b.u(-5.0, 60.0)
        b.agent(AgentKind.VEHICLE, _line(x - 5, -3.4, x + 5, -3.4), 5.0, 0.0)
    for _ in range(int(b.knob("n_pedestrians", 1, 4))):
        y = -5.0 if b.rng.uniform() < 0.5 else 5.0 + LANE_WIDTH
        x = b.u(-10.0, 50.0)
        direction = 1.0 if b.rng.uniform() < 0.5 else -1.0
        b.agent(AgentKind.PEDESTRIAN, _line(x - 40 * direction, y, x + 40 * direction, y), 40.0,
                b.u(0.8, 1.5), v_max=2.0)
    if b.rng.uniform() < 0.5:
        b.vehicle_on_lane(lanes[0], 2 * EGO_HALF_LENGTH + b.u(10.0, 15.0), b.u(2.0, 4.0), v_max=5.0)


def _t_starting_turn(b, left: bool):
    b.speed_limit = 10.0 if left else 8.0
    b.ego_v = b.knob("ego_speed", 0.0, 2.0)
    L = _route_length(b)
    radius = b.knob("radius", 10.0, 13.0) if left else b.knob("radius", 7.0, 9.0)
    x_turn = b.knob("stop_line", 6.0, 10.0)
    route = _turn_path(x_turn, radius, left, L)
    b.route = route
    b.lane(route, TrafficLight.GREEN)
    cx = x_turn + radius
    # crossing street (two directions) and the opposite lane of the ego road
    b.lane(_line(cx, -60, cx, 80), TrafficLight.RED)
    b.lane(_line(cx - LANE_WIDTH, 80, cx - LANE_WIDTH, -60), TrafficLight.RED)
    opp = _line(80, LANE_WIDTH, -60, LANE_WIDTH)
    b.lane(opp, TrafficLight.GREEN)
    b.crosswalks.append(_line(cx + 5.0, -8.0, cx + 5.0, 8.0) if not left else _line(cx - 8, 8.0 + radius, cx + 8, 8.0 + radius))
    if left:
        # oncoming traffic that clears the conflict zone early
        for _ in range(int(b.knob("n_oncoming", 1, 3))):
            b.vehicle_on_lane(opp, b.u(-40.0, -5.0) + 0.0, b.u(8.0, 11.0))
    else:
        ped_y = b.u(-6.0, -4.0)
        b.agent(AgentKind.PEDESTRIAN, _line(-20, ped_y, 40, ped_y), 20.0 + b.u(-5, 5), b.u(1.0, 1.4), v_max=1.6)
    # cross traffic held at the red light
    for k in range(int(b.knob("n_waiting", 0, 3))):
        b.agent(AgentKind.VEHICLE, _line(cx - LANE_WIDTH, 30 + 7 * k, cx - LANE_WIDTH, 80), 0.0, 0.0)


def _t_starting_left_turn(b):
    _t_starting_turn(b, True)


def _t_starting_right_turn(b):
    _t_starting_turn(b, False)


def _t_starting_straight_traffic_light(b):
    b.speed_limit = 13.0
    b.ego_v = 0.0
    L = _route_length(b)
    lanes = _straight_lanes(b, L, same_left=1)
    b.lanes = [(xy, TrafficLight.GREEN) for xy, _ in b.lanes]
    b.route = lanes[0]
    cross_x = b.u(12.0, 18.0)
    b.lane(_line(cross_x, -60, cross_x, 60), TrafficLight.RED)
    b.lane(_line(cross_x - LANE_WIDTH, 60, cross_x - LANE_WIDTH, -60), TrafficLight.RED)
    b.crosswalks.append(_line(cross_x - 8, -6, cross_x - 8, 9))
    t_go = b.knob("lead_start", 0.5, 1.5)
    b.vehicle_on_lane(lanes[0], 2 * EGO_HALF_LENGTH + b.knob("gap", 6.0, 9.0), 0.0,
                      events=[(t_go, 1.5)], v_max=12.0)
    _side_traffic(b, lanes[1], int(b.knob("n_side", 0, 3)), 0.0, 0.01, -20.0, 15.0)
    b.agent(AgentKind.VEHICLE, _line(cross_x, -40, cross_x, 60), 22.0, 0.0)


def _t_stationary_in_traffic(b):
    b.speed_limit = 13.0
    b.ego_v = 0.0
    L = _route_length(b)
    lanes = _straight_lanes(b, L, same_left=1)
    b.route = lanes[0]
    gap = b.knob("gap", 2.5, 4.0)
    t_go = b.u(11.0, 14.0)
    x = 2 * EGO_HALF_LENGTH + gap
    for _ in range(int(b.knob("queue", 2, 5))):
        b.vehicle_on_lane(lanes[0], x, 0.0, events=[(t_go, 0.5)], v_max=3.0)
        x += 4.6 + b.u(2.5, 4.0)
    _side_traffic(b, lanes[1], int(b.knob("n_side", 1, 4)), 1.0, 3.0, -20.0, 40.0, min_spacing=7.0)


def _t_stopping_with_lead(b):
    b.speed_limit = 14.0
    v_lead = b.knob("lead_speed", 8.0, 11.0)
    b.ego_v = v_lead
    L = _route_length(b)
    lanes = _straight_lanes(b, L, same_left=1)
    b.route = lanes[0]
    decel = b.knob("lead_decel", 1.2, 2.0)
    b.vehicle_on_lane(lanes[0], 2 * EGO_HALF_LENGTH + b.knob("gap", 18.0, 28.0), v_lead,
                      events=[(b.u(1.0, 3.0), -decel)])
    _side_traffic(b, lanes[1], int(b.knob("n_side", 0, 3)), 6.0, 10.0, -20.0, 50.0)


def _t_waiting_for_pedestrian(b):
    b.speed_limit = 11.0
    b.ego_v = b.knob("ego_speed", 5.0, 7.0)
    L = _route_length(b)
    lanes = _straight_lanes(b, L, same_left=0, opposite_left=True)
    b.route = lanes[0]
    cw_x = b.knob("crosswalk_x", 22.0, 30.0)
    b.crosswalks.append(_line(cw_x, -6.0, cw_x, 6.0 + LANE_WIDTH))
    for k in range(int(b.knob("n_pedestrians", 1, 4))):
        x = cw_x + b.u(-1.2, 1.2)
        start = b.knob("ped_start", 0.0, 1.5) + 1.2 * k
        b.agent(AgentKind.PEDESTRIAN, _line(x, -6.0, x, 12.0), 0.0, 0.0,
                events=[(start, 3.0)], v_max=b.u(1.1, 1.5))


def _t_high_magnitude_speed(b):
    # joining a fast road well below its limit; a brisk driver reaches cruise speed quickly
    b.speed_limit = b.knob("speed_limit", 25.0, 28.0)
    b.ego_v = b.knob("entry_speed", 11.0, 15.0)
    b.expert["a_m"] = 2.5
    L = _route_length(b)
    lanes = _straight_lanes(b, L, same_left=1, same_right=1, back=120.0)
    b.route = lanes[0]
    b.drivable_half_width = LANE_WIDTH * 1.5
    b.vehicle_on_lane(lanes[0], b.knob("lead_gap", 120.0, 160.0), b.speed_limit - b.u(0.0, 1.0))
    _side_traffic(b, lanes[1], int(b.knob("n_side", 1, 3)), 22.0, 26.0, -60.0, 80.0, min_spacing=15.0)
    _side_traffic(b, lanes[-1], int(b.rng.integers(0, 3)), 22.0, 26.0, -60.0, 80.0, min_spacing=15.0)


def _lane_change_path(x0, y0, y1, length, n=40):
    x = np.linspace(x0, x0 + length, n)
    y = y0 + (y1 - y0) * (1 - np.cos(np.linspace(0, np.pi, n))) / 2
    return np.stack([x, y], axis=-1)


def _t_near_multiple_vehicles(b):
    b.speed_limit = 14.0
    b.ego_v = b.knob("ego_speed", 11.5, 13.5)
    L = _route_length(b)
    lanes = _straight_lanes(b, L, same_left=1, same_right=1)
    b.route = lanes[0]
    b.drivable_half_width = LANE_WIDTH * 1.5
    for k in (1, -1):
        _side_traffic(b, lanes[k], int(b.knob("n_side", 4, 7)), b.ego_v - 1.0, b.ego_v + 1.0, -45.0, 60.0,
                      min_spacing=8.0)
    for j in range(int(b.knob("n_cut_in", 1, 3))):
        side = 1 if (j % 2 == 0) == bool(b.rng.integers(0, 2)) else -1
        y0 = side * LANE_WIDTH
        v = b.ego_v - b.knob("cut_in_slowdown", 2.0, 3.5)
        t_cut = b.knob("cut_in_time", 0.5, 2.0) + 3.0 * j
        # bumper gap at the moment the lane change starts, ego assumed at constant speed
        gap = b.knob("cut_in_gap", 4.0, 8.0) + 10.0 * j
        x_start = b.ego_v * t_cut + 2 * EGO_HALF_LENGTH + gap
        path = np.concatenate([
            _line(x_start - 200.0, y0, x_start, y0, 2),
            _lane_change_path(x_start, y0, 0.0, v * 2.5 + 1.0)[1:],
            _line(x_start + v * 2.5 + 1.0, 0.0, x_start + L + 400, 0.0, 2)[1:],
        ])
        b.agent(AgentKind.VEHICLE, path, 200.0 - v * t_cut, v, events=[(t_cut + 2.5, -0.5), (t_cut + 4.5, 0.0)])


def _t_changing_lane(b):
    b.speed_limit = 14.0
    b.ego_v = b.knob("ego_speed", 9.0, 12.0)
    L = _route_length(b)
    lanes = _straight_lanes(b, L, same_left=1)
    x_lc = b.knob("change_start", 15.0, 25.0)
    change_len = b.knob("change_length", 25.0, 35.0)
    route = np.concatenate([
        _line(-EGO_START_STATION, 0.0, x_lc, 0.0, 2),
        _lane_change_path(x_lc, 0.0, LANE_WIDTH, change_len)[1:],
        _line(x_lc + change_len, LANE_WIDTH, L, LANE_WIDTH, 2)[1:],
    ])
    b.route = route
    b.drivable_half_width = LANE_WIDTH * 1.5
    # blocked current lane is the reason to change
    b.vehicle_on_lane(lanes[0], x_lc + change_len + b.u(10.0, 25.0), 0.0, expert_blocking=False)
    # slower traffic in the target lane
    b.vehicle_on_lane(lanes[1], x_lc + b.knob("target_gap", 15.0, 30.0), b.ego_v - b.knob("target_slowdown", 3.0, 6.0))
    _side_traffic(b, lanes[1], int(b.knob("n_side", 0, 2)), b.ego_v - 1, b.ego_v + 1, -50.0, -15.0)


def _t_traversing_pickup_dropoff(b):
    b.speed_limit = 9.0
    b.ego_v = b.knob("ego_speed", 5.0, 8.0)
    L = _route_length(b)
    lanes = _straight_lanes(b, L, same_left=0, opposite_left=True)
    b.route = lanes[0]
    b.drivable_half_width = LANE_WIDTH * 1.5
    encroach = b.knob("encroach", 1.3)
    x = b.knob("parked_x", 25.0, 40.0)
    for k in range(int(b.knob("n_parked", 1, 3))):
        b.agent(AgentKind.VEHICLE, _line(x - 5, -encroach, x + 5, -encroach), 5.0, 0.0, expert_blocking=False)
        x += b.u(9.0, 14.0)
    for _ in range(int(b.knob("n_pedestrians", 1, 3))):
        px = b.u(15.0, 60.0)
        b.agent(AgentKind.PEDESTRIAN, _line(px - 30, -4.5, px + 30, -4.5), 30.0, b.u(0.5, 1.3), v_max=1.5)
    _side_traffic(b, lanes["opp"], int(b.knob("n_oncoming", 0, 2)), 7.0, 9.0, 60.0, 140.0, min_spacing=25.0)


TEMPLATES = {
    "behind_long_vehicle": _t_behind_long_vehicle,
    "following_lane_with_lead": _t_following_lane_with_lead,
    "high_lateral_acceleration": _t_high_lateral_acceleration,
    "low_magnitude_speed": _t_low_magnitude_speed,
    "starting_left_turn": _t_starting_left_turn,
    "starting_right_turn": _t_starting_right_turn,
    "starting_straight_traffic_light": _t_starting_straight_traffic_light,
    "stationary_in_traffic": _t_stationary_in_traffic,
    "stopping_with_lead": _t_stopping_with_lead,
    "waiting_for_pedestrian_to_cross": _t_waiting_for_pedestrian,
    "high_magnitude_speed": _t_high_magnitude_speed,
    "near_multiple_vehicles": _t_near_multiple_vehicles,
    "changing_lane": _t_changing_lane,
    "traversing_pickup_dropoff": _t_traversing_pickup_dropoff,
}


# --------------------------------------------------------------------------- assembly

def _integrate_speed(s0, v0, events, v_max, n_future):
    """Station/speed at t = k*DT for k = 1..n_future under piecewise-constant acceleration."""
    s = np.empty(n_future)
    v = np.empty(n_future)
    cur_s, cur_v = s0, v0
    events = sorted(events)
    for k in range(n_future):
        t = k * DT
        acc = 0.0
        for t_ev, a_ev in events:
            if t >= t_ev - 1e-9:
                acc = a_ev
        nv = min(max(cur_v + acc * DT, 0.0), v_max)
        cur_s += 0.5 * (cur_v + nv) * DT
        cur_v = nv
        s[k], v[k] = cur_s, cur_v
    return s, v


def _agent_arrays(spec: _AgentSpec, agent_id: int, n_future: int):
    path = Path(spec.path)
    hist_t = (np.arange(T_HIST) - (T_HIST - 1)) * DT
    hist_s = spec.s0 + spec.v0 * hist_t
    fut_s, fut_v = _integrate_speed(spec.s0, spec.v0, spec.events, spec.v_max, n_future)
    hx, hy, hh = path.interpolate(hist_s)
    fx, fy, fh = path.interpolate(fut_s)

    history = np.zeros((T_HIST, AGENT_CHANNELS))
    history[:, 0], history[:, 1] = hx, hy
    history[:, 2], history[:, 3] = spec.v0 * np.cos(hh), spec.v0 * np.sin(hh)
    yaw = np.diff(np.unwrap(hh), prepend=hh[0]) / DT
    history[:, 4] = yaw
    history[:, 5 + int(spec.kind)] = 1.0
    mask = np.zeros(T_HIST, dtype=bool)
    mask[spec.first_obs:] = True
    history[~mask] = 0.0

    future = np.stack([fx, fy, wrap_angle(fh), fut_v * np.cos(fh), fut_v * np.sin(fh)], axis=-1)
    length, width = FOOTPRINTS[spec.kind]
    track = AgentTrack(
        id=agent_id,
        kind=spec.kind,
        history=history,
        mask=mask,
        length=float(spec.length if spec.length is not None else length),
        width=float(spec.width if spec.width is not None else width),
    )
    return track, future


def _clip_polyline(xy, radius, n_out, min_length=1.0):
    """Longest contiguous run of ``xy`` inside ``radius`` resampled to ``n_out`` points, or None."""
    path = Path(xy)
    n_dense = max(2, int(path.length / 0.5) + 1)
    x, y, _ = path.interpolate(np.linspace(0.0, path.length, n_dense))
    pts = np.stack([x, y], axis=-1)
    inside = np.hypot(x, y) <= radius
    best, best_len, start = None, 0, None
    for i, flag in enumerate(np.append(inside, False)):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            if i - start > best_len:
                best, best_len = (start, i), i - start
            start = None
    if best is None or best_len < 2:
        return None
    run = pts[best[0]:best[1]]
    if np.hypot(*(run[-1] - run[0])) < min_length and Path(run).length < min_length:
        return None
    return resample_polyline(run, n_out)


def _build_map(b: _SceneBuilder, route_path: Path, radius: float) -> tuple[VectorizedMap, tuple[int, ...]]:
    vmap = VectorizedMap.empty(radius)
    roads = np.array(vmap.roads)
    road_mask = np.array(vmap.road_mask)
    clip_r = radius - 0.05
    slot = 0
    for xy, tl in b.lanes:
        pts = _clip_polyline(xy, clip_r, ROAD_POINTS)
        if pts is None or slot >= N_ROADS:
            continue
        roads[slot, :, 0:2] = pts
        roads[slot, :, 2] = polyline_headings(pts)
        roads[slot, :, 3 + int(tl)] = 1.0
        road_mask[slot] = True
        slot += 1

    cws = np.array(vmap.crosswalks)
    cw_mask = np.array(vmap.crosswalk_mask)
    slot = 0
    for xy in b.crosswalks:
        pts = _clip_polyline(xy, clip_r, CROSSWALK_POINTS)
        if pts is None or slot >= N_CROSSWALKS:
            continue
        cws[slot, :, 0:2] = pts
        cws[slot, :, 2] = polyline_headings(pts)
        cw_mask[slot] = True
        slot += 1

    route = np.array(vmap.route_lanes)
    route_mask = np.array(vmap.route_mask)
    clipped = _clip_polyline(route_path.xy, clip_r, 400)
    ego_route = []
    if clipped is not None:
        pieces = np.array_split(np.arange(len(clipped)), 5)
        for slot, idx in enumerate(pieces[:N_ROUTE_LANES]):
            seg = clipped[max(idx[0] - 1, 0): idx[-1] + 1]
            pts = resample_polyline(seg, ROUTE_POINTS)
            route[slot, :, 0:2] = pts
            route[slot, :, 2] = polyline_headings(pts)
            route_mask[slot] = True
            ego_route.append(slot)
    vmap = VectorizedMap(roads, road_mask, cws, cw_mask, route, route_mask, radius)
    return vmap, tuple(ego_route)


def expert_progress(route: Path, agents, futures, blocking, speed_limit, ego_v, n_steps,
                    s_start=EGO_START_STATION, params=None) -> float:
    """Arc length a privileged IDM expert covers while following blocking agents' true futures."""
    p = {**EXPERT_PARAMS, **(params or {})}
    s, v = s_start, ego_v
    if len(agents):
        fs, fd, fh = route.project(futures[..., :2])
    for k in range(n_steps):
        gap, v_lead = np.inf, 0.0
        for i, agent in enumerate(agents):
            if not blocking[i]:
                continue
            rel = wrap_angle(futures[i, k, 2] - fh[i, k])
            hs = abs(math.cos(rel)) * agent.length / 2 + abs(math.sin(rel)) * agent.width / 2
            hd = abs(math.sin(rel)) * agent.length / 2 + abs(math.cos(rel)) * agent.width / 2
            if abs(fd[i, k]) >= EGO_HALF_WIDTH + hd:
                continue
            g = fs[i, k] - hs - s - EGO_HALF_LENGTH
            if fs[i, k] > s and g < gap:
                gap = max(g, 1e-3)
                v_lead = math.hypot(futures[i, k, 3], futures[i, k, 4]) * math.cos(rel)
        s_star = p["s0"] + max(0.0, v * p["T_h"] + v * (v - v_lead) / (2 * math.sqrt(p["a_m"] * p["b"])))
        acc = p["a_m"] * (1 - (v / speed_limit) ** p["delta"] - (s_star / gap) ** 2)
        acc = max(acc, -8.0)
        nv = max(0.0, v + acc * DT)
        s += 0.5 * (v + nv) * DT
        v = nv
    return float(s - s_start)


def generate_scenario(scenario_class, seed: int, knobs: dict | None = None) -> Scenario:
    """Deterministic synthetic scenario for ``(class, seed, knobs)``, normalised to the ego frame."""
    cls: ScenarioClass = get_class(scenario_class)
    template = TEMPLATES[cls.name]
    knobs = dict(knobs or {})
    merged = {**COMMON_KNOBS, **knobs}
    horizon = merged["horizon"]
    if not horizon > 0:
        raise GeneratorError(f"horizon must be positive, got {horizon}")
    n_future = int(round(horizon / DT))
    rng = np.random.default_rng([cls.id, int(seed)])
    b = _SceneBuilder(rng, merged)
    template(b)
    if b.route is None:
        raise GeneratorError(f"template {cls.name} produced no route")

    route_path = Path(b.route)
    s_start = float(route_path.project(np.zeros((1, 2)))[0][0])
    if route_path.length - s_start <= 1.0:
        raise GeneratorError("route too short")

    built = [_agent_arrays(spec, i + 1, n_future) for i, spec in enumerate(b.agents)]
    # keep the N nearest agents at t = 0
    if len(built) > N_AGENTS:
        order = np.argsort([np.hypot(*t.history[-1, :2]) for t, _ in built], kind="stable")[:N_AGENTS]
        keep = sorted(order.tolist())
        built = [built[i] for i in keep]
        b.agents = [b.agents[i] for i in keep]
    tracks = tuple(t for t, _ in built)
    future = np.stack([f for _, f in built]) if built else np.zeros((0, n_future, 5))

    vmap, ego_route = _build_map(b, route_path, merged["query_radius"])
    progress = expert_progress(route_path, tracks, future, [s.expert_blocking for s in b.agents],
                               b.speed_limit, b.ego_v, n_future, s_start, b.expert)

    local = Scenario(
        map=vmap,
        agents=tracks,
        ego=EgoState(0.0, 0.0, 0.0, float(b.ego_v), 0.0, 0.0),
        ego_route=ego_route,
        label=cls,
        seed=int(seed),
        future=future,
        reference_path=np.array(route_path.xy),
        speed_limit=float(b.speed_limit),
        expert_progress=progress,
        drivable_half_width=float(b.drivable_half_width),
        knobs={k: v for k, v in knobs.items()},
    )
    world = _to_world(local, rng)
    return normalize_to_ego(world)


def _to_world(scn: Scenario, rng: np.random.Generator) -> Scenario:
    """Place a local-frame scenario at a random world pose (the ego ends up at (dx, dy, rot))."""
    rot = float(rng.uniform(-np.pi, np.pi))
    dx, dy = (float(v) for v in rng.uniform(-500.0, 500.0, size=2))

    def poses(arr, mask):
        out = np.array(arr, copy=True)
        if mask.any():
            out[mask, 0:2] = rigid_transform(arr[mask, 0:2], dx, dy, rot)
            out[mask, 2] = wrap_angle(arr[mask, 2] + rot)
        return out

    m = scn.map
    vmap = VectorizedMap(poses(m.roads, m.road_mask), m.road_mask.copy(),
                         poses(m.crosswalks, m.crosswalk_mask), m.crosswalk_mask.copy(),
                         poses(m.route_lanes, m.route_mask), m.route_mask.copy(), m.query_radius)
    agents = []
    for a in scn.agents:
        h = np.array(a.history, copy=True)
        h[a.mask, 0:2] = rigid_transform(a.history[a.mask, 0:2], dx, dy, rot)
        h[a.mask, 2:4] = rigid_transform(a.history[a.mask, 2:4], 0.0, 0.0, rot)
        agents.append(AgentTrack(a.id, a.kind, h, a.mask.copy(), a.length, a.width))
    fut = np.array(scn.future, copy=True)
    if fut.size:
        fut[..., 0:2] = rigid_transform(scn.future[..., 0:2], dx, dy, rot)
        fut[..., 2] = wrap_angle(scn.future[..., 2] + rot)
        fut[..., 3:5] = rigid_transform(scn.future[..., 3:5], 0.0, 0.0, rot)
    return Scenario(vmap, tuple(agents), EgoState(dx, dy, rot, scn.ego.v, scn.ego.a, scn.ego.t), scn.ego_route,
                    scn.label, scn.seed, fut, rigid_transform(scn.reference_path, dx, dy, rot), scn.speed_limit,
                    scn.expert_progress, scn.drivable_half_width, scn.knobs)
