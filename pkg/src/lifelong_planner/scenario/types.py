"""Scene data model: vectorized map, agent tracks, ego state and scenario classes."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields

import numpy as np

DT = 0.1
N_AGENTS = 16
T_HIST = 20
AGENT_CHANNELS = 8  # x, y, vx, vy, yaw_rate, one-hot kind x3
QUERY_RADIUS = 80.0

N_ROADS, ROAD_POINTS, ROAD_CHANNELS = 40, 50, 7  # x, y, heading, tl one-hot x4
N_CROSSWALKS, CROSSWALK_POINTS = 5, 30
N_ROUTE_LANES, ROUTE_POINTS = 10, 50


class AgentKind(enum.IntEnum):
    VEHICLE = 0
    PEDESTRIAN = 1
    CYCLIST = 2


class TrafficLight(enum.IntEnum):
    GREEN = 0
    YELLOW = 1
    RED = 2
    UNKNOWN = 3


# default footprints (length, width) in metres
FOOTPRINTS = {
    AgentKind.VEHICLE: (4.6, 2.0),
    AgentKind.PEDESTRIAN: (0.8, 0.8),
    AgentKind.CYCLIST: (1.8, 0.7),
}


def wrap_angle(theta):
    """Wrap to (-pi, pi]."""
    wrapped = np.mod(np.asarray(theta, dtype=np.float64) + np.pi, 2.0 * np.pi) - np.pi
    wrapped = np.where(wrapped == -np.pi, np.pi, wrapped)
    return float(wrapped) if np.ndim(wrapped) == 0 else wrapped


@dataclass(frozen=True)
class ScenarioClass:
    name: str
    id: int
    is_long_tail: bool
    code: str = ""


SCENARIO_CLASSES: tuple[ScenarioClass, ...] = (
    ScenarioClass("behind_long_vehicle", 0, False),
    ScenarioClass("following_lane_with_lead", 1, False),
    ScenarioClass("high_lateral_acceleration", 2, False),
    ScenarioClass("low_magnitude_speed", 3, False),
    ScenarioClass("starting_left_turn", 4, False),
    ScenarioClass("starting_right_turn", 5, False),
    ScenarioClass("starting_straight_traffic_light", 6, False),
    ScenarioClass("stationary_in_traffic", 7, False),
    ScenarioClass("stopping_with_lead", 8, False),
    ScenarioClass("waiting_for_pedestrian_to_cross", 9, False),
    ScenarioClass("high_magnitude_speed", 10, True, "H"),
    ScenarioClass("near_multiple_vehicles", 11, True, "N"),
    ScenarioClass("changing_lane", 12, True, "C"),
    ScenarioClass("traversing_pickup_dropoff", 13, True, "T"),
)
N_CLASSES = len(SCENARIO_CLASSES)
COMMON_CLASSES = tuple(c for c in SCENARIO_CLASSES if not c.is_long_tail)
LONG_TAIL_CLASSES = tuple(c for c in SCENARIO_CLASSES if c.is_long_tail)


def get_class(key) -> ScenarioClass:
    """Look up a class by id, name or long-tail code (H/N/C/T)."""
    if isinstance(key, ScenarioClass):
        key = key.name
    for cls in SCENARIO_CLASSES:
        if key == cls.id or key == cls.name or (cls.code and key == cls.code):
            return cls
    raise KeyError(f"unknown scenario class: {key!r}")


@dataclass(frozen=True)
class EgoState:
    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0
    v: float = 0.0
    a: float = 0.0
    t: float = 0.0

    def __post_init__(self):
        if self.v < 0:
            raise ValueError(f"ego speed must be >= 0, got {self.v}")
        object.__setattr__(self, "heading", wrap_angle(self.heading))


@dataclass(frozen=True, eq=False)
class VectorizedMap:
    roads: np.ndarray            # (40, 50, 7)
    road_mask: np.ndarray        # (40, 50) bool
    crosswalks: np.ndarray       # (5, 30, 3)
    crosswalk_mask: np.ndarray   # (5, 30) bool
    route_lanes: np.ndarray      # (10, 50, 3)
    route_mask: np.ndarray       # (10, 50) bool
    query_radius: float = QUERY_RADIUS

    def __post_init__(self):
        _check_shape("roads", self.roads, (N_ROADS, ROAD_POINTS, ROAD_CHANNELS))
        _check_shape("road_mask", self.road_mask, (N_ROADS, ROAD_POINTS))
        _check_shape("crosswalks", self.crosswalks, (N_CROSSWALKS, CROSSWALK_POINTS, 3))
        _check_shape("crosswalk_mask", self.crosswalk_mask, (N_CROSSWALKS, CROSSWALK_POINTS))
        _check_shape("route_lanes", self.route_lanes, (N_ROUTE_LANES, ROUTE_POINTS, 3))
        _check_shape("route_mask", self.route_mask, (N_ROUTE_LANES, ROUTE_POINTS))
        tl = self.roads[..., 3:][self.road_mask]
        if tl.size and not (np.all(tl.sum(axis=-1) == 1.0) and np.all((tl == 0) | (tl == 1))):
            raise ValueError("traffic-light state must be one-hot on every valid waypoint")
        _freeze(self)

    @classmethod
    def empty(cls, query_radius: float = QUERY_RADIUS) -> "VectorizedMap":
        return cls(
            roads=np.zeros((N_ROADS, ROAD_POINTS, ROAD_CHANNELS)),
            road_mask=np.zeros((N_ROADS, ROAD_POINTS), dtype=bool),
            crosswalks=np.zeros((N_CROSSWALKS, CROSSWALK_POINTS, 3)),
            crosswalk_mask=np.zeros((N_CROSSWALKS, CROSSWALK_POINTS), dtype=bool),
            route_lanes=np.zeros((N_ROUTE_LANES, ROUTE_POINTS, 3)),
            route_mask=np.zeros((N_ROUTE_LANES, ROUTE_POINTS), dtype=bool),
            query_radius=query_radius,
        )

    def __eq__(self, other):
        return isinstance(other, VectorizedMap) and _dataclass_equal(self, other)


@dataclass(frozen=True, eq=False)
class AgentTrack:
    id: int
    kind: AgentKind
    history: np.ndarray   # (T_HIST, 8)
    mask: np.ndarray      # (T_HIST,) bool, False before first observation
    length: float = 4.6
    width: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "kind", AgentKind(self.kind))
        _check_shape("history", self.history, (T_HIST, AGENT_CHANNELS))
        _check_shape("mask", self.mask, (T_HIST,))
        onehot = np.zeros(3)
        onehot[int(self.kind)] = 1.0
        if self.mask.any() and not np.array_equal(self.history[self.mask, 5:],
                                                  np.broadcast_to(onehot, (int(self.mask.sum()), 3))):
            raise ValueError(f"agent {self.id}: kind one-hot inconsistent with {self.kind.name}")
        _freeze(self)

    @property
    def last_valid(self) -> int:
        idx = np.flatnonzero(self.mask)
        return int(idx[-1]) if idx.size else -1

    def __eq__(self, other):
        return isinstance(other, AgentTrack) and _dataclass_equal(self, other)


@dataclass(frozen=True, eq=False)
class Scenario:
    """One closed-loop episode: the encoder's inputs plus the scripted replay.

    ``future[i, k]`` is agent ``i``'s pose (x, y, heading, vx, vy) at time
    ``(k + 1) * DT``. ``reference_path`` is the ego route centerline over the
    whole episode (the map only holds what lies within ``query_radius``).
    """

    map: VectorizedMap
    agents: tuple[AgentTrack, ...]
    ego: EgoState
    ego_route: tuple[int, ...]
    label: ScenarioClass
    seed: int
    future: np.ndarray          # (n_agents, F, 5)
    reference_path: np.ndarray  # (M, 2)
    speed_limit: float
    expert_progress: float
    drivable_half_width: float = 1.75
    knobs: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        object.__setattr__(self, "ego_route", tuple(int(i) for i in self.ego_route))
        if len(self.agents) > N_AGENTS:
            raise ValueError(f"at most {N_AGENTS} agents, got {len(self.agents)}")
        ids = [a.id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise ValueError("agent ids must be unique")
        if self.future.ndim != 3 or self.future.shape[0] != len(self.agents) or self.future.shape[2] != 5:
            raise ValueError(f"future must have shape ({len(self.agents)}, F, 5), got {self.future.shape}")
        if self.reference_path.ndim != 2 or self.reference_path.shape[1] != 2 or len(self.reference_path) < 2:
            raise ValueError("reference_path must be an (M>=2, 2) array")
        _freeze(self)

    @property
    def horizon_steps(self) -> int:
        return int(self.future.shape[1])

    @property
    def id(self) -> str:
        return f"{self.label.name}/{self.seed}"

    def agent_poses(self, step: int) -> np.ndarray:
        """(n_agents, 5) poses at ``step * DT``; step 0 comes from the last history sample."""
        n = len(self.agents)
        if n == 0:
            return np.zeros((0, 5))
        if step <= 0:
            out = np.zeros((n, 5))
            for i, agent in enumerate(self.agents):
                h = agent.history[-1]
                out[i] = (h[0], h[1], _history_heading(agent), h[2], h[3])
            return out
        k = min(step, self.horizon_steps) - 1
        return self.future[:, k, :].copy()

    def __eq__(self, other):
        return isinstance(other, Scenario) and _dataclass_equal(self, other)

    def __hash__(self):
        return hash((self.label.id, self.seed))


def _history_heading(agent: AgentTrack) -> float:
    h = agent.history[-1]
    if math.hypot(h[2], h[3]) > 1e-6:
        return math.atan2(h[3], h[2])
    return float(agent_heading_hint(agent))


def agent_heading_hint(agent: AgentTrack) -> float:
    """Heading from the last valid displacement; 0 when the agent never moved."""
    idx = np.flatnonzero(agent.mask)
    for j in range(len(idx) - 1, 0, -1):
        d = agent.history[idx[j], :2] - agent.history[idx[j - 1], :2]
        if np.hypot(*d) > 1e-9:
            return math.atan2(d[1], d[0])
    return 0.0


def _check_shape(name, arr, shape):
    if not isinstance(arr, np.ndarray) or arr.shape != shape:
        got = getattr(arr, "shape", type(arr).__name__)
        raise ValueError(f"{name} must have shape {shape}, got {got}")


def _freeze(obj):
    for f in fields(obj):
        value = getattr(obj, f.name)
        if isinstance(value, np.ndarray):
            value.setflags(write=False)


def _values_equal(a, b) -> bool:
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return (isinstance(a, np.ndarray) and isinstance(b, np.ndarray) and a.dtype == b.dtype
                and a.shape == b.shape and a.tobytes() == b.tobytes())
    if isinstance(a, tuple) and isinstance(b, tuple):
        return len(a) == len(b) and all(_values_equal(x, y) for x, y in zip(a, b))
    if isinstance(a, float) and isinstance(b, float):
        return np.float64(a).tobytes() == np.float64(b).tobytes()
    return a == b


def _dataclass_equal(a, b) -> bool:
    return all(_values_equal(getattr(a, f.name), getattr(b, f.name)) for f in fields(a))
