from dataclasses import dataclass

import numpy as np

from .scenario.types import AgentKind, EgoState, Scenario

EGO_LENGTH, EGO_WIDTH = 4.6, 2.0
EGO_REAR_AXLE = 1.4  # m behind the footprint centre


@dataclass(frozen=True, eq=False)
class WorldState:
    """Snapshot handed to a policy: ego, current agent poses and static scenario facts."""

    step: int
    ego: EgoState
    agents: np.ndarray       # (A, 5) x, y, heading, vx, vy
    agent_dims: np.ndarray   # (A, 2) length, width
    agent_kinds: np.ndarray  # (A,) AgentKind values
    speed_limit: float

    @property
    def t(self) -> float:
        return self.ego.t

    @classmethod
    def initial(cls, scenario: Scenario) -> "WorldState":
        return cls(
            step=0,
            ego=scenario.ego,
            agents=scenario.agent_poses(0),
            agent_dims=agent_dims(scenario),
            agent_kinds=np.array([int(a.kind) for a in scenario.agents], dtype=np.int64),
            speed_limit=scenario.speed_limit,
        )


def agent_dims(scenario: Scenario) -> np.ndarray:
    if not scenario.agents:
        return np.zeros((0, 2))
    return np.array([[a.length, a.width] for a in scenario.agents], dtype=np.float64)


def is_pedestrian(kinds) -> np.ndarray:
    return np.asarray(kinds) == int(AgentKind.PEDESTRIAN)
