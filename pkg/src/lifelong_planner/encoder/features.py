"""Fixed-shape tensors fed to the scene encoder."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ..scenario.types import N_AGENTS, T_HIST, AGENT_CHANNELS, Scenario

POS_SCALE = 50.0
VEL_SCALE = 10.0


@dataclass
class SceneBatch:
    agents: torch.Tensor        # (B, N_AGENTS, T_HIST, 8)
    agent_mask: torch.Tensor    # (B, N_AGENTS, T_HIST) bool
    roads: torch.Tensor         # (B, 40, 50, 7)
    road_mask: torch.Tensor
    crosswalks: torch.Tensor    # (B, 5, 30, 3)
    crosswalk_mask: torch.Tensor
    route: torch.Tensor         # (B, 10, 50, 3)
    route_mask: torch.Tensor
    ego: torch.Tensor           # (B, 3) v, a, speed limit
    labels: torch.Tensor        # (B,) class ids, -1 if unknown

    def __len__(self):
        return self.ego.shape[0]

    def index(self, idx) -> "SceneBatch":
        return SceneBatch(**{k: v[idx] for k, v in self.__dict__.items()})


def _scale_poses(arr: np.ndarray) -> np.ndarray:
    out = arr.copy()
    out[..., :2] /= POS_SCALE
    return out


def featurize(scenario: Scenario, pad: float = 0.0) -> dict:
    """Scaled tensors; masked slots hold ``pad`` (NaN in debug runs catches any read of padding)."""
    agents = np.full((N_AGENTS, T_HIST, AGENT_CHANNELS), pad)
    amask = np.zeros((N_AGENTS, T_HIST), dtype=bool)
    for i, a in enumerate(scenario.agents):
        h = a.history.copy()
        h[:, :2] /= POS_SCALE
        h[:, 2:4] /= VEL_SCALE
        agents[i] = np.where(a.mask[:, None], h, pad)
        amask[i] = a.mask
    m = scenario.map
    roads = _scale_poses(m.roads)
    e = scenario.ego
    return {
        "agents": agents, "agent_mask": amask,
        "roads": np.where(m.road_mask[..., None], roads, pad), "road_mask": m.road_mask,
        "crosswalks": np.where(m.crosswalk_mask[..., None], _scale_poses(m.crosswalks), pad),
        "crosswalk_mask": m.crosswalk_mask,
        "route": np.where(m.route_mask[..., None], _scale_poses(m.route_lanes), pad), "route_mask": m.route_mask,
        "ego": np.array([e.v / VEL_SCALE, e.a, scenario.speed_limit / VEL_SCALE]),
        "label": scenario.label.id if scenario.label is not None else -1,
    }


def collate(scenarios, dtype=torch.float64, pad: float = 0.0) -> SceneBatch:
    feats = [featurize(s, pad) for s in scenarios]

    def stack(key, dt=dtype):
        return torch.as_tensor(np.stack([f[key] for f in feats]), dtype=dt)

    return SceneBatch(
        agents=stack("agents"), agent_mask=stack("agent_mask", torch.bool),
        roads=stack("roads"), road_mask=stack("road_mask", torch.bool),
        crosswalks=stack("crosswalks"), crosswalk_mask=stack("crosswalk_mask", torch.bool),
        route=stack("route"), route_mask=stack("route_mask", torch.bool),
        ego=stack("ego"),
        labels=torch.as_tensor([f["label"] for f in feats], dtype=torch.long),
    )
