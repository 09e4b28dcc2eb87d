import dataclasses

import numpy as np

from ..geometry import rotate_vectors, to_local_frame
from .types import AgentTrack, EgoState, Scenario, VectorizedMap, wrap_angle


def _check_finite(scenario: Scenario):
    e = scenario.ego
    checks = [np.array([e.x, e.y, e.heading, e.v, e.a, e.t]), scenario.map.roads, scenario.map.crosswalks,
              scenario.map.route_lanes, scenario.future, scenario.reference_path]
    checks += [a.history for a in scenario.agents]
    for arr in checks:
        if not np.all(np.isfinite(arr)):
            raise ValueError("scenario contains non-finite coordinates")


def _transform_poses(arr, mask, ox, oy, oh):
    """Transform (..., >=3) arrays holding (x, y, heading) on rows where ``mask`` is set."""
    out = np.array(arr, dtype=np.float64, copy=True)
    if mask.any():
        out[mask, 0:2] = to_local_frame(arr[mask, 0:2], ox, oy, oh)
        out[mask, 2] = wrap_angle(arr[mask, 2] - oh)
    return out


def normalize_to_ego(scenario: Scenario) -> Scenario:
    """Re-express every coordinate in the ego frame (ego at the origin, heading 0).

    The same rigid motion is applied to map waypoints, agent histories,
    scripted futures and the reference path, so all pairwise distances are
    preserved. Masked (padding) slots are left untouched.
    """
    _check_finite(scenario)
    ego = scenario.ego
    if ego.x == 0.0 and ego.y == 0.0 and ego.heading == 0.0:
        return scenario
    ox, oy, oh = ego.x, ego.y, ego.heading

    m = scenario.map
    new_map = VectorizedMap(
        roads=_transform_poses(m.roads, m.road_mask, ox, oy, oh),
        road_mask=m.road_mask.copy(),
        crosswalks=_transform_poses(m.crosswalks, m.crosswalk_mask, ox, oy, oh),
        crosswalk_mask=m.crosswalk_mask.copy(),
        route_lanes=_transform_poses(m.route_lanes, m.route_mask, ox, oy, oh),
        route_mask=m.route_mask.copy(),
        query_radius=m.query_radius,
    )

    agents = []
    for agent in scenario.agents:
        hist = np.array(agent.history, copy=True)
        if agent.mask.any():
            hist[agent.mask, 0:2] = to_local_frame(agent.history[agent.mask, 0:2], ox, oy, oh)
            hist[agent.mask, 2:4] = rotate_vectors(agent.history[agent.mask, 2:4], -oh)
        agents.append(dataclasses.replace(agent, history=hist, mask=agent.mask.copy()))

    future = np.array(scenario.future, copy=True)
    if future.size:
        future[..., 0:2] = to_local_frame(scenario.future[..., 0:2], ox, oy, oh)
        future[..., 2] = wrap_angle(scenario.future[..., 2] - oh)
        future[..., 3:5] = rotate_vectors(scenario.future[..., 3:5], -oh)

    return dataclasses.replace(
        scenario,
        map=new_map,
        agents=tuple(agents),
        ego=EgoState(0.0, 0.0, 0.0, ego.v, ego.a, ego.t),
        future=future,
        reference_path=to_local_frame(scenario.reference_path, ox, oy, oh),
    )
