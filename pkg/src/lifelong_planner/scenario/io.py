"""Scenario files (``.scn``): one scenario per versioned binary record."""
from pathlib import Path as FsPath

import numpy as np

from ..container import ContainerError, pack, unpack
from .types import AgentKind, AgentTrack, EgoState, Scenario, VectorizedMap, get_class

MAGIC = b"SCN\x00"
FORMAT_VERSION = 1


class ScenarioDecodeError(ContainerError):
    pass


def encode_scenario(scenario: Scenario) -> bytes:
    m = scenario.map
    e = scenario.ego
    arrays = {
        "roads": m.roads, "road_mask": m.road_mask,
        "crosswalks": m.crosswalks, "crosswalk_mask": m.crosswalk_mask,
        "route_lanes": m.route_lanes, "route_mask": m.route_mask,
        "future": scenario.future, "reference_path": scenario.reference_path,
        "ego": np.array([e.x, e.y, e.heading, e.v, e.a, e.t], dtype=np.float64),
    }
    agents = []
    for i, a in enumerate(scenario.agents):
        arrays[f"agent{i}.history"] = a.history
        arrays[f"agent{i}.mask"] = a.mask
        arrays[f"agent{i}.size"] = np.array([a.length, a.width], dtype=np.float64)
        agents.append({"id": a.id, "kind": int(a.kind)})
    meta = {
        "agents": agents,
        "ego_route": list(scenario.ego_route),
        "label": scenario.label.id,
        "seed": scenario.seed,
        "query_radius": m.query_radius,
        "speed_limit": scenario.speed_limit,
        "expert_progress": scenario.expert_progress,
        "drivable_half_width": scenario.drivable_half_width,
        "knobs": scenario.knobs,
    }
    return pack(MAGIC, FORMAT_VERSION, meta, arrays)


def decode_scenario(data: bytes) -> Scenario:
    try:
        meta, arr = unpack(data, MAGIC, FORMAT_VERSION)
        vmap = VectorizedMap(arr["roads"], arr["road_mask"], arr["crosswalks"], arr["crosswalk_mask"],
                             arr["route_lanes"], arr["route_mask"], meta["query_radius"])
        agents = []
        for i, a in enumerate(meta["agents"]):
            length, width = arr[f"agent{i}.size"]
            agents.append(AgentTrack(a["id"], AgentKind(a["kind"]), arr[f"agent{i}.history"],
                                     arr[f"agent{i}.mask"], float(length), float(width)))
        e = arr["ego"]
        return Scenario(
            map=vmap,
            agents=tuple(agents),
            ego=EgoState(*(float(v) for v in e)),
            ego_route=tuple(meta["ego_route"]),
            label=get_class(meta["label"]),
            seed=meta["seed"],
            future=arr["future"],
            reference_path=arr["reference_path"],
            speed_limit=meta["speed_limit"],
            expert_progress=meta["expert_progress"],
            drivable_half_width=meta["drivable_half_width"],
            knobs=meta["knobs"],
        )
    except ContainerError as exc:
        raise ScenarioDecodeError(str(exc)) from None
    except (KeyError, ValueError, TypeError) as exc:
        raise ScenarioDecodeError(f"malformed scenario record: {exc}") from None


def write_scenario(path, scenario: Scenario) -> None:
    path = FsPath(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_scenario(scenario))


def read_scenario(path) -> Scenario:
    return decode_scenario(FsPath(path).read_bytes())
