import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lifelong_planner.scenario import (
    SCENARIO_CLASSES, EgoState, GeneratorError, ScenarioDecodeError, decode_scenario, encode_scenario,
    generate_scenario, get_class, normalize_to_ego,
)
from lifelong_planner.scenario.types import VectorizedMap

from helpers import constant_future, straight_scene, track


def _pairwise(points):
    return np.hypot(*(points[:, None, :] - points[None, :, :]).transpose(2, 0, 1))


def _all_points(scn):
    pts = [np.array([[scn.ego.x, scn.ego.y]])]
    pts += [a.history[a.mask, :2] for a in scn.agents]
    pts.append(scn.future[..., :2].reshape(-1, 2))
    pts.append(scn.map.roads[scn.map.road_mask][:, :2])
    pts.append(scn.reference_path)
    return np.concatenate(pts)


def test_rotation_oracle():
    a = track(1, 10.0, 8.0)
    scn = straight_scene(agents=[a], futures=[constant_future(10.0, 8.0, 0.0, 0.0, 150)])
    scn = scn.__class__(**{**scn.__dict__, "ego": EgoState(10.0, 5.0, math.pi / 2, 3.0)})
    out = normalize_to_ego(scn)
    np.testing.assert_allclose(out.agents[0].history[-1, :2], [3.0, 0.0], atol=1e-12)
    assert out.ego.x == out.ego.y == out.ego.heading == 0.0


def test_already_ego_centric_is_identity():
    scn = generate_scenario("following_lane_with_lead", 1)
    assert normalize_to_ego(scn) == scn


@given(st.sampled_from([c.name for c in SCENARIO_CLASSES]), st.integers(0, 10_000),
       st.floats(-100, 100), st.floats(-100, 100), st.floats(-math.pi, math.pi))
def test_normalization_is_an_isometry(name, seed, x, y, h):
    base = generate_scenario(name, seed)
    moved = base.__class__(**{**base.__dict__, "ego": EgoState(x, y, h, base.ego.v)})
    out = normalize_to_ego(moved)
    np.testing.assert_allclose(_pairwise(_all_points(out)), _pairwise(_all_points(moved)), atol=1e-9)


def test_generation_is_deterministic():
    a = encode_scenario(generate_scenario("stationary_in_traffic", 7))
    b = encode_scenario(generate_scenario("stationary_in_traffic", 7))
    assert a == b


@pytest.mark.parametrize("seed", range(8))
def test_high_speed_entry_respects_floor(seed):
    scn = generate_scenario("high_magnitude_speed", seed)
    assert scn.ego.v >= 11.0
    assert generate_scenario("high_magnitude_speed", seed, {"entry_speed": 14.0}).ego.v == 14.0


def test_single_lead_in_ego_lane():
    scn = generate_scenario("following_lane_with_lead", 3)
    pos = np.array([a.history[-1, :2] for a in scn.agents])
    in_lane_ahead = (pos[:, 0] > 0) & (np.abs(pos[:, 1]) < 1.75)
    assert in_lane_ahead.sum() == 1


def test_every_class_generates():
    for cls in SCENARIO_CLASSES:
        for seed in range(5):
            scn = generate_scenario(cls.name, seed)
            assert scn.label == cls
            assert scn.horizon_steps == 150
            assert len(scn.agents) <= 16


def test_class_lookup():
    assert get_class("H").name == "high_magnitude_speed"
    assert get_class(13).code == "T"
    with pytest.raises(KeyError):
        get_class("X")


def test_bad_knob_rejected():
    with pytest.raises(GeneratorError):
        generate_scenario("changing_lane", 0, {"horizon": -1.0})


@pytest.mark.parametrize("name", ["changing_lane", "waiting_for_pedestrian_to_cross", "near_multiple_vehicles"])
def test_roundtrip(name):
    scn = generate_scenario(name, 11)
    assert decode_scenario(encode_scenario(scn)) == scn


def test_roundtrip_without_agents():
    scn = straight_scene()
    assert decode_scenario(encode_scenario(scn)) == scn


def test_flipped_version_is_a_decode_error():
    data = bytearray(encode_scenario(generate_scenario("changing_lane", 0)))
    data[4] ^= 0xFF
    with pytest.raises(ScenarioDecodeError):
        decode_scenario(bytes(data))
    with pytest.raises(ScenarioDecodeError):
        decode_scenario(b"garbage")


def test_map_rejects_bad_traffic_light_encoding():
    m = VectorizedMap.empty()
    roads = np.array(m.roads)
    mask = np.array(m.road_mask)
    mask[0] = True
    roads[0, :, 3:] = 0.5
    with pytest.raises(ValueError):
        VectorizedMap(roads, mask, m.crosswalks, m.crosswalk_mask, m.route_lanes, m.route_mask)


def test_negative_speed_rejected():
    with pytest.raises(ValueError):
        EgoState(v=-1.0)
