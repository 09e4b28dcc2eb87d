import numpy as np
import pytest
from hypothesis import given, strategies as st

from lifelong_planner.planner import DEFAULT_PARAMS
from lifelong_planner.planner.pdm import Trajectory
from lifelong_planner.scenario import generate_scenario
from lifelong_planner.scenario.types import EgoState
from lifelong_planner.simulator import SimConfig, SimTrace, run_episode, score_trace, step
from lifelong_planner.simulator.core import collisions, composite_score
from lifelong_planner.state import WorldState

from helpers import constant_future, straight_scene, track


def hold_still(state, params, route):
    e = state.ego
    t = e.t + np.arange(41) * 0.1
    wp = np.stack([np.full(41, e.x), np.full(41, e.y), np.full(41, e.heading), np.zeros(41), t], axis=-1)
    return Trajectory(wp, np.zeros(41))


def test_zero_velocity_step_only_advances_time():
    scn = straight_scene(ego_v=0.0)
    w0 = WorldState.initial(scn)
    w1, events = step(w0, hold_still(w0, DEFAULT_PARAMS, None), scn)
    assert events == []
    assert (w1.ego.x, w1.ego.y, w1.ego.heading, w1.ego.v) == (w0.ego.x, w0.ego.y, w0.ego.heading, w0.ego.v)
    assert w1.ego.t == pytest.approx(0.1)


def test_overlapping_footprints_collide():
    agent = track(1, 1.0, 0.0)
    scn = straight_scene(ego_v=0.0, agents=[agent], futures=[constant_future(1.0, 0.0, 0.0, 0.0, 150)])
    w0 = WorldState.initial(scn)
    _, events = step(w0, hold_still(w0, DEFAULT_PARAMS, None), scn)
    assert [ev["kind"] for ev in events] == ["collision"]


def test_agents_replay_futures_bitwise():
    scn = generate_scenario("near_multiple_vehicles", 4)
    trace, _ = run_episode(scn)
    k = trace.n_steps
    assert np.array_equal(trace.agents[1:k + 1], scn.future[:, :k].transpose(1, 0, 2))


def test_empty_road_scores_high():
    _, score = run_episode(straight_scene(ego_v=10.0))
    assert score.composite >= 90.0


def test_episode_determinism():
    scn = generate_scenario("changing_lane", 9)
    assert run_episode(scn)[0].to_bytes() == run_episode(scn)[0].to_bytes()


def test_at_fault_collision_zeroes_score():
    # ego drives into a parked car at speed
    agent = track(1, 20.0, 0.0)
    scn = straight_scene(ego_v=12.0, agents=[agent], futures=[constant_future(20.0, 0.0, 0.0, 0.0, 150)])

    def floor_it(state, params, route):
        e = state.ego
        t = e.t + np.arange(41) * 0.1
        x = e.x + e.v * np.arange(41) * 0.1
        wp = np.stack([x, np.zeros(41), np.zeros(41), np.full(41, e.v), t], axis=-1)
        return Trajectory(wp, np.zeros(41))

    trace, score = run_episode(scn, policy=floor_it)
    assert not score.no_at_fault_collision
    assert score.composite == 0.0


def test_stationary_ego_is_comfortable_and_legal():
    scn = generate_scenario("stationary_in_traffic", 2)
    scn = scn.__class__(**{**scn.__dict__, "ego": EgoState(v=0.0)})
    _, score = run_episode(scn, policy=hold_still)
    assert score.comfort == 1.0 and score.speed_compliance == 1.0


def test_three_step_trace_arithmetic():
    scn = straight_scene(ego_v=10.0, agents=[track(1, 100.0, 0.0)],
                         futures=[constant_future(100.0, 0.0, 0.0, 0.0, 150)], expert_progress=6.0)
    ego = np.array([[0.0, 0.0, 0, 0, 10, 0], [0.1, 1.0, 0, 0, 10, 0], [0.2, 2.0, 0, 0, 10, 0], [0.3, 3.0, 0, 0, 10, 0]])
    agents = np.zeros((4, 1, 5))
    agents[:, 0, 0] = [100.0, 10.0, 100.0, 100.0]
    trace = SimTrace(scn.id, ego, agents, np.zeros((3, 5)))
    score = score_trace(trace, scn, SimConfig(horizon=0.3))
    assert score.ttc_compliance == pytest.approx(2 / 3)
    assert score.progress_ratio == pytest.approx(0.5)
    expected = 100 * (5 * 2 / 3 + 5 * 0.5 + 4 * 1.0 + 2 * 1.0) / 16
    assert score.composite == pytest.approx(expected, abs=1e-12)


@given(st.lists(st.booleans(), min_size=1, max_size=3),
       st.lists(st.floats(0.0, 1.0), min_size=4, max_size=4))
def test_composite_bounds_and_gate(gates, terms):
    c = composite_score(gates, terms, (5, 5, 4, 2))
    assert 0.0 <= c <= 100.0 + 1e-9
    if not all(gates):
        assert c == 0.0


def _hits(ego_v, agent_row):
    agents = np.array([agent_row], dtype=float)
    return collisions(EgoState(0.0, 0.0, 0.0, ego_v), agents, np.array([[4.6, 2.0]]), SimConfig())


def test_stationary_ego_struck_from_behind_not_at_fault():
    (ev,) = _hits(0.0, [-3.0, 0.0, 0.0, 5.0, 0.0])
    assert not ev["at_fault"]


def test_moving_ego_rear_ended_not_at_fault():
    (ev,) = _hits(5.0, [-3.0, 0.0, 0.0, 9.0, 0.0])
    assert not ev["at_fault"]


def test_moving_ego_hitting_something_is_at_fault():
    (ev,) = _hits(5.0, [3.0, 0.0, 0.0, 0.0, 0.0])
    assert ev["at_fault"]
    # a slower car behind the axle that the ego sideswipes while overtaking is still its fault
    (ev,) = _hits(5.0, [-3.0, 1.5, 0.0, 0.0, 0.0])
    assert ev["at_fault"]


@pytest.mark.parametrize("horizon,calls", [(15.0, 1), (30.0, 2)])
def test_reasoner_cadence(horizon, calls):
    scn = straight_scene(ego_v=5.0, horizon=horizon)
    fired = []

    def reasoner(scenario, world):
        fired.append(world.t)
        return DEFAULT_PARAMS

    run_episode(scn, reasoner=reasoner, config=SimConfig(horizon=horizon, reasoner_period=15.0))
    assert len(fired) == calls and fired[0] == 0.0


def test_bad_config_rejected():
    with pytest.raises(ValueError):
        SimConfig(horizon=1.05, dt=0.1)
    with pytest.raises(ValueError):
        run_episode(straight_scene(horizon=1.0))
