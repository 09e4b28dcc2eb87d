import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lifelong_planner.planner import DEFAULT_PARAMS, IdmContext, ParamGrid, PlannerParams, desired_gap, idm_accel

from helpers import follow_lead, idm_reference, random_lead_profile


def test_desired_gap_standing():
    assert desired_gap(IdmContext(v=0.0, v0=10.0, s=5.0, dv=3.0), DEFAULT_PARAMS) == DEFAULT_PARAMS.s0


def test_desired_gap_cruising():
    p = PlannerParams(s0=2.0)
    assert desired_gap(IdmContext(v=10.0, v0=15.0, s=30.0, dv=0.0), p) == pytest.approx(17.0, abs=1e-9)


def test_desired_gap_clamps_negative_dynamic_term():
    p = PlannerParams(s0=2.0, a_m=1.5, b=2.0)
    assert desired_gap(IdmContext(v=5.0, v0=15.0, s=30.0, dv=-10.0), p) == pytest.approx(2.0, abs=1e-9)


def test_accel_hand_value():
    p = PlannerParams(s0=2.0, a_m=1.5, b=2.0)
    ctx = IdmContext(v=10.0, v0=15.0, s=20.0, dv=2.0)
    assert desired_gap(ctx, p) == pytest.approx(22.773502691896258, abs=1e-9)
    assert idm_accel(ctx, p) == pytest.approx(-0.7411678895130692, abs=1e-9)
    assert idm_reference(10.0, 15.0, 20.0, 2.0, 2.0, 1.5, 2.0)[1] == pytest.approx(idm_accel(ctx, p), abs=1e-12)


def test_free_road_limits():
    assert idm_accel(IdmContext(v=12.0, v0=12.0), DEFAULT_PARAMS) == 0.0
    assert idm_accel(IdmContext(v=0.0, v0=12.0), DEFAULT_PARAMS) == DEFAULT_PARAMS.a_m


speeds = st.floats(0.0, 30.0)
gaps = st.floats(0.5, 200.0)


@given(speeds, st.floats(1.0, 30.0), gaps, st.floats(-10.0, 10.0))
def test_never_exceeds_max_accel(v, v0, s, dv):
    assert idm_accel(IdmContext(v, v0, s, dv), DEFAULT_PARAMS) <= DEFAULT_PARAMS.a_m + 1e-12


@given(speeds, st.floats(1.0, 30.0), gaps, gaps, st.floats(0.0, 10.0))
def test_more_gap_never_brakes_harder(v, v0, s1, s2, dv):
    lo, hi = sorted((s1, s2))
    assert idm_accel(IdmContext(v, v0, hi, dv), DEFAULT_PARAMS) >= idm_accel(IdmContext(v, v0, lo, dv), DEFAULT_PARAMS) - 1e-12


@given(speeds, speeds, st.floats(1.0, 30.0), gaps, st.floats(0.0, 10.0))
def test_faster_never_accelerates_more(v1, v2, v0, s, dv):
    lo, hi = sorted((v1, v2))
    assert idm_accel(IdmContext(hi, v0, s, dv), DEFAULT_PARAMS) <= idm_accel(IdmContext(lo, v0, s, dv), DEFAULT_PARAMS) + 1e-12


def test_car_following_never_collides():
    rng = np.random.default_rng(0)
    p = DEFAULT_PARAMS
    for _ in range(100):
        v_ego = rng.uniform(0.0, 15.0)
        v_lead = rng.uniform(0.0, 15.0)
        s_star = desired_gap(IdmContext(v_ego, 15.0, 100.0, v_ego - v_lead), p)
        gap = s_star + rng.uniform(0.0, 20.0)
        assert follow_lead(random_lead_profile(rng, p.b), v_ego, v_lead, gap, p) > 0.0


def test_params_validation():
    with pytest.raises(ValueError):
        PlannerParams(b=0.0)
    with pytest.raises(ValueError):
        PlannerParams(th=-1.0)
    with pytest.raises(ValueError):
        PlannerParams(s0=math.nan)
    assert PlannerParams(th=0.0).th == 0.0


def test_grid_product_order():
    grid = ParamGrid.product(lo=(0.0, 1.0), s0=(1.0, 2.0), a_m=(1.0,), b=(2.0,), th=(1.0,))
    assert [p.lo for p in grid] == [0.0, 0.0, 1.0, 1.0]
    assert [p.s0 for p in grid] == [1.0, 2.0, 1.0, 2.0]
    assert len(ParamGrid.product()) == 108
