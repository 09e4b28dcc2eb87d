"""IDM law, PDM-style candidate planner and per-cluster grid search."""
from .idm import DEFAULT_PARAMS, IdmContext, ParamGrid, PlannerParams, desired_gap, idm_accel
from .pdm import (
    Candidate,
    PDMPlanner,
    PlannerConfig,
    Trajectory,
    candidate_centerline,
    forecast_agents,
    generate_candidates,
)


def __getattr__(name):
    # grid search depends on the simulator, which itself imports the planner
    if name in {"grid_search", "PlannerGridSearch"}:
        from . import tuning

        return getattr(tuning, name)
    raise AttributeError(name)
