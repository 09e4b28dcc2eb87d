"""Closed-loop episodes, collision/TTC/comfort checks and composite scoring."""
from .core import (
    ClosedLoopScore,
    SimConfig,
    SimTrace,
    collisions,
    composite_score,
    export_episode,
    run_episode,
    score_trace,
    step,
    time_to_collision,
)
