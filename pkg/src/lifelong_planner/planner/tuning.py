"""Per-cluster grid search over planner parameters, scored by closed-loop episodes."""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from sklearn.base import BaseEstimator

from ..simulator import SimConfig, run_episode
from .idm import ParamGrid, PlannerParams


def scenario_key(scenario) -> str:
    return f"{scenario.id}|{json.dumps(scenario.knobs, sort_keys=True, default=str)}"


class ScoreCache:
    """Memoises composite scores per (scenario, params); episodes are pure so this is exact."""

    def __init__(self):
        self._scores: dict[tuple, float] = {}
        self.hits = 0

    def get(self, scenario, params: PlannerParams):
        value = self._scores.get((scenario_key(scenario), params.as_tuple()))
        if value is not None:
            self.hits += 1
        return value

    def put(self, scenario, params: PlannerParams, score: float) -> None:
        self._scores[(scenario_key(scenario), params.as_tuple())] = float(score)

    def __len__(self):
        return len(self._scores)


def episode_score(scenario, params: PlannerParams, config: SimConfig = SimConfig()) -> float:
    _, score = run_episode(scenario, params=params, config=config)
    return score.composite


def _score_job(job):
    scenario, params, config = job
    return episode_score(scenario, params, config)


def evaluate_grid(scenarios, grid: ParamGrid, config: SimConfig = SimConfig(), cache: ScoreCache | None = None,
                  n_jobs: int = 1) -> np.ndarray:
    """Score matrix (len(grid), len(scenarios)) of closed-loop composites."""
    scenarios = list(scenarios)
    out = np.full((len(grid), len(scenarios)), np.nan)
    todo = []
    for m, p in enumerate(grid):
        for j, scn in enumerate(scenarios):
            hit = cache.get(scn, p) if cache is not None else None
            if hit is None:
                todo.append((m, j))
            else:
                out[m, j] = hit
    jobs = [(scenarios[j], grid[m], config) for m, j in todo]
    if n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_score_job, jobs, chunksize=max(1, len(jobs) // (4 * n_jobs))))
    else:
        results = [_score_job(job) for job in jobs]
    # results come back in submission order, so the merge is deterministic
    for (m, j), value in zip(todo, results):
        out[m, j] = value
        if cache is not None:
            cache.put(scenarios[j], grid[m], value)
    return out


def grid_search(scenarios, grid: ParamGrid, episodes_per_pair: int = 1, config: SimConfig = SimConfig(),
                cache: ScoreCache | None = None, n_jobs: int = 1) -> tuple[PlannerParams, float]:
    """Mean closed-loop score of every grid element over the cluster; argmax, earliest index on ties.

    Episodes are deterministic, so repeated episodes of a pair give identical scores and
    ``episodes_per_pair`` only has to be >= 1.
    """
    scenarios = list(scenarios)
    if not scenarios:
        raise ValueError("grid search needs at least one scenario")
    if len(grid) == 0:
        raise ValueError("parameter grid is empty")
    if episodes_per_pair < 1:
        raise ValueError("episodes_per_pair must be >= 1")
    means = evaluate_grid(scenarios, grid, config, cache, n_jobs).mean(axis=1)
    best = int(np.argmax(means))
    return grid[best], float(means[best])


class PlannerGridSearch(BaseEstimator):
    """Estimator wrapper: ``fit(scenarios)`` sets ``best_params_``, ``best_score_`` and ``scores_``."""

    def __init__(self, grid=None, config=None, n_jobs=1):
        self.grid = grid
        self.config = config
        self.n_jobs = n_jobs

    def fit(self, X, y=None, cache: ScoreCache | None = None):
        grid = self.grid if isinstance(self.grid, ParamGrid) else (
            ParamGrid.product() if self.grid is None else ParamGrid(self.grid))
        scenarios = list(X)
        if not scenarios:
            raise ValueError("grid search needs at least one scenario")
        self.grid_ = grid
        self.scores_ = evaluate_grid(scenarios, grid, self.config or SimConfig(), cache, self.n_jobs)
        means = self.scores_.mean(axis=1)
        self.best_index_ = int(np.argmax(means))
        self.best_params_ = grid[self.best_index_]
        self.best_score_ = float(means[self.best_index_])
        return self

    def score(self, X, y=None) -> float:
        """Mean composite of ``best_params_`` over ``X``."""
        return float(np.mean([episode_score(s, self.best_params_, self.config or SimConfig()) for s in X]))
