"""Deterministic text rendering of a scene for the language-model reasoner."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..geometry import Path
from ..scenario.types import AgentKind, Scenario

MAX_PROMPT_CHARS = 8192
LANE_HALF_WIDTH = 1.75

SYSTEM_PROMPT = (
    "You choose a driving behaviour for an automated vehicle. Each behaviour is a tuned planner "
    "cluster from memory. Read the scene, compare it with the remembered examples and answer with "
    "one line of the form DECISION: cluster=<int>."
)

CHAIN_OF_THOUGHT = (
    "Think step by step: 1) identify the lead vehicle and how fast the gap closes; "
    "2) note vulnerable road users and vehicles that may cut in; 3) judge whether the route bends "
    "or changes lane; 4) pick the remembered example whose situation matches best; "
    "5) output its cluster."
)


def _f(x: float) -> str:
    value = round(float(x), 1)
    return f"{0.0 if value == 0 else value:.1f}"


@dataclass(frozen=True)
class ScenePrompt:
    system_prompt: str
    motion_description: str
    chain_of_thought: str
    few_shots: tuple[str, ...]

    @property
    def user_text(self) -> str:
        shots = "\n".join(self.few_shots) if self.few_shots else "(memory is empty)"
        return (f"Scene:\n{self.motion_description}\n\nRemembered examples:\n{shots}\n\n"
                f"{self.chain_of_thought}")

    @property
    def text(self) -> str:
        return f"{self.system_prompt}\n\n{self.user_text}"

    def messages(self) -> list[dict]:
        return [{"role": "system", "content": self.system_prompt}, {"role": "user", "content": self.user_text}]


def curvature_class(scenario: Scenario, lookahead: float = 50.0) -> str:
    route = Path(scenario.reference_path)
    s0, _, _ = route.project(np.array([[scenario.ego.x, scenario.ego.y]]))
    s = np.linspace(float(s0[0]), float(s0[0]) + lookahead, 26)
    _, _, h = route.interpolate(s)
    turn = np.abs(np.unwrap(h) - h[0]).max()
    lateral = np.abs(route.frenet_to_xy(s, np.zeros_like(s))[1] - scenario.ego.y).max()
    if turn > math.radians(45):
        return "sharp turn"
    if turn > math.radians(10):
        return "gentle curve"
    if lateral > 2.0:
        return "lane change"
    return "straight"


def _agent_lines(scenario: Scenario):
    poses = scenario.agent_poses(0)
    rows = []
    for agent, pose in zip(scenario.agents, poses):
        if not agent.mask.any():
            continue
        dist = math.hypot(pose[0], pose[1])
        rows.append((dist, agent.id, f"- {agent.kind.name.lower()} {agent.id}: at ({_f(pose[0])}, {_f(pose[1])}) m, "
                                     f"speed {_f(math.hypot(pose[3], pose[4]))} m/s, distance {_f(dist)} m"))
    rows.sort()
    return rows


def motion_description(scenario: Scenario, max_agents: int | None = None) -> str:
    ego = scenario.ego
    rows = _agent_lines(scenario)
    poses = scenario.agent_poses(0)
    ahead = [p for a, p in zip(scenario.agents, poses)
             if a.mask.any() and p[0] > 0 and abs(p[1]) < LANE_HALF_WIDTH + 0.5]
    gap = f"{_f(min(p[0] for p in ahead))} m" if ahead else "none"
    counts = {k: 0 for k in AgentKind}
    for a in scenario.agents:
        if a.mask.any():
            counts[a.kind] += 1
    lines = [
        f"Ego speed {_f(ego.v)} m/s, acceleration {_f(ego.a)} m/s^2, speed limit {_f(scenario.speed_limit)} m/s.",
        f"Lead gap: {gap}. Route: {curvature_class(scenario)}.",
    ]
    if not rows:
        lines.append("There are no nearby agents.")
    else:
        lines.append("Nearby agents: " + ", ".join(f"{counts[k]} {k.name.lower()}" for k in AgentKind) + ".")
        keep = rows if max_agents is None else rows[:max_agents]
        lines.extend(r[2] for r in keep)
        if len(keep) < len(rows):
            lines.append(f"({len(rows) - len(keep)} farther agents omitted)")
    return "\n".join(lines)


def render_few_shot(entry, distance: float) -> str:
    desc = entry.meta.get("description", "no description").replace("\n", " ")
    return f"* [distance {_f(distance)}] {desc} -> cluster={entry.cluster}"


def render_prompt(scenario: Scenario, embedding=None, few_shots=()) -> ScenePrompt:
    """Text prompt; agents are dropped farthest-first until it fits in ``MAX_PROMPT_CHARS``.

    ``embedding`` is accepted for symmetry with the decision functions; rendering depends
    only on the scene and the retrieved exemplars.
    """
    shots = tuple(render_few_shot(e, d) for e, d in few_shots)
    n_agents = len(scenario.agents)
    for keep in range(n_agents, -1, -1):
        prompt = ScenePrompt(SYSTEM_PROMPT, motion_description(scenario, keep), CHAIN_OF_THOUGHT, shots)
        if len(prompt.text) <= MAX_PROMPT_CHARS:
            return prompt
    # exemplar text is the only thing left to shorten
    while shots:
        shots = shots[:-1]
        prompt = ScenePrompt(SYSTEM_PROMPT, motion_description(scenario, 0), CHAIN_OF_THOUGHT, shots)
        if len(prompt.text) <= MAX_PROMPT_CHARS:
            return prompt
    return prompt
