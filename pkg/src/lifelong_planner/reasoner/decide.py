"""Planner selection: nearest tuned cluster, or a chat-completion endpoint with total fallback."""
from __future__ import annotations

import enum
import json
import logging
import os
import re
from dataclasses import dataclass, field
from pathlib import Path as FsPath

import httpx
import numpy as np

from ..memory.dbscan import cosine_distances_to
from ..planner.idm import DEFAULT_PARAMS, PlannerParams
from .prompt import ScenePrompt, motion_description, render_prompt

logger = logging.getLogger(__name__)

URL_ENV = "LIFELONG_PLANNER_LLM_URL"
TOKEN_ENV = "LIFELONG_PLANNER_LLM_TOKEN"
DECISION_RE = re.compile(r"^\s*DECISION:\s*cluster=(-?\d+)\s*$", re.MULTILINE)


class DecisionSource(str, enum.Enum):
    PROTOTYPE_FALLBACK = "prototype_fallback"
    LLM = "llm"


@dataclass(frozen=True)
class Decision:
    cluster_id: int | None
    params: PlannerParams
    source: DecisionSource
    rationale: str = ""
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class LlmClientConfig:
    url: str | None = None
    token: str | None = None
    model: str = "planner-reasoner"
    timeout: float = 10.0
    enabled: bool = True
    log_dir: str | None = None

    @classmethod
    def from_env(cls, **overrides) -> "LlmClientConfig":
        base = {"url": os.environ.get(URL_ENV) or None, "token": os.environ.get(TOKEN_ENV) or None}
        base.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**base)

    @property
    def active(self) -> bool:
        return self.enabled and bool(self.url)


def decide_prototype(embedding, bank) -> Decision:
    """Tuned cluster whose centroid is nearest in cosine distance; ties go to the smaller id."""
    tuned = bank.tuned_clusters()
    if not tuned:
        msg = "no tuned cluster in memory; using default planner parameters"
        logger.warning(msg)
        return Decision(None, DEFAULT_PARAMS, DecisionSource.PROTOTYPE_FALLBACK, msg, (msg,))
    ids = sorted(tuned)
    centroids = np.stack([tuned[c].centroid for c in ids])
    z = np.asarray(embedding, dtype=np.float64)
    d = cosine_distances_to(centroids, z / np.linalg.norm(z))
    best = ids[int(np.argmin(d))]  # argmin keeps the first (smallest id) on ties
    return Decision(best, tuned[best].best_params, DecisionSource.PROTOTYPE_FALLBACK,
                    f"nearest cluster centroid at cosine distance {float(d.min()):.4f}")


def parse_decision(text: str) -> int | None:
    match = DECISION_RE.search(text or "")
    return int(match.group(1)) if match else None


def _log(config: LlmClientConfig, name: str, payload) -> None:
    if config.log_dir:
        out = FsPath(config.log_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(json.dumps(payload, indent=2, sort_keys=True))


def decide_llm(prompt: ScenePrompt, config: LlmClientConfig, bank, embedding,
               transport: httpx.BaseTransport | None = None) -> Decision:
    """Ask the endpoint for a cluster; any failure falls back to ``decide_prototype``."""
    fallback = decide_prototype(embedding, bank)
    if not config.active:
        return fallback

    def fail(reason: str) -> Decision:
        logger.info("reasoner fallback: %s", reason)
        return Decision(fallback.cluster_id, fallback.params, fallback.source,
                        f"language model unavailable ({reason}); {fallback.rationale}", fallback.warnings)

    body = {"model": config.model, "messages": prompt.messages(), "temperature": 0}
    headers = {"Authorization": f"Bearer {config.token}"} if config.token else {}
    _log(config, "request.json", body)
    try:
        with httpx.Client(timeout=config.timeout, transport=transport) as client:
            resp = client.post(config.url, json=body, headers=headers)
        resp.raise_for_status()
        payload = resp.json()
        _log(config, "response.json", payload)
        text = payload["choices"][0]["message"]["content"]
    except httpx.TimeoutException:
        return fail(f"timeout after {config.timeout} s")
    except (httpx.HTTPError, ValueError, KeyError, IndexError, TypeError) as exc:
        return fail(f"{type(exc).__name__}: {exc}")
    cluster = parse_decision(text if isinstance(text, str) else "")
    if cluster is None:
        return fail("reply has no DECISION line")
    tuned = bank.tuned_clusters()
    if cluster not in tuned:
        return fail(f"cluster {cluster} is not a tuned cluster")
    return Decision(cluster, tuned[cluster].best_params, DecisionSource.LLM, text.strip())


@dataclass
class MemoryReasoner:
    """Episode hook: encode the scene, retrieve exemplars, pick planner parameters.

    ``encoder`` maps a list of scenarios to unit embeddings (``transform``). With
    ``use_memory=False`` the global default parameters are always returned.
    """

    encoder: object
    bank: object
    llm: LlmClientConfig = field(default_factory=lambda: LlmClientConfig(enabled=False))
    k_shots: int = 3
    use_memory: bool = True
    transport: object = None
    last: Decision | None = None

    def embed(self, scenario) -> np.ndarray:
        return np.asarray(self.encoder.transform([scenario]))[0]

    def __call__(self, scenario, world=None) -> Decision:
        if not self.use_memory:
            self.last = Decision(None, DEFAULT_PARAMS, DecisionSource.PROTOTYPE_FALLBACK, "memory disabled")
            return self.last
        z = self.embed(scenario)
        if self.llm.active:
            shots = self.bank.query_knn(z, self.k_shots)
            self.last = decide_llm(render_prompt(scenario, z, shots), self.llm, self.bank, z, self.transport)
        else:
            self.last = decide_prototype(z, self.bank)
        return self.last


def describe(scenario) -> str:
    """Short description stored with memory entries and shown as a few-shot exemplar."""
    return motion_description(scenario, max_agents=0).replace("\n", " ")
