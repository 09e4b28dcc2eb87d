import math
from types import SimpleNamespace

import numpy as np
import pytest

from lifelong_planner.memory import DbscanParams, MemoryBank
from lifelong_planner.planner import DEFAULT_PARAMS, PlannerParams
from lifelong_planner.reasoner import (
    MAX_PROMPT_CHARS,
    DecisionSource,
    LlmClientConfig,
    MemoryReasoner,
    MockLlmServer,
    decide_llm,
    decide_prototype,
    parse_decision,
    render_prompt,
)
from lifelong_planner.scenario import generate_scenario
from lifelong_planner.simulator import SimConfig, run_episode

from helpers import straight_scene, track

EPS = (1 - math.cos(0.1)) * 1.01
CENTRES = [0.0, 1.5, 3.0]


def unit(a):
    return np.array([math.cos(a), math.sin(a)])


@pytest.fixture
def bank():
    b = MemoryBank(DbscanParams(EPS, 3))
    for c, centre in enumerate(CENTRES):
        for j, off in enumerate((-0.05, 0.0, 0.05)):
            b.insert(10 * c + j, unit(centre + off), meta={"description": f"scene near {centre}"})
    for cid in b.cluster_ids():
        b.set_params(cid, PlannerParams(s0=1.0 + cid), 90.0)
    return b


def test_prompt_is_deterministic():
    scn = generate_scenario("near_multiple_vehicles", 6)
    a, b = render_prompt(scn), render_prompt(scn)
    assert a.text.encode() == b.text.encode()
    assert "DECISION: cluster=<int>" in a.system_prompt


def test_prompt_without_agents():
    p = render_prompt(straight_scene(ego_v=7.04))
    assert "no nearby agents" in p.motion_description
    assert "Ego speed 7.0 m/s" in p.motion_description


def test_prompt_reports_lead_gap():
    p = render_prompt(straight_scene(ego_v=5.0, agents=[track(1, 22.26, 0.0)],
                                     futures=[np.zeros((150, 5))]))
    assert "Lead gap: 22.3 m" in p.motion_description


def test_forty_agents_truncate_farthest_first():
    base = straight_scene()
    agents = [track(i, 5.0 + 3 * i, 4.0) for i in range(40)]
    poses = np.array([[a.history[-1, 0], a.history[-1, 1], 0.0, 0.0, 0.0] for a in agents])
    crowd = SimpleNamespace(agents=agents, ego=base.ego, speed_limit=base.speed_limit,
                            reference_path=base.reference_path, agent_poses=lambda k: poses)
    shot = SimpleNamespace(meta={"description": "x" * 2000}, cluster=0)
    p = render_prompt(crowd, None, [(shot, 0.1)] * 3)
    assert len(p.text) <= MAX_PROMPT_CHARS
    kept = [i for i in range(40) if f"vehicle {i}:" in p.motion_description]
    assert kept and kept == list(range(len(kept))) and len(kept) < 40
    assert "farther agents omitted" in p.motion_description


def test_prototype_single_cluster():
    b = MemoryBank(DbscanParams(EPS, 3))
    for j, a in enumerate((0.0, 0.05, 0.1)):
        b.insert(j, unit(a))
    b.set_params(0, PlannerParams(lo=1.0), 80.0)
    d = decide_prototype(unit(2.0), b)
    assert (d.cluster_id, d.params, d.source) == (0, PlannerParams(lo=1.0), DecisionSource.PROTOTYPE_FALLBACK)


def test_prototype_exact_centroid(bank):
    c = bank.clusters()[1]
    assert decide_prototype(c.centroid, bank).cluster_id == 1


def test_prototype_matches_exhaustive_oracle(bank):
    cents = {cid: c.centroid for cid, c in bank.clusters().items()}
    for a in np.linspace(-0.5, 3.5, 41):
        q = unit(a)
        want = min(cents, key=lambda k: (1 - float(cents[k] @ q), k))
        got = decide_prototype(q, bank)
        assert got.cluster_id == want and got.params == bank.clusters()[want].best_params


def test_prototype_without_tuned_clusters_defaults():
    d = decide_prototype(unit(0.0), MemoryBank())
    assert d.params == DEFAULT_PARAMS and d.cluster_id is None and d.warnings


def test_parse_decision():
    assert parse_decision("thinking...\nDECISION: cluster=4\n") == 4
    assert parse_decision("DECISION: cluster=4 because") is None
    assert parse_decision("decision: cluster=4") is None
    assert parse_decision("") is None


def _ask(bank, server, **kw):
    cfg = LlmClientConfig(url=server.url, **kw)
    return decide_llm(render_prompt(straight_scene()), cfg, bank, unit(0.02))


def test_llm_happy_path(bank):
    with MockLlmServer("decide", cluster=2) as server:
        d = _ask(bank, server, token="secret")
    assert (d.cluster_id, d.source) == (2, DecisionSource.LLM)
    assert d.params == bank.clusters()[2].best_params
    assert server.requests[0]["messages"][0]["role"] == "system"


@pytest.mark.parametrize("mode", ["prose", "invalid", "garbage", "error", "bad_json", "empty"])
def test_llm_failures_fall_back(bank, mode):
    with MockLlmServer(mode) as server:
        d = _ask(bank, server)
    ref = decide_prototype(unit(0.02), bank)
    assert d.source == DecisionSource.PROTOTYPE_FALLBACK
    assert (d.cluster_id, d.params) == (ref.cluster_id, ref.params) == (0, bank.clusters()[0].best_params)
    assert "language model unavailable" in d.rationale


def test_llm_timeout_falls_back(bank):
    with MockLlmServer("timeout", delay=1.0) as server:
        d = _ask(bank, server, timeout=0.2)
    assert d.source == DecisionSource.PROTOTYPE_FALLBACK and "timeout" in d.rationale


def test_unreachable_endpoint_falls_back(bank):
    d = decide_llm(render_prompt(straight_scene()), LlmClientConfig(url="http://127.0.0.1:9/x", timeout=1.0),
                   bank, unit(0.02))
    assert d.source == DecisionSource.PROTOTYPE_FALLBACK


def test_disabled_endpoint_equals_prototype(bank):
    for a in np.linspace(0, 3, 13):
        for cfg in (LlmClientConfig(), LlmClientConfig(url="http://x", enabled=False)):
            assert decide_llm(render_prompt(straight_scene()), cfg, bank, unit(a)) == decide_prototype(unit(a), bank)


def test_prompt_logging(bank, tmp_path):
    with MockLlmServer("decide", cluster=1) as server:
        _ask(bank, server, log_dir=str(tmp_path))
    assert (tmp_path / "request.json").exists() and (tmp_path / "response.json").exists()


class FixedEncoder:
    def __init__(self, z):
        self.z = z

    def transform(self, scenarios):
        return np.array([self.z for _ in scenarios])


def test_memory_reasoner_modes(bank):
    r = MemoryReasoner(FixedEncoder(unit(1.52)), bank)
    assert r(straight_scene()).cluster_id == 1
    off = MemoryReasoner(FixedEncoder(unit(1.52)), bank, use_memory=False)
    assert off(straight_scene()).params == DEFAULT_PARAMS


def test_reasoner_errors_never_abort_episode():
    class Broken:
        def transform(self, scenarios):
            raise RuntimeError("encoder exploded")

    scn = straight_scene(ego_v=8.0)
    trace, score = run_episode(scn, reasoner=MemoryReasoner(Broken(), MemoryBank()), config=SimConfig())
    assert trace.n_steps == SimConfig().n_steps and score.composite > 0
    assert any(ev["kind"] == "reasoner_failure" for ev in trace.events)
