"""End-to-end lifelong pipeline: suite, encoder, memory, adaptation, benchmark and ablation."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path as FsPath

import numpy as np

from ..encoder import RandomProjectionEncoder, SceneEncoder
from ..memory import MemoryBank, sample_synthetic
from ..planner import DEFAULT_PARAMS, ParamGrid
from ..planner.tuning import ScoreCache, grid_search
from ..reasoner import LlmClientConfig, MemoryReasoner, describe
from ..scenario import COMMON_CLASSES, Scenario, generate_scenario, read_scenario
from ..simulator import SimConfig, export_episode, run_episode
from .config import RunConfig

logger = logging.getLogger(__name__)

ROLE_OFFSETS = {"train": 0, "adapt": 10_000, "eval": 20_000}
SYNTHETIC_ID_BASE = 9_000_000_000


def suite_seeds(cfg: RunConfig, role: str, n: int) -> list[int]:
    base = cfg.seed * 100_000 + ROLE_OFFSETS[role]
    return [base + i for i in range(n)]


def entry_id(scenario: Scenario) -> int:
    return scenario.label.id * 100_000_000 + scenario.seed


@dataclass
class Suite:
    train: list
    adapt: dict          # long-tail code -> scenarios
    eval: list

    def library(self) -> dict:
        out = {}
        for s in self.train + self.eval + [s for group in self.adapt.values() for s in group]:
            out[s.id] = s
        return out


def build_suite(cfg: RunConfig) -> Suite:
    """Generate the seeded suite, or read it from ``paths.scenarios`` (split by seed range)."""
    sc = cfg.suite
    if cfg.paths.scenarios is not None:
        found = [read_scenario(p) for p in sorted(cfg.resolve(cfg.paths.scenarios).rglob("*.scn"))]
        role_of = _role_by_seed(cfg)
        # same order as the generated suite, since training depends on it
        found.sort(key=lambda s: (s.label.id, s.seed))
        train = [s for s in found if role_of(s.seed) == "train" and not s.label.is_long_tail]
        adapt = {c: [s for s in found if role_of(s.seed) == "adapt" and s.label.code == c] for c in sc.stages}
        evals = [s for s in found if role_of(s.seed) == "eval" and s.label.code in sc.eval_classes]
        return Suite(train, adapt, sorted(evals, key=lambda s: s.id))
    train = [generate_scenario(c.name, seed) for c in COMMON_CLASSES
             for seed in suite_seeds(cfg, "train", sc.common_per_class)]
    adapt = {c: [generate_scenario(c, seed) for seed in suite_seeds(cfg, "adapt", sc.adapt_per_class)]
             for c in sc.stages}
    evals = [generate_scenario(c, seed) for c in sc.eval_classes
             for seed in suite_seeds(cfg, "eval", sc.eval_per_class)]
    return Suite(train, adapt, sorted(evals, key=lambda s: s.id))


def _role_by_seed(cfg: RunConfig):
    def role(seed: int) -> str:
        local = seed - cfg.seed * 100_000
        for name, offset in sorted(ROLE_OFFSETS.items(), key=lambda kv: -kv[1]):
            if local >= offset:
                return name
        return "train"

    return role


# --------------------------------------------------------------------------- encoder / memory

def train_scene_encoder(cfg: RunConfig, scenarios, callback=None) -> SceneEncoder:
    e = cfg.encoder
    enc = SceneEncoder(d_z=e.d_z, hidden=e.hidden, m_p=e.m_p, m_n=e.m_n, lam=e.lam, lr=e.lr, momentum=e.momentum,
                       batch_size=e.batch_size, epochs=e.epochs, seed=cfg.seed)
    return enc.fit(scenarios, callback=callback)


def insert_scenarios(bank: MemoryBank, encoder, scenarios, labelled: bool = True, snapshot=None) -> set[int]:
    """Encode and insert; returns clusters that changed.

    Ids already in the bank are skipped, so re-running is harmless. With ``snapshot`` the
    bank is saved after every insert.
    """
    fresh = [s for s in scenarios if entry_id(s) not in bank]
    if not fresh:
        return set()
    Z = np.asarray(encoder.transform(fresh))
    changed = set()
    for s, z in zip(fresh, Z):
        meta = {"scenario": s.id, "class": s.label.name, "seed": s.seed, "description": describe(s)}
        changed |= bank.insert(entry_id(s), z, s.label.id if labelled else None, meta)
        if snapshot is not None:
            bank.save(snapshot)
    return changed


def augment_bank(bank: MemoryBank, prototypes: np.ndarray, classes, sigma: float, n: int, seed: int) -> None:
    """Add Gaussian samples around each class prototype (memory-only post-training)."""
    if n <= 0:
        return
    next_id = SYNTHETIC_ID_BASE + sum(1 for i in bank.entries if i >= SYNTHETIC_ID_BASE)
    for row, (cls_id, proto) in enumerate(zip(classes, prototypes)):
        for z in sample_synthetic(proto, sigma, n, seed * 1000 + row):
            bank.insert(next_id, z, int(cls_id), {"synthetic": True})
            next_id += 1


def scenario_from_meta(meta: dict, library: dict):
    """The scenario behind a memory entry: from ``library`` or regenerated from its class and seed."""
    key = meta.get("scenario")
    if key in library:
        return library[key]
    if "class" in meta and "seed" in meta:
        return generate_scenario(meta["class"], int(meta["seed"]))
    return None  # synthetic entries have nothing to replay


def cluster_scenarios(bank: MemoryBank, cluster_id: int, library: dict, limit: int) -> list:
    members = sorted(bank.clusters()[cluster_id].members)
    found = (scenario_from_meta(bank.entries[m].meta, library) for m in members)
    scenarios = [s for s in found if s is not None]
    if len(scenarios) > limit:
        picks = np.linspace(0, len(scenarios) - 1, limit).round().astype(int)
        scenarios = [scenarios[i] for i in sorted(set(picks))]
    return scenarios


def tune_clusters(bank: MemoryBank, library: dict, grid: ParamGrid, sim: SimConfig, limit: int,
                  cache: ScoreCache | None = None, clusters=None, n_jobs: int = 1, snapshot=None) -> dict:
    """Grid-search every requested cluster (default: the stale ones) over its member scenarios."""
    todo = sorted(bank.stale if clusters is None else clusters)
    tuned = {}
    for cid in todo:
        scenarios = cluster_scenarios(bank, cid, library, limit)
        if not scenarios:
            logger.info("cluster %d has no replayable scenarios; left untuned", cid)
            continue
        params, score = grid_search(scenarios, grid, config=sim, cache=cache, n_jobs=n_jobs)
        bank.set_params(cid, params, score)
        tuned[cid] = (params, score)
        if snapshot is not None:
            bank.save(snapshot)
        logger.info("cluster %d: %d scenarios -> %s (%.2f)", cid, len(scenarios), params, score)
    return tuned


def build_memory(cfg: RunConfig, encoder, scenarios, library: dict, cache: ScoreCache | None = None,
                 tune: bool = True) -> MemoryBank:
    bank = MemoryBank(cfg.dbscan_params())
    insert_scenarios(bank, encoder, scenarios)
    if cfg.augment.n > 0 and hasattr(encoder, "prototype_matrix"):
        augment_bank(bank, encoder.prototype_matrix(), encoder.classes_, cfg.augment.sigma, cfg.augment.n, cfg.seed)
    if tune:
        tune_clusters(bank, library, cfg.param_grid(), cfg.sim_config(), cfg.tune.max_scenarios_per_cluster,
                      cache, n_jobs=cfg.tune.n_jobs)
    return bank


def adapt(bank: MemoryBank, scenarios, encoder, grid: ParamGrid, sim: SimConfig = SimConfig(),
          library: dict | None = None, limit: int = 8, cache: ScoreCache | None = None, n_jobs: int = 1,
          snapshot=None) -> MemoryBank:
    """Insert new scenarios (unlabelled) and re-tune every cluster that gained members.

    The encoder is only read. Clusters merged away lose their tuning; the survivor is stale
    and gets re-tuned here. ``snapshot`` persists progress after every insert and every tune.
    """
    scenarios = list(scenarios)
    library = dict(library or {})
    library.update({s.id: s for s in scenarios})
    insert_scenarios(bank, encoder, scenarios, labelled=False, snapshot=snapshot)
    tune_clusters(bank, library, grid, sim, limit, cache, n_jobs=n_jobs, snapshot=snapshot)
    return bank


def copy_bank(bank: MemoryBank) -> MemoryBank:
    return MemoryBank.from_bytes(bank.to_bytes())


# --------------------------------------------------------------------------- evaluation

@dataclass
class EpisodeRecord:
    scenario: str
    code: str
    composite: float
    params: list
    source: str

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "class": self.code, "composite": self.composite, "params": self.params,
                "source": self.source}


def llm_config(cfg: RunConfig, no_llm: bool = False, log_dir=None) -> LlmClientConfig:
    r = cfg.reasoner
    enabled = r.use_llm and not no_llm and not cfg.ablation.no_llm
    return LlmClientConfig.from_env(url=r.url, timeout=r.timeout, enabled=enabled,
                                    log_dir=str(log_dir) if (log_dir and r.log_prompts) else None)


def evaluate(scenarios, reasoner, sim: SimConfig, trace_dir=None) -> list[EpisodeRecord]:
    records = []
    for s in sorted(scenarios, key=lambda x: x.id):
        try:
            trace, score = run_episode(s, reasoner=reasoner, config=sim)
        except Exception as exc:  # an aborted episode scores 0 and the run goes on
            logger.warning("episode %s aborted: %s", s.id, exc)
            rec = EpisodeRecord(s.id, s.label.code, 0.0, list(DEFAULT_PARAMS.as_tuple()), "aborted")
            records.append(rec)
            if trace_dir is not None:
                FsPath(trace_dir).mkdir(parents=True, exist_ok=True)
                (FsPath(trace_dir) / f"{s.id.replace('/', '__')}.json").write_text(
                    json.dumps({**rec.to_dict(), "error": str(exc)}, indent=2, sort_keys=True))
            continue
        decision = getattr(reasoner, "last", None)
        params = (decision.params if decision is not None else DEFAULT_PARAMS).as_tuple()
        source = decision.source.value if decision is not None else "direct"
        rec = EpisodeRecord(s.id, s.label.code, score.composite, list(params), source)
        records.append(rec)
        if trace_dir is not None:
            export_episode(trace_dir, trace, score, {"class": s.label.code, "params": list(params), "source": source})
    return records


def stage_names(codes) -> list[str]:
    names, acc = ["base"], ""
    for c in codes:
        acc += f"+{c}"
        names.append(acc)
    return names


def stage_row(name: str, records) -> dict:
    per_class = {}
    for code in sorted({r.code for r in records}):
        vals = [r.composite for r in records if r.code == code]
        per_class[code] = float(np.mean(vals))
    return {"stage": name, "per_class": per_class, "total": float(np.mean([r.composite for r in records])),
            "episodes": len(records)}


def make_report(cfg: RunConfig, rows: list[dict], kind: str = "benchmark") -> dict:
    return {
        "kind": kind,
        "config_hash": cfg.hash(),
        "seeds": {"config": cfg.seed, "eval": suite_seeds(cfg, "eval", cfg.suite.eval_per_class)},
        "episode_count": int(sum(r["episodes"] for r in rows)),
        "stages": rows,
    }


def report_bytes(report: dict) -> bytes:
    return (json.dumps(report, indent=2, sort_keys=True) + "\n").encode()


@dataclass
class Artifacts:
    suite: Suite
    encoder: object
    base_bank: MemoryBank
    cache: ScoreCache = field(default_factory=ScoreCache)

    @property
    def library(self) -> dict:
        return self.suite.library()


def prepare(cfg: RunConfig, encoder=None, base_bank=None, cache: ScoreCache | None = None,
            callback=None) -> Artifacts:
    """Suite + trained encoder + tuned common-only memory (reusing what is passed in)."""
    suite = build_suite(cfg)
    cache = cache or ScoreCache()
    if encoder is None:
        encoder = train_scene_encoder(cfg, suite.train, callback)
    if base_bank is None:
        base_bank = build_memory(cfg, encoder, suite.train, suite.library(), cache)
    return Artifacts(suite, encoder, base_bank, cache)


def lifelong_stages(cfg: RunConfig, art: Artifacts, encoder=None, base_bank=None, out_dir=None, label="benchmark",
                    only_final: bool = False) -> list[dict]:
    """Evaluate the suite after each memory stage; returns one report row per stage."""
    encoder = encoder or art.encoder
    bank = copy_bank(base_bank or art.base_bank)
    sim = cfg.sim_config()
    grid = cfg.param_grid()
    library = art.library
    names = stage_names(cfg.suite.stages)
    rows = []
    for k, name in enumerate(names):
        if k > 0:
            code = cfg.suite.stages[k - 1]
            adapt(bank, art.suite.adapt[code], encoder, grid, sim, library, cfg.tune.max_scenarios_per_cluster,
                  art.cache, cfg.tune.n_jobs)
        if only_final and k < len(names) - 1:
            continue
        trace_dir = FsPath(out_dir) / label / _safe(name) if out_dir else None
        reasoner = MemoryReasoner(encoder, bank, llm_config(cfg, log_dir=trace_dir), cfg.reasoner.k_shots)
        rows.append(stage_row(name, evaluate(art.suite.eval, reasoner, sim, trace_dir)))
        if out_dir:
            bank.save(FsPath(out_dir) / label / f"memory_{_safe(name)}.bin")
    return rows


def _safe(name: str) -> str:
    return name.replace("+", "plus_") if name != "base" else name


def run_benchmark(cfg: RunConfig, art: Artifacts | None = None, out_dir=None) -> dict:
    art = art or prepare(cfg)
    report = make_report(cfg, lifelong_stages(cfg, art, out_dir=out_dir))
    if out_dir:
        (FsPath(out_dir) / "report.json").write_bytes(report_bytes(report))
    return report


def ablate(cfg: RunConfig, art: Artifacts | None = None, out_dir=None) -> dict[str, dict]:
    """Four configurations on the final memory stage: no_llm, no_memory, no_encoder, full."""
    art = art or prepare(cfg)
    sim = cfg.sim_config()
    reports = {}

    full = lifelong_stages(cfg, art, out_dir=out_dir, label="full", only_final=True)
    reports["full"] = make_report(cfg, [{**full[-1], "stage": "full"}], "ablation")

    if cfg.reasoner.use_llm:
        cfg_no_llm = RunConfig.from_dict({**cfg.to_dict(), "ablation": {"no_llm": True}}, cfg.base_dir)
        rows = lifelong_stages(cfg_no_llm, art, out_dir=out_dir, label="no_llm", only_final=True)
    else:
        rows = full  # without an endpoint the full system already decides by prototype
    reports["no_llm"] = make_report(cfg, [{**rows[-1], "stage": "no_llm"}], "ablation")

    trace_dir = FsPath(out_dir) / "no_memory" / "final" if out_dir else None
    reasoner = MemoryReasoner(art.encoder, art.base_bank, use_memory=False)
    reports["no_memory"] = make_report(cfg, [stage_row("no_memory", evaluate(art.suite.eval, reasoner, sim, trace_dir))],
                                       "ablation")

    proj = RandomProjectionEncoder(d_z=cfg.encoder.d_z, seed=cfg.seed)
    proj_bank = build_memory(cfg, proj, art.suite.train, art.library, art.cache)
    rows = lifelong_stages(cfg, art, encoder=proj, base_bank=proj_bank, out_dir=out_dir, label="no_encoder",
                           only_final=True)
    reports["no_encoder"] = make_report(cfg, [{**rows[-1], "stage": "no_encoder"}], "ablation")

    if out_dir:
        for name, rep in reports.items():
            (FsPath(out_dir) / f"ablation_{name}.json").write_bytes(report_bytes(rep))
    return reports


def report_from_traces(cfg: RunConfig, trace_root) -> dict:
    """Rebuild the benchmark report from per-episode score records on disk."""
    root = FsPath(trace_root)
    rows = []
    for name in stage_names(cfg.suite.stages):
        stage_dir = root / "benchmark" / _safe(name)
        files = sorted(stage_dir.glob("*.json"))
        if not files:
            raise FileNotFoundError(f"no episode records under {stage_dir}")
        recs = []
        for f in files:
            d = json.loads(f.read_text())
            recs.append(EpisodeRecord(d["scenario"], d["class"], d["composite"], d["params"], d["source"]))
        recs.sort(key=lambda r: r.scenario)
        rows.append(stage_row(name, recs))
    return make_report(cfg, rows)
