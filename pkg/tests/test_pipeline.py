import json

import numpy as np
import pytest

from lifelong_planner.encoder import RandomProjectionEncoder
from lifelong_planner.pipeline import (
    ConfigError,
    RunConfig,
    adapt,
    build_memory,
    build_suite,
    copy_bank,
    dump_config,
    load_config,
    prepare,
    report_bytes,
    report_from_traces,
    run_benchmark,
    ablate,
)
from lifelong_planner.pipeline.lifelong import entry_id
from lifelong_planner.scenario import generate_scenario


def tiny(**over) -> RunConfig:
    raw = {
        "seed": 3,
        "suite": {"common_per_class": 2, "adapt_per_class": 3, "eval_per_class": 1, "eval_classes": ["H"],
                  "stages": ["H"]},
        "encoder": {"epochs": 2, "batch_size": 10},
        "dbscan": {"eps": 0.3, "min_pts": 2},
        "grid": {"lo": [0.0], "s0": [1.0, 2.0], "a_m": [1.5], "b": [2.5], "th": [1.2]},
        "tune": {"max_scenarios_per_cluster": 2},
        "sim": {"horizon": 3.0, "dt": 0.1, "reasoner_period": 15.0, "ttc_threshold": 1.0},
    }
    for k, v in over.items():
        raw[k] = {**raw[k], **v} if isinstance(v, dict) and isinstance(raw.get(k), dict) else v
    return RunConfig.from_dict(raw)


@pytest.fixture(scope="module")
def art():
    return prepare(tiny())


def test_config_roundtrip_and_hash(tmp_path):
    cfg = tiny()
    path = tmp_path / "run.yaml"
    path.write_text(dump_config(cfg))
    back = load_config(path)
    assert back.to_dict() == cfg.to_dict() and back.hash() == cfg.hash()
    back.paths.out = "elsewhere"
    assert back.hash() == cfg.hash()
    back.seed = 4
    assert back.hash() != cfg.hash()


@pytest.mark.parametrize("raw", [
    {"schema_version": 99},
    {"bogus": 1},
    {"seed": "now"},
    {"dbscan": {"eps": 5.0, "min_pts": 2}},
    {"encoder": {"width": 3}},
    {"paths": {"scenarios": "/does/not/exist"}},
])
def test_config_errors(raw):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(raw)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.yaml")


def test_suite_roles_disjoint():
    s = build_suite(tiny())
    ids = [entry_id(x) for x in s.train + s.eval + s.adapt["H"]]
    assert len(ids) == len(set(ids))
    assert {x.label.code for x in s.eval} == {"H"}
    assert all(not x.label.is_long_tail for x in s.train)


def test_adapt_nothing_changes_nothing(art):
    bank = copy_bank(art.base_bank)
    before = bank.to_bytes()
    cfg = tiny()
    adapt(bank, [], art.encoder, cfg.param_grid(), cfg.sim_config(), art.library, 2, art.cache)
    assert bank.to_bytes() == before


def test_adapt_tunes_new_long_tail_clusters(art, tmp_path):
    cfg = tiny()
    bank = copy_bank(art.base_bank)
    fp = art.encoder.fingerprint()
    before = {cid: c.members for cid, c in bank.clusters().items()}
    scenarios = [generate_scenario("high_magnitude_speed", 500 + i) for i in range(10)]
    snap = tmp_path / "memory.bin"
    adapt(bank, scenarios, art.encoder, cfg.param_grid(), cfg.sim_config(), art.library, 2, art.cache,
          snapshot=snap)
    assert art.encoder.fingerprint() == fp
    grown = [cid for cid, c in bank.clusters().items() if c.members != before.get(cid)]
    assert grown and all(bank.clusters()[cid].best_params is not None for cid in grown)
    assert not bank.stale
    assert snap.read_bytes() == bank.to_bytes()
    # already-inserted ids are skipped, so a second pass is a no-op
    again = copy_bank(bank)
    adapt(again, scenarios, art.encoder, cfg.param_grid(), cfg.sim_config(), art.library, 2, art.cache)
    assert again.to_bytes() == bank.to_bytes()


def test_single_scenario_single_stage(art, tmp_path):
    cfg = tiny(suite={"stages": []})
    report = run_benchmark(cfg, art, tmp_path)
    (row,) = report["stages"]
    assert row["stage"] == "base" and row["episodes"] == report["episode_count"] == 1
    (rec,) = [json.loads(p.read_text()) for p in (tmp_path / "benchmark" / "base").glob("*.json")]
    assert row["total"] == rec["composite"] == row["per_class"]["H"]
    assert report["config_hash"] == cfg.hash()


def test_report_rebuilds_from_traces(art, tmp_path):
    cfg = tiny()
    report = run_benchmark(cfg, art, tmp_path)
    assert [r["stage"] for r in report["stages"]] == ["base", "+H"]
    assert report_bytes(report_from_traces(cfg, tmp_path)) == (tmp_path / "report.json").read_bytes()


def test_ablation_configurations(art, tmp_path):
    cfg = tiny()
    reports = ablate(cfg, art, tmp_path)
    assert set(reports) == {"full", "no_llm", "no_memory", "no_encoder"}
    params = {tuple(json.loads(p.read_text())["params"]) for p in (tmp_path / "no_memory").rglob("*.json")}
    assert len(params) == 1
    assert reports["full"]["stages"][0]["total"] == reports["no_llm"]["stages"][0]["total"]
    for name in reports:
        assert (tmp_path / f"ablation_{name}.json").exists()


def test_random_projection_is_seeded(art):
    scen = art.suite.eval
    a = RandomProjectionEncoder(seed=1).transform(scen)
    assert np.array_equal(a, RandomProjectionEncoder(seed=1).transform(scen))
    assert not np.array_equal(a, RandomProjectionEncoder(seed=2).transform(scen))
    assert np.allclose(np.linalg.norm(a, axis=1), 1.0)
    cfg = tiny()
    b1 = build_memory(cfg, RandomProjectionEncoder(seed=1), art.suite.train, art.library, art.cache)
    b2 = build_memory(cfg, RandomProjectionEncoder(seed=1), art.suite.train, art.library, art.cache)
    assert b1.to_bytes() == b2.to_bytes()


def test_suite_from_directory_matches_generated(tmp_path):
    from lifelong_planner.scenario import write_scenario

    generated = build_suite(tiny())
    for s in generated.train + generated.eval + generated.adapt["H"]:
        write_scenario(tmp_path / s.label.name / f"{s.seed}.scn", s)
    loaded = build_suite(tiny(paths={"scenarios": str(tmp_path)}))
    for role in ("train", "eval"):
        assert [s.id for s in getattr(loaded, role)] == [s.id for s in getattr(generated, role)]
    assert [s.id for s in loaded.adapt["H"]] == [s.id for s in generated.adapt["H"]]
    assert all(a == b for a, b in zip(loaded.eval, generated.eval))
