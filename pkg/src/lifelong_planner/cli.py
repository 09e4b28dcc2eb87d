"""Command-line entry point: ``lifelong-planner <command> [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

log = logging.getLogger("lifelong_planner")


def _config(args):
    from .pipeline import load_config

    cfg = load_config(args.config, seed=args.seed)
    if args.no_llm:
        cfg.ablation.no_llm = True
    if args.log_prompts:
        cfg.reasoner.log_prompts = True
    if args.out is not None:
        cfg.paths.out = args.out
    return cfg


def _out(cfg) -> Path:
    out = cfg.resolve(cfg.paths.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _read_dir(path) -> list:
    from .scenario import read_scenario

    files = sorted(Path(path).rglob("*.scn"))
    if not files:
        raise SystemExit(f"no .scn files in {path}")
    return [read_scenario(f) for f in files]


def _default_path(cfg, configured: str, name: str) -> Path:
    """The configured path if it exists, else ``<out>/<name>`` where the commands write it."""
    path = cfg.resolve(configured)
    return path if path.is_file() else cfg.resolve(cfg.paths.out) / name


def _load_encoder(cfg, path=None):
    from .encoder import SceneEncoder

    path = Path(path) if path else _default_path(cfg, cfg.paths.checkpoint, "encoder.ckpt")
    if not path.is_file():
        raise SystemExit(f"encoder checkpoint {path} not found; run train-encoder first")
    return SceneEncoder.load(path)


def _load_bank(cfg, path=None):
    from .memory import MemoryBank

    path = Path(path) if path else _default_path(cfg, cfg.paths.memory, "memory.bin")
    if not path.is_file():
        raise SystemExit(f"memory snapshot {path} not found; run build-memory first")
    return MemoryBank.load(path)


# --------------------------------------------------------------------------- commands

def cmd_gen(args, cfg):
    from .pipeline import build_suite
    from .scenario import generate_scenario, write_scenario

    dest = Path(args.dir) if args.dir else _out(cfg) / "scenarios"
    if args.cls:
        scenarios = [generate_scenario(args.cls, args.start_seed + i) for i in range(args.n)]
    else:
        suite = build_suite(cfg)
        scenarios = suite.train + [s for g in suite.adapt.values() for s in g] + suite.eval
    for s in scenarios:
        write_scenario(dest / s.label.name / f"{s.seed}.scn", s)
    print(f"wrote {len(scenarios)} scenarios to {dest}")


def cmd_train_encoder(args, cfg):
    from .pipeline import build_suite, train_scene_encoder

    if args.epochs is not None:
        cfg.encoder.epochs = args.epochs
    scenarios = _read_dir(args.scenarios) if args.scenarios else build_suite(cfg).train
    scenarios = [s for s in scenarios if not s.label.is_long_tail]
    out = _out(cfg)
    enc = train_scene_encoder(cfg, scenarios, callback=lambda e, loss: log.info("epoch %d loss %.5f", e, loss))
    ckpt = Path(args.checkpoint) if args.checkpoint else out / "encoder.ckpt"
    enc.save(ckpt)
    (out / "training_curve.json").write_text(json.dumps({"loss": enc.history_}, indent=2))
    Z = enc.transform(scenarios)
    np.savez(out / "embeddings.npz", z=Z, labels=np.array([s.label.id for s in scenarios]),
             classes=np.array([s.label.name for s in scenarios]), seeds=np.array([s.seed for s in scenarios]),
             scenario_ids=np.array([s.id for s in scenarios]))
    acc = float(np.mean(enc.predict(scenarios) == np.array([s.label.id for s in scenarios])))
    print(f"encoder -> {ckpt} (train accuracy {acc:.3f}, final loss {enc.history_[-1]:.4f})")


def cmd_build_memory(args, cfg):
    from .memory import MemoryBank
    from .pipeline import augment_bank, build_suite, insert_scenarios, tune_clusters

    if args.eps is not None:
        cfg.dbscan["eps"] = args.eps
    if args.min_pts is not None:
        cfg.dbscan["min_pts"] = args.min_pts
    if args.augment_sigma is not None:
        cfg.augment.sigma = args.augment_sigma
    if args.augment_n is not None:
        cfg.augment.n = args.augment_n
    cfg.validate()
    bank = MemoryBank(cfg.dbscan_params())
    suite = build_suite(cfg)
    need_encoder = not args.from_dir or cfg.augment.n > 0
    encoder = _load_encoder(cfg, args.encoder) if need_encoder else None
    if args.from_dir:
        data = np.load(Path(args.from_dir) / "embeddings.npz")
        for z, lab, name, seed, sid in zip(data["z"], data["labels"], data["classes"], data["seeds"],
                                           data["scenario_ids"]):
            meta = {"scenario": str(sid), "class": str(name), "seed": int(seed)}
            bank.insert(int(lab) * 100_000_000 + int(seed), z, int(lab), meta)
    else:
        insert_scenarios(bank, encoder, suite.train)
    if cfg.augment.n > 0:
        augment_bank(bank, encoder.prototype_matrix(), encoder.classes_, cfg.augment.sigma, cfg.augment.n, cfg.seed)
    if not args.no_tune:
        tune_clusters(bank, suite.library(), cfg.param_grid(), cfg.sim_config(), cfg.tune.max_scenarios_per_cluster,
                      n_jobs=cfg.tune.n_jobs)
    dest = Path(args.memory_out) if args.memory_out else _out(cfg) / "memory.bin"
    bank.save(dest)
    print(f"memory -> {dest}: {len(bank)} entries, {len(bank.cluster_ids())} clusters, "
          f"{len(bank.tuned_clusters())} tuned")


def cmd_adapt(args, cfg):
    from .pipeline import adapt, build_suite, suite_seeds
    from .scenario import generate_scenario

    encoder = _load_encoder(cfg, args.encoder)
    bank = _load_bank(cfg, args.memory)
    if args.scenarios:
        scenarios = _read_dir(args.scenarios)
    elif args.cls:
        scenarios = [generate_scenario(args.cls, s) for s in suite_seeds(cfg, "adapt", cfg.suite.adapt_per_class)]
    else:
        raise SystemExit("adapt needs --scenarios DIR or --class CODE")
    before = encoder.fingerprint()
    dest = Path(args.memory_out or args.memory or _default_path(cfg, cfg.paths.memory, "memory.bin"))
    adapt(bank, scenarios, encoder, cfg.param_grid(), cfg.sim_config(), build_suite(cfg).library(),
          cfg.tune.max_scenarios_per_cluster, n_jobs=cfg.tune.n_jobs, snapshot=dest)
    if encoder.fingerprint() != before:
        raise SystemExit("encoder weights changed during adapt")
    bank.save(dest)
    print(f"memory -> {dest}: {len(bank)} entries, {len(bank.cluster_ids())} clusters")


def cmd_tune(args, cfg):
    from .pipeline import build_suite, tune_clusters
    from .planner import ParamGrid, PlannerParams

    bank = _load_bank(cfg, args.memory)
    grid = cfg.param_grid()
    if args.grid:
        grid = ParamGrid([PlannerParams.from_dict(r) for r in json.loads(Path(args.grid).read_text())])
    clusters = bank.cluster_ids() if args.cluster == "all" else [int(args.cluster)]
    missing = set(clusters) - set(bank.cluster_ids())
    if missing:
        raise SystemExit(f"unknown cluster ids: {sorted(missing)}")
    tuned = tune_clusters(bank, build_suite(cfg).library(), grid, cfg.sim_config(),
                          cfg.tune.max_scenarios_per_cluster, clusters=clusters, n_jobs=cfg.tune.n_jobs)
    payload = {str(cid): {"params": p.to_dict(), "score": s} for cid, (p, s) in sorted(tuned.items())}
    dest = Path(args.tuned_out) if args.tuned_out else _out(cfg) / "tuned.json"
    dest.write_text(json.dumps(payload, indent=2, sort_keys=True))
    if args.memory:
        bank.save(args.memory)
    print(f"tuned {len(tuned)} clusters -> {dest}")


def cmd_simulate(args, cfg):
    from .pipeline import evaluate, llm_config, stage_row
    from .reasoner import MemoryReasoner

    scenarios = _read_dir(args.scenarios)
    encoder = _load_encoder(cfg, args.encoder)
    bank = _load_bank(cfg, args.memory)
    trace_dir = _out(cfg) / "episodes"
    reasoner = MemoryReasoner(encoder, bank, llm_config(cfg, log_dir=trace_dir), cfg.reasoner.k_shots,
                              use_memory=not cfg.ablation.no_memory)
    records = evaluate(scenarios, reasoner, cfg.sim_config(), trace_dir)
    row = stage_row("simulate", records)
    print(json.dumps(row, indent=2, sort_keys=True))


def _artifacts(cfg):
    """Reuse checkpoint and memory when present; otherwise build and save them."""
    from .encoder import SceneEncoder
    from .memory import MemoryBank
    from .pipeline import prepare

    ckpt = _default_path(cfg, cfg.paths.checkpoint, "encoder.ckpt")
    mem = _default_path(cfg, cfg.paths.memory, "memory.bin")
    encoder = SceneEncoder.load(ckpt) if ckpt.is_file() else None
    bank = MemoryBank.load(mem) if (encoder is not None and mem.is_file()) else None
    art = prepare(cfg, encoder, bank, callback=lambda e, loss: log.info("epoch %d loss %.5f", e, loss))
    out = _out(cfg)
    if encoder is None:
        art.encoder.save(out / "encoder.ckpt")
    if bank is None:
        art.base_bank.save(out / "memory.bin")
    return art


def cmd_benchmark(args, cfg):
    from .pipeline import run_benchmark

    out = _out(cfg)
    report = run_benchmark(cfg, _artifacts(cfg), out_dir=out)
    _print_report(report)
    print(f"report -> {out / 'report.json'}")


def cmd_ablate(args, cfg):
    from .pipeline import ablate

    out = _out(cfg)
    for name, report in ablate(cfg, _artifacts(cfg), out_dir=out).items():
        print(f"{name:>10s}  total {report['stages'][0]['total']:.2f}")


def cmd_report(args, cfg):
    from .pipeline import report_bytes, report_from_traces

    root = Path(args.traces) if args.traces else _out(cfg)
    report = report_from_traces(cfg, root)
    data = report_bytes(report)
    if args.check:
        existing = (root / "report.json").read_bytes()
        if existing != data:
            raise SystemExit("report.json differs from the report rebuilt from traces")
        print("report.json matches the traces")
    _print_report(report)


def _print_report(report):
    rows = report["stages"]
    classes = sorted({c for r in rows for c in r["per_class"]})
    print(f"{'stage':<14}" + "".join(f"{c:>8}" for c in classes) + f"{'total':>9}")
    for r in rows:
        print(f"{r['stage']:<14}" + "".join(f"{r['per_class'].get(c, float('nan')):8.2f}" for c in classes)
              + f"{r['total']:9.2f}")


# --------------------------------------------------------------------------- parser

def _global_flags(p, default=None, with_out=True):
    p.add_argument("--config", default=default, help="YAML run configuration")
    p.add_argument("--seed", type=int, default=default, help="override the config seed")
    if with_out:
        p.add_argument("--out", default=default, help="output directory (overrides paths.out)")
    flag = {} if default is None else {"default": default}
    p.add_argument("--no-llm", action="store_true", help="always decide by nearest tuned prototype", **flag)
    p.add_argument("--log-prompts", action="store_true", help="write LLM request/response bodies next to traces",
                   **flag)
    p.add_argument("-v", "--verbose", action="store_true", **flag)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lifelong-planner", description=__doc__)
    _global_flags(p)
    # the same flags are accepted after the command; SUPPRESS keeps unset ones from clobbering
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, argparse.SUPPRESS)
    common_no_out = argparse.ArgumentParser(add_help=False)
    _global_flags(common_no_out, argparse.SUPPRESS, with_out=False)
    sub = p.add_subparsers(dest="command", required=True)

    def command(name, help, with_out=True):
        return sub.add_parser(name, help=help, parents=[common if with_out else common_no_out])

    g = command("gen", "write scenarios (.scn); the whole seeded suite by default")
    g.add_argument("--class", dest="cls", help="one class (name or H/N/C/T)")
    g.add_argument("--n", type=int, default=10)
    g.add_argument("--start-seed", type=int, default=0)
    g.add_argument("--dir", help="destination directory (default <out>/scenarios)")
    g.set_defaults(func=cmd_gen)

    t = command("train-encoder", "train on common classes; writes encoder.ckpt, curve, embeddings")
    t.add_argument("--scenarios", help="directory of .scn files (default: generated suite)")
    t.add_argument("--epochs", type=int)
    t.add_argument("--checkpoint", help="checkpoint path (default <out>/encoder.ckpt)")
    t.set_defaults(func=cmd_train_encoder)

    b = command("build-memory", "embed common scenarios, cluster and tune")
    b.add_argument("--encoder", help="encoder checkpoint")
    b.add_argument("--from", dest="from_dir", help="directory holding embeddings.npz from train-encoder")
    b.add_argument("--eps", type=float)
    b.add_argument("--min-pts", type=int)
    b.add_argument("--augment-sigma", type=float, help="std of synthetic samples around class prototypes")
    b.add_argument("--augment-n", type=int, help="synthetic samples per class")
    b.add_argument("--no-tune", action="store_true")
    b.add_argument("--memory-out", help="snapshot path (default <out>/memory.bin)")
    b.set_defaults(func=cmd_build_memory)

    a = command("adapt", "insert new scenarios into memory and re-tune touched clusters")
    a.add_argument("--memory", help="memory snapshot to update")
    a.add_argument("--encoder")
    a.add_argument("--scenarios", help="directory of .scn files")
    a.add_argument("--class", dest="cls", help="adapt on the suite's scenarios of this long-tail code")
    a.add_argument("--memory-out")
    a.set_defaults(func=cmd_adapt)

    u = command("tune", "grid-search planner parameters for memory clusters", with_out=False)
    u.add_argument("--memory")
    u.add_argument("--grid", help="JSON list of parameter records")
    u.add_argument("--cluster", default="all", help="cluster id or 'all'")
    u.add_argument("--out", dest="tuned_out", help="tuned.json path")
    u.set_defaults(func=cmd_tune)

    s = command("simulate", "closed-loop episodes with memory-selected parameters")
    s.add_argument("--scenarios", required=True)
    s.add_argument("--memory")
    s.add_argument("--encoder")
    s.set_defaults(func=cmd_simulate)

    command("benchmark", "evaluate every memory stage; writes report.json and traces") \
        .set_defaults(func=cmd_benchmark)
    command("ablate", "no_llm / no_memory / no_encoder / full reports").set_defaults(func=cmd_ablate)

    r = command("report", "rebuild the benchmark report from per-episode records")
    r.add_argument("--traces", help="benchmark output directory (default <out>)")
    r.add_argument("--check", action="store_true", help="fail unless report.json matches byte for byte")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    from .pipeline import ConfigError

    try:
        cfg = _config(args)
        args.func(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
