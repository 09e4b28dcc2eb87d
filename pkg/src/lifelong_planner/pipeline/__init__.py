"""Configuration and end-to-end lifelong-learning pipelines."""
from .config import SCHEMA_VERSION, ConfigError, RunConfig, dump_config, load_config
from .lifelong import (
    Artifacts,
    EpisodeRecord,
    ablate,
    adapt,
    augment_bank,
    build_memory,
    build_suite,
    copy_bank,
    entry_id,
    evaluate,
    insert_scenarios,
    llm_config,
    lifelong_stages,
    make_report,
    prepare,
    report_bytes,
    report_from_traces,
    run_benchmark,
    stage_names,
    stage_row,
    suite_seeds,
    train_scene_encoder,
    tune_clusters,
)
