"""Run configuration, metrics persistence, and command orchestration."""
from .config import (CONFIG_VERSION, HpnSection, RlSection, RunConfig,
                     RunSection, SimSection, load_config)
from .metrics import (MetricsRecord, SummaryRow, aggregate, bootstrap_ci,
                      read_metrics_csv, write_metrics_csv, write_summary_csv)
from .runner import (cmd_evaluate, cmd_predict_bench, cmd_replay, cmd_train,
                     collect_observation_episodes, evaluate_seed,
                     train_predictor_for_seed)

__all__ = [
    "CONFIG_VERSION", "HpnSection", "RlSection", "RunConfig", "RunSection",
    "SimSection", "load_config",
    "MetricsRecord", "SummaryRow", "aggregate", "bootstrap_ci",
    "read_metrics_csv", "write_metrics_csv", "write_summary_csv",
    "cmd_evaluate", "cmd_predict_bench", "cmd_replay", "cmd_train",
    "collect_observation_episodes", "evaluate_seed",
    "train_predictor_for_seed",
]
