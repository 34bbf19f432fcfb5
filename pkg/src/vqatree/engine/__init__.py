"""Tree-structured joint optimization of related Hamiltonians."""

from .config import AnsatzConfig, ConfigError, InitConfig, OptimizerConfig, RunConfig
from .controller import baseline_run, controller_run, post_process, run
from .metrics import fidelity, savings_ratio, shot_accounting, shots_to_threshold, tree_critical_depth
from .monitor import MonitorConfig
from .record import ClusterNode, RunRecord, TaskResult

__all__ = [
    "AnsatzConfig",
    "ClusterNode",
    "ConfigError",
    "InitConfig",
    "MonitorConfig",
    "OptimizerConfig",
    "RunConfig",
    "RunRecord",
    "TaskResult",
    "baseline_run",
    "controller_run",
    "fidelity",
    "post_process",
    "run",
    "savings_ratio",
    "shot_accounting",
    "shots_to_threshold",
    "tree_critical_depth",
]
