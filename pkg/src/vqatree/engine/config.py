"""Run configuration."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

from .monitor import MonitorConfig

MODES = ("tree", "baseline", "forced-split")


class ConfigError(ValueError):
    pass


@dataclass
class AnsatzConfig:
    kind: str = "hea"  # "hea" | "maqaoa"
    layers: int = 2
    p: int = 1


@dataclass
class OptimizerConfig:
    kind: str = "spsa"  # "spsa" | "simplex"
    calibrate: bool = True
    target_first_step: float = 0.01  # per-parameter; circuits with many angles need small first steps
    calibration_probes: int = 5
    a: float = 1.0
    A: Optional[float] = None  # None: 0.1 x planned iterations
    c: float = 0.1
    alpha: float = 0.602
    gamma: float = 0.101
    initial_step: float = 0.2  # simplex edge length


@dataclass
class InitConfig:
    kind: str = "zeros"  # "zeros" | "uniform" | "qaoa"
    scale: float = 0.1
    gamma: float = 0.4
    beta: float = 0.3927


@dataclass
class RunConfig:
    budget: float
    shots_per_term: int = 4096
    mode: str = "tree"
    seed: int = 0
    ansatz: AnsatzConfig = field(default_factory=AnsatzConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    monitor: MonitorConfig = field(default_factory=MonitorConfig)
    init: InitConfig = field(default_factory=InitConfig)
    forced_split_fraction: Optional[float] = None
    baseline_budget: str = "strict"  # "strict" | "converge"
    history_stride: int = 1
    threads: int = 1
    trace: bool = True

    def validate(self):
        if not self.budget > 0:
            raise ConfigError("budget must be positive")
        if self.shots_per_term < 1:
            raise ConfigError("shots_per_term must be >= 1")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.mode == "forced-split":
            f = self.forced_split_fraction
            if f is None or not 0 < f < 1:
                raise ConfigError("forced-split mode needs 0 < forced_split_fraction < 1")
        if self.baseline_budget not in ("strict", "converge"):
            raise ConfigError("baseline_budget must be 'strict' or 'converge'")
        if self.optimizer.kind not in ("spsa", "simplex"):
            raise ConfigError(f"unknown optimizer {self.optimizer.kind!r}")
        if self.ansatz.kind not in ("hea", "maqaoa"):
            raise ConfigError(f"unknown ansatz {self.ansatz.kind!r}")
        if self.init.kind not in ("zeros", "uniform", "qaoa"):
            raise ConfigError(f"unknown init {self.init.kind!r}")
        if self.history_stride < 1 or self.threads < 1:
            raise ConfigError("history_stride and threads must be >= 1")
        try:
            self.monitor.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def evals_per_iter(self) -> int:
        return 2 if self.optimizer.kind == "spsa" else 1

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        sub = {
            "ansatz": AnsatzConfig,
            "optimizer": OptimizerConfig,
            "monitor": MonitorConfig,
            "init": InitConfig,
        }
        for key, typ in sub.items():
            if key in d and isinstance(d[key], dict):
                d[key] = typ(**d[key])
        return cls(**d)
