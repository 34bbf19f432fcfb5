"""Run output: cluster tree, histories, per-task results, shot ledger, and (de)serialization."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional


@dataclass
class TaskResult:
    task: int
    task_id: str
    energy: float  # recombined from stored estimates
    cluster: int
    exact_energy: Optional[float] = None
    reference_energy: Optional[float] = None
    fidelity: Optional[float] = None
    error: Optional[float] = None


@dataclass
class ClusterNode:
    id: int
    parent: Optional[int]
    members: list[int]
    created_at_iter: int
    shots_used: int
    status: str
    iterations: int
    evaluations: int
    calibration_evals: int
    n_measured_terms: int
    retired_at_iter: Optional[int] = None
    theta: list[float] = field(default_factory=list)
    last_estimates: list[Optional[float]] = field(default_factory=list)
    events: list[str] = field(default_factory=list)


@dataclass
class RunRecord:
    config: dict
    mode: str
    task_ids: list[str]
    n_qubits: int
    superset: list[str]
    shots_per_term: int
    evals_per_iter: int
    budget: float
    nodes: list[ClusterNode]
    results: list[TaskResult]
    total_shots: int
    rounds: int
    # per-round trace: cumulative shots and the minimum fidelity over tasks (exact energies)
    trace_shots: list[int] = field(default_factory=list)
    trace_min_fidelity: list[Optional[float]] = field(default_factory=list)
    trace_energies: list[list[float]] = field(default_factory=list)
    trace_stride: int = 1
    histories: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    source_config: Optional[dict] = None  # config file contents, verbatim, when run from the CLI

    def node(self, cid: int) -> ClusterNode:
        for n in self.nodes:
            if n.id == cid:
                return n
        raise KeyError(cid)

    def final_nodes(self) -> list[ClusterNode]:
        return [n for n in self.nodes if n.status == "final"]

    @property
    def per_cluster_shots(self) -> dict[int, int]:
        return {n.id: n.shots_used for n in self.nodes}

    def to_dict(self) -> dict:
        return _clean(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1, allow_nan=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        d = dict(d)
        d["nodes"] = [ClusterNode(**n) for n in d["nodes"]]
        d["results"] = [TaskResult(**r) for r in d["results"]]
        return cls(**d)

    @classmethod
    def load(cls, path) -> "RunRecord":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def save(self, path) -> None:
        with open(path, "w") as f:
            f.write(self.to_json())

    def write_histories_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["cluster", "iteration", "round", "series", "loss"])
            for cid in sorted(self.histories, key=int):
                h = self.histories[cid]
                for j, (it, rnd) in enumerate(zip(h["iteration"], h["round"])):
                    w.writerow([cid, it, rnd, "mixed", repr(h["mixed"][j])])
                    for tid, series in h["tasks"].items():
                        w.writerow([cid, it, rnd, tid, repr(series[j])])


def _clean(obj):
    """Replace non-finite floats with ``None`` so the JSON stays standard."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj
