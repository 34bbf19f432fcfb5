"""Accuracy, shot-ledger and tree-shape metrics over run records."""

from __future__ import annotations

from typing import Iterable, Optional, Sequence

from .record import RunRecord, TaskResult


class MetricsError(ValueError):
    pass


class ZeroGroundEnergy(MetricsError):
    pass


class MissingReference(MetricsError):
    pass


class LedgerMismatch(MetricsError):
    pass


class ThresholdNotMet(MetricsError):
    def __init__(self, which: str, threshold: float):
        super().__init__(f"{which} run never reached fidelity {threshold}")
        self.which = which
        self.threshold = threshold


def fidelity(E: float, E_gs: float) -> tuple[float, float]:
    """Relative error ``(E_gs - E) / E_gs`` and fidelity ``1 - error``."""
    if E_gs == 0:
        raise ZeroGroundEnergy("fidelity undefined for zero ground energy")
    eps = (E_gs - E) / E_gs
    return eps, 1.0 - eps


def meets_threshold(results: Sequence[TaskResult], T: float) -> bool:
    if not results:
        raise MissingReference("empty result set")
    for r in results:
        if r.fidelity is None:
            raise MissingReference(f"task {r.task_id} has no reference energy")
    return all(r.fidelity >= T for r in results)


def expected_node_shots(record: RunRecord, node) -> int:
    return node.evaluations * record.shots_per_term * node.n_measured_terms


def shot_accounting(record: RunRecord) -> int:
    """Recompute total shots from per-cluster evaluation counts and check the ledger.

    Per cluster: (iterations x evals-per-iteration + calibration probes)
    x shots-per-term x measured non-identity terms.
    """
    total = 0
    spsa = record.config.get("optimizer", {}).get("kind", "spsa") == "spsa"
    for node in record.nodes:
        if spsa:
            evals = node.iterations * record.evals_per_iter + node.calibration_evals
            if evals != node.evaluations:
                raise LedgerMismatch(f"cluster {node.id}: {node.evaluations} evaluations logged, {evals} expected")
        shots = expected_node_shots(record, node)
        if shots != node.shots_used:
            raise LedgerMismatch(f"cluster {node.id}: ledger {node.shots_used}, recomputed {shots}")
        total += shots
    if total != record.total_shots:
        raise LedgerMismatch(f"ledger total {record.total_shots}, recomputed {total}")
    return total


def overall_shots(iterations: int, n_terms: int, shots_per_term: int = 4096, evals_per_iter: int = 2) -> int:
    return iterations * evals_per_iter * shots_per_term * n_terms


def tree_critical_depth(record: RunRecord) -> int:
    """Edge count of the longest root-to-leaf path."""
    parent = {n.id: n.parent for n in record.nodes}
    depth = {}

    def d(cid):
        if cid not in depth:
            p = parent[cid]
            depth[cid] = 0 if p is None else d(p) + 1
        return depth[cid]

    return max((d(c) for c in parent), default=0)


def shots_to_threshold(record: RunRecord, T: float) -> Optional[int]:
    """Cumulative shots at the first round whose exact-energy fidelities all reach ``T``."""
    for shots, f in zip(record.trace_shots, record.trace_min_fidelity):
        if f is not None and f >= T:
            return shots
    return None


def savings_ratio(baseline: RunRecord, tree: RunRecord, T: float) -> float:
    b = shots_to_threshold(baseline, T)
    if b is None:
        raise ThresholdNotMet("baseline", T)
    t = shots_to_threshold(tree, T)
    if t is None:
        raise ThresholdNotMet("tree", T)
    return b / t


def fidelity_curve(record: RunRecord, thresholds: Iterable[float]) -> list[tuple[float, Optional[int]]]:
    return [(T, shots_to_threshold(record, T)) for T in thresholds]
