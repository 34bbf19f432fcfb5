"""Global controller: round-robin stepping of active clusters under a shot budget."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

import numpy as np

from ..bench import graph_from_cost
from ..clustering import distance_matrix, rbf_kernel
from ..pauli import Hamiltonian, PaddedTaskSet, build_padded_set, pauli_table
from ..pauli import EmptyTaskList, QubitCountMismatch
from ..statevec import HeaSpec, MaQaoaSpec, build_hea, build_maqaoa
from .cluster import (
    TAG_INIT,
    ClusterState,
    RunContext,
    cluster_step,
    new_cluster,
    recombine,
    stream,
)
from .config import ConfigError, RunConfig
from .monitor import slope
from .metrics import fidelity, shot_accounting, tree_critical_depth
from .record import ClusterNode, RunRecord, TaskResult

log = logging.getLogger(__name__)


class EmptyTaskSet(EmptyTaskList):
    pass


class TaskIngestionError(ValueError):
    pass


class MissingEstimates(ValueError):
    pass


# -- setup ----------------------------------------------------------------------------


def _check_tasks(tasks: Sequence[Hamiltonian]) -> None:
    if not tasks:
        raise EmptyTaskSet("no tasks")
    n = tasks[0].n_qubits
    for h in tasks:
        if h.n_qubits != n:
            raise QubitCountMismatch(f"tasks mix {n} and {h.n_qubits} qubits")
        if h.non_identity_count() == 0:
            raise TaskIngestionError("every task needs at least one non-identity term")


def make_builder(config: RunConfig, padded: PaddedTaskSet):
    a = config.ansatz
    if a.kind == "hea":
        spec = HeaSpec(padded.n_qubits, a.layers)
        return spec, lambda theta: build_hea(spec, theta)
    mean = Hamiltonian(
        padded.n_qubits,
        tuple((p, float(c)) for p, c in zip(padded.superset, padded.coeff_vectors.mean(axis=0)) if c != 0),
    )
    try:
        graph = graph_from_cost(mean)
    except ValueError as exc:
        raise ConfigError(f"ma-QAOA ansatz needs MaxCut tasks: {exc}") from exc
    spec = MaQaoaSpec(graph.n_nodes, graph.edges, a.p)
    return spec, lambda theta: build_maqaoa(spec, theta)


def initial_params(config: RunConfig, spec) -> np.ndarray:
    init = config.init
    n = spec.n_params
    if init.kind == "zeros":
        return np.zeros(n)
    if init.kind == "uniform":
        return stream(config.seed, TAG_INIT).uniform(-init.scale, init.scale, n)
    if not isinstance(spec, MaQaoaSpec):
        raise ConfigError("qaoa init requires the ma-QAOA ansatz")
    m = len(spec.edges)
    layer = np.concatenate([np.full(m, init.gamma), np.full(spec.n_nodes, init.beta)])
    return np.tile(layer, spec.p)


def cost_per_iteration(config: RunConfig, padded: PaddedTaskSet, members: Sequence[int]) -> int:
    rows = padded.coeff_vectors[list(members)]
    n_terms = int(((rows != 0).any(axis=0) & ~padded.identity_mask()).sum())
    return config.evals_per_iter * config.shots_per_term * n_terms


def forced_split_round(fraction: float, planned: int) -> int:
    """Round at which one split lands at ``fraction`` of all rounds run.

    After the split two clusters share the budget, so the run lasts
    ``r + (planned - r) / 2`` rounds; solving ``r = f * total`` gives this.
    """
    return max(1, int(round(fraction * planned / (2.0 - fraction))))


def _context(padded: PaddedTaskSet, config: RunConfig, planned: int) -> tuple[RunContext, object]:
    table = pauli_table(padded.superset)
    D = distance_matrix(padded) if padded.n_tasks >= 2 else np.zeros((1, 1))
    S = rbf_kernel(D).values if padded.n_tasks >= 2 else np.ones((1, 1))
    spec, build = make_builder(config, padded)
    monitor = config.monitor.resolve(planned)
    ctx = RunContext(
        padded=padded,
        table=table,
        distances=D,
        similarity=S,
        build=build,
        config=config,
        monitor=monitor,
        planned_iterations=planned,
    )
    if config.mode == "forced-split":
        ctx.forced_split_round = forced_split_round(config.forced_split_fraction, planned)
    return ctx, spec


# -- runs ---------------------------------------------------------------------------------


def controller_run(
    tasks: Sequence[Hamiltonian],
    config: RunConfig,
    task_ids: Optional[Sequence[str]] = None,
    reference_energies: Optional[Sequence[Optional[float]]] = None,
) -> RunRecord:
    """Tree-structured joint optimization (``tree`` or ``forced-split`` mode)."""
    config.validate()
    if config.mode == "baseline":
        return baseline_run(tasks, config, task_ids, reference_energies)
    _check_tasks(tasks)
    padded = build_padded_set(tasks, task_ids)
    planned = max(1, int(config.budget // cost_per_iteration(config, padded, range(len(tasks)))))
    ctx, spec = _context(padded, config, planned)
    theta0 = initial_params(config, spec)

    clusters: dict[int, ClusterState] = {0: new_cluster(ctx, 0, range(len(tasks)), theta0)}
    active = [0]
    next_id = 1
    tracer = _Tracer(ctx, reference_energies, shared=True)
    s_total = 0
    rnd = 0
    with ThreadPoolExecutor(max_workers=config.threads) as pool:
        while s_total < config.budget and active:
            outcomes = list(pool.map(lambda c: cluster_step(ctx, clusters[c], rnd), active))
            rnd += 1
            new_active = []
            for out in sorted(outcomes, key=lambda o: o.cluster_id):
                s_total += out.shots
                parent = clusters[out.cluster_id]
                if out.split is None:
                    new_active.append(parent.id)
                    continue
                parent.status = "retired"
                parent.retired_at_iter = rnd
                for group in (out.split.group_a, out.split.group_b):
                    child = new_cluster(ctx, next_id, group, parent.theta.copy(), parent.id, rnd)
                    child.opt_state = parent.opt_state.inherit()
                    child.opt_state.theta = child.theta.copy()
                    clusters[next_id] = child
                    new_active.append(next_id)
                    next_id += 1
            active = sorted(new_active)
            tracer.record(rnd, s_total, [clusters[c] for c in active])
    for c in active:
        clusters[c].status = "final"
    final = [clusters[c] for c in active]
    results = post_process(final, ctx.padded)
    return _finish(ctx, clusters, results, s_total, rnd, tracer, reference_energies)


def baseline_run(
    tasks: Sequence[Hamiltonian],
    config: RunConfig,
    task_ids: Optional[Sequence[str]] = None,
    reference_energies: Optional[Sequence[Optional[float]]] = None,
) -> RunRecord:
    """Independent per-task optimization, each task allotted ``budget / N`` shots."""
    config.validate()
    _check_tasks(tasks)
    N = len(tasks)
    padded = build_padded_set(tasks, task_ids)
    per_task_budget = config.budget / N
    planned = max(1, int(per_task_budget // max(cost_per_iteration(config, padded, [i]) for i in range(N))))
    ctx, spec = _context(padded, config, planned)
    theta0 = initial_params(config, spec)

    clusters = {i: new_cluster(ctx, i, [i], theta0) for i in range(N)}
    active = list(range(N))
    tracer = _Tracer(ctx, reference_energies, shared=False)
    s_total = 0
    rnd = 0
    converge = config.baseline_budget == "converge"
    with ThreadPoolExecutor(max_workers=config.threads) as pool:
        while active:
            if converge and s_total >= config.budget:
                break
            outcomes = list(pool.map(lambda c: cluster_step(ctx, clusters[c], rnd), active))
            rnd += 1
            for out in sorted(outcomes, key=lambda o: o.cluster_id):
                s_total += out.shots
            still = []
            for c in active:
                cl = clusters[c]
                if converge:
                    if not _stagnated(ctx, cl):
                        still.append(c)
                elif cl.shots_used < per_task_budget:
                    still.append(c)
            active = still
            tracer.record(rnd, s_total, list(clusters.values()))
    for cl in clusters.values():
        cl.status = "final"
    results = []
    for i, cl in clusters.items():
        results += post_process([cl], ctx.padded, tasks=[i])
    return _finish(ctx, clusters, results, s_total, rnd, tracer, reference_energies)


def _stagnated(ctx: RunContext, cl: ClusterState) -> bool:
    mon = ctx.monitor
    if cl.iterations <= mon.warmup:
        return False
    return abs(slope(cl.mixed_loss_history, mon.window)) < cl.eps_split


# -- post-processing ---------------------------------------------------------------------------


def post_process(
    final_clusters: Sequence[ClusterState],
    padded: PaddedTaskSet,
    tasks: Optional[Sequence[int]] = None,
) -> list[TaskResult]:
    """Assign each task the final cluster whose stored estimates give it the lowest energy.

    Ties go to the cluster containing the task, then to the lowest cluster id.
    """
    tasks = range(padded.n_tasks) if tasks is None else tasks
    for c in final_clusters:
        if c.last_estimates is None:
            raise MissingEstimates(f"cluster {c.id} has no stored estimates")
    results = []
    for i in tasks:
        row = padded.coeff_vectors[i]
        best = None
        for c in final_clusters:
            e = recombine(row, c.last_estimates)
            if math.isnan(e):
                continue
            key = (e, 0 if i in c.members else 1, c.id)
            if best is None or key < best[0]:
                best = (key, c)
        if best is None:
            raise MissingEstimates(f"no final cluster measured every term of task {i}")
        (energy, _, _), c = best
        results.append(TaskResult(task=int(i), task_id=padded.task_ids[i], energy=float(energy), cluster=c.id))
    return results


# -- reference tracing ------------------------------------------------------------------------


class _Tracer:
    """Exact-energy bookkeeping per round; only active when reference energies are known."""

    def __init__(self, ctx: RunContext, refs, shared: bool):
        self.ctx = ctx
        self.refs = None if refs is None or any(r is None for r in refs) else np.asarray(refs, float)
        self.enabled = ctx.config.trace and self.refs is not None
        self.shared = shared
        self.stride = ctx.config.history_stride
        self.shots: list[int] = []
        self.min_fidelity: list[Optional[float]] = []
        self.energies: list[list[float]] = []

    def exact_energies(self, clusters: Sequence[ClusterState]) -> np.ndarray:
        rows = self.ctx.padded.coeff_vectors
        table = self.ctx.table
        ident = table.identity
        best = np.full(len(rows), np.inf)
        for c in clusters:
            vals = np.ones(len(table))
            nz = np.flatnonzero(~ident)
            vals[nz] = table.expectations(self.ctx.build(c.theta).amplitudes, nz)
            targets = range(len(rows)) if self.shared else c.members
            for i in targets:
                best[i] = min(best[i], float(rows[i] @ vals))
        return best

    def record(self, rnd: int, s_total: int, clusters: Sequence[ClusterState]) -> None:
        self.shots.append(int(s_total))
        if not self.enabled:
            self.min_fidelity.append(None)
            return
        E = self.exact_energies(clusters)
        F = 1.0 - (self.refs - E) / self.refs
        self.min_fidelity.append(float(F.min()))
        if (rnd - 1) % self.stride == 0:
            self.energies.append([rnd] + [float(e) for e in E])


def _exact_task_energy(ctx: RunContext, theta: np.ndarray, i: int) -> float:
    table = ctx.table
    vals = np.ones(len(table))
    nz = np.flatnonzero(~table.identity)
    vals[nz] = table.expectations(ctx.build(theta).amplitudes, nz)
    return float(ctx.padded.coeff_vectors[i] @ vals)


def _finish(ctx, clusters, results, s_total, rounds, tracer, refs) -> RunRecord:
    cfg = ctx.config
    for r in results:
        r.exact_energy = _exact_task_energy(ctx, clusters[r.cluster].theta, r.task)
        if refs is not None and refs[r.task] is not None:
            r.reference_energy = float(refs[r.task])
            if r.reference_energy != 0:
                r.error, r.fidelity = fidelity(r.exact_energy, r.reference_energy)
    stride = cfg.history_stride
    nodes, histories = [], {}
    for cid in sorted(clusters):
        c = clusters[cid]
        est = [] if c.last_estimates is None else [None if math.isnan(x) else float(x) for x in c.last_estimates]
        nodes.append(
            ClusterNode(
                id=c.id,
                parent=c.parent,
                members=list(c.members),
                created_at_iter=c.created_at_iter,
                shots_used=int(c.shots_used),
                status=c.status,
                iterations=c.iterations,
                evaluations=c.evaluations,
                calibration_evals=c.calibration_evals,
                n_measured_terms=c.n_measured,
                retired_at_iter=c.retired_at_iter,
                theta=[float(x) for x in c.theta],
                last_estimates=est,
                events=list(c.events),
            )
        )
        keep = list(range(0, c.iterations, stride))
        histories[str(cid)] = {
            "iteration": keep,
            "round": [c.created_at_iter + k + 1 for k in keep],
            "mixed": [float(c.mixed_loss_history[k]) for k in keep],
            "tasks": {
                ctx.padded.task_ids[m]: [float(h[k]) for k in keep]
                for m, h in zip(c.members, c.per_task_loss_history)
            },
        }
    config = cfg.to_dict()
    config.pop("threads")  # execution detail; results do not depend on it
    record = RunRecord(
        config=config,
        mode=cfg.mode,
        task_ids=list(ctx.padded.task_ids),
        n_qubits=ctx.padded.n_qubits,
        superset=[p.ops for p in ctx.padded.superset],
        shots_per_term=cfg.shots_per_term,
        evals_per_iter=cfg.evals_per_iter,
        budget=float(cfg.budget),
        nodes=nodes,
        results=results,
        total_shots=int(s_total),
        rounds=rounds,
        trace_shots=tracer.shots,
        trace_min_fidelity=tracer.min_fidelity,
        trace_energies=tracer.energies,
        trace_stride=stride,
        histories=histories,
    )
    fids = [r.fidelity for r in results if r.fidelity is not None]
    record.metrics = {
        "tree_critical_depth": tree_critical_depth(record),
        "n_final_clusters": len(record.final_nodes()) if cfg.mode != "baseline" else len(results),
        "total_shots": record.total_shots,
        "overshoot": max(0, int(s_total - cfg.budget)),
        "ledger_verified": shot_accounting(record) == record.total_shots,
        "min_fidelity": min(fids) if fids else None,
        "mean_error": float(np.mean([r.error for r in results])) if fids else None,
        "planned_iterations": ctx.planned_iterations,
        "window": ctx.monitor.window,
        "warmup": ctx.monitor.warmup,
    }
    return record


def run(tasks, config: RunConfig, task_ids=None, reference_energies=None) -> RunRecord:
    """Dispatch on ``config.mode``."""
    if config.mode == "baseline":
        return baseline_run(tasks, config, task_ids, reference_energies)
    return controller_run(tasks, config, task_ids, reference_energies)
