"""A single tree node: joint optimization of a mixed Hamiltonian and its split trigger."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ..clustering import Bipartition, spectral_bipartition
from ..optimizers import Evaluation, SimplexState, SpsaState, calibrate_spsa
from ..pauli import PaddedTaskSet, PauliTable
from ..statevec import StateVector, sample_terms
from .config import RunConfig
from .monitor import MonitorConfig, default_eps_split, slope, split_condition

log = logging.getLogger(__name__)

# stream tags for counter-based RNG keys (seed, tag, cluster, iteration, eval)
TAG_EVAL = 0
TAG_PERTURB = 1
TAG_CALIBRATE = 2
TAG_INIT = 3


class LengthMismatch(ValueError):
    pass


def stream(seed: int, tag: int, *counters: int) -> np.random.Generator:
    return np.random.default_rng([seed, tag, *counters])


def recombine(coeffs: np.ndarray, estimates: np.ndarray) -> np.ndarray | float:
    """``sum_k c_k e_k`` skipping zero coefficients (their estimates may be ``nan``).

    ``coeffs`` may be a single row or a matrix of rows.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape[-1] != estimates.shape[0]:
        raise LengthMismatch(f"{coeffs.shape[-1]} coefficients for {estimates.shape[0]} estimates")
    safe = np.where(np.isnan(estimates), 0.0, estimates)
    out = coeffs @ safe
    missing = np.isnan(estimates)
    if missing.any():
        bad = (coeffs[..., missing] != 0).any(axis=-1)
        out = np.where(bad, np.nan, out)
    return float(out) if np.ndim(out) == 0 else out


def per_task_losses(estimates: np.ndarray, member_rows: np.ndarray) -> np.ndarray:
    """Classical recombination of one estimate vector with each member's padded row."""
    return np.atleast_1d(recombine(np.atleast_2d(member_rows), np.asarray(estimates, dtype=float)))


@dataclass
class RunContext:
    """Immutable per-run data shared by every cluster."""

    padded: PaddedTaskSet
    table: PauliTable
    distances: np.ndarray
    similarity: np.ndarray  # global kernel; clusters use the rows and columns of their members
    build: Callable[[np.ndarray], StateVector]
    config: RunConfig
    monitor: MonitorConfig
    planned_iterations: int
    forced_split_round: Optional[int] = None


@dataclass
class ClusterState:
    id: int
    members: tuple[int, ...]
    mixed: np.ndarray
    measure: np.ndarray
    theta: np.ndarray
    parent: Optional[int] = None
    created_at_iter: int = 0
    opt_state: SpsaState | SimplexState | None = None
    mixed_loss_history: list[float] = field(default_factory=list)
    per_task_loss_history: list[list[float]] = field(default_factory=list)
    last_estimates: Optional[np.ndarray] = None
    shots_used: int = 0
    evaluations: int = 0
    calibration_evals: int = 0
    iterations: int = 0
    status: str = "active"
    splittable: bool = True
    eps_split: Optional[float] = None
    retired_at_iter: Optional[int] = None
    events: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.members:
            raise ValueError("cluster needs at least one member")
        if not self.per_task_loss_history:
            self.per_task_loss_history = [[] for _ in self.members]

    @property
    def n_measured(self) -> int:
        return int(self.measure.sum())


def new_cluster(ctx: RunContext, cid: int, members: Sequence[int], theta, parent=None, created_at_iter=0) -> ClusterState:
    members = tuple(sorted(int(m) for m in members))
    rows = ctx.padded.coeff_vectors[list(members)]
    mixed = rows.mean(axis=0)
    # a term needs measuring if any member uses it; differs from mixed != 0 only on exact cancellation
    measure = (rows != 0).any(axis=0) & ~ctx.table.identity
    return ClusterState(
        id=cid,
        members=members,
        mixed=mixed,
        measure=measure,
        theta=np.array(theta, dtype=float),
        parent=parent,
        created_at_iter=created_at_iter,
        splittable=len(members) >= 2,
    )


def make_oracle(ctx: RunContext, cluster: ClusterState, tag: int, iteration: int):
    counter = itertools.count()
    cfg = ctx.config

    def oracle(theta: np.ndarray) -> Evaluation:
        rng = stream(cfg.seed, tag, cluster.id, iteration, next(counter))
        sampled = sample_terms(ctx.build(theta), ctx.table, cluster.measure, cfg.shots_per_term, rng)
        loss = recombine(cluster.mixed, sampled.estimates)
        return Evaluation(loss, sampled.estimates, sampled.total_shots)

    return oracle


def _init_optimizer(ctx: RunContext, cluster: ClusterState) -> list[Evaluation]:
    opt = ctx.config.optimizer
    seed = ctx.config.seed
    if opt.kind == "simplex":
        cluster.opt_state = SimplexState(cluster.theta, initial_step=opt.initial_step, seed=seed)
        return []
    A = opt.A if opt.A is not None else 0.1 * ctx.planned_iterations
    if not opt.calibrate:
        cluster.opt_state = SpsaState(cluster.theta, a=opt.a, A=A, alpha=opt.alpha, c=opt.c, gamma=opt.gamma, seed=seed)
        return []
    oracle = make_oracle(ctx, cluster, TAG_CALIBRATE, 0)
    state, evals = calibrate_spsa(
        oracle,
        cluster.theta,
        target_first_step=opt.target_first_step,
        planned_iterations=ctx.planned_iterations,
        c=opt.c,
        alpha=opt.alpha,
        gamma=opt.gamma,
        n_probes=opt.calibration_probes,
        rng=stream(seed, TAG_CALIBRATE, cluster.id, 0, 2**31 - 1),
        seed=seed,
    )
    if opt.A is not None:
        state.A = opt.A
    cluster.opt_state = state
    cluster.calibration_evals = len(evals)
    cluster.events.append(f"calibrated a={state.a:.6g}")
    return evals


@dataclass
class StepOutcome:
    cluster_id: int
    shots: int
    split: Optional[Bipartition] = None  # global task indices


def cluster_step(ctx: RunContext, cluster: ClusterState, round_index: int) -> StepOutcome:
    """Advance ``cluster`` by one optimizer step and decide whether it splits."""
    if cluster.status != "active":
        raise ValueError(f"cluster {cluster.id} is {cluster.status}")
    evals = []
    if cluster.opt_state is None:
        evals += _init_optimizer(ctx, cluster)
    it = cluster.iterations
    oracle = make_oracle(ctx, cluster, TAG_EVAL, it)
    report = cluster.opt_state.step(oracle, stream(ctx.config.seed, TAG_PERTURB, cluster.id, it))
    cluster.theta = cluster.opt_state.theta.copy()
    shots = report.shots + sum(e.shots for e in evals)
    cluster.shots_used += shots
    cluster.evaluations += report.n_evals + len(evals)
    cluster.iterations += 1

    est = np.mean([e.estimates for e in report.evaluations], axis=0)
    cluster.last_estimates = est
    mixed_loss = recombine(cluster.mixed, est)
    task_losses = per_task_losses(est, ctx.padded.coeff_vectors[list(cluster.members)])
    cluster.mixed_loss_history.append(mixed_loss)
    for hist, v in zip(cluster.per_task_loss_history, task_losses):
        hist.append(float(v))
    if cluster.eps_split is None:
        cluster.eps_split = ctx.monitor.eps_split or default_eps_split(mixed_loss, ctx.monitor.window)

    return StepOutcome(cluster.id, shots, _maybe_split(ctx, cluster, round_index))


def _maybe_split(ctx: RunContext, cluster: ClusterState, round_index: int) -> Optional[Bipartition]:
    mode = ctx.config.mode
    if not cluster.splittable or mode == "baseline":
        return None
    if mode == "forced-split":
        if cluster.parent is not None or round_index != ctx.forced_split_round:
            return None
        cluster.events.append(f"forced split at round {round_index}")
        return _bipartition(ctx, cluster)
    mon = ctx.monitor
    if cluster.iterations <= mon.warmup:
        return None
    s_mixed = slope(cluster.mixed_loss_history, mon.window)
    s_tasks = [slope(h, mon.window) for h in cluster.per_task_loss_history]
    if not split_condition(s_mixed, s_tasks, cluster.eps_split):
        return None
    reason = "stagnation" if abs(s_mixed) < cluster.eps_split else "divergence"
    cluster.events.append(f"split trigger ({reason}) at round {round_index}, slope {s_mixed:.3g}")
    return _bipartition(ctx, cluster)


def _bipartition(ctx: RunContext, cluster: ClusterState) -> Optional[Bipartition]:
    idx = list(cluster.members)
    if not ctx.distances[np.ix_(idx, idx)].any():
        cluster.splittable = False
        cluster.events.append("unsplittable: identical members; splitting suppressed")
        log.info("cluster %d is unsplittable", cluster.id)
        return None
    bip = spectral_bipartition(ctx.similarity[np.ix_(idx, idx)])
    return Bipartition(
        tuple(idx[k] for k in bip.group_a),
        tuple(idx[k] for k in bip.group_b),
    )
