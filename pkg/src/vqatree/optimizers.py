"""Derivative-free optimizers driven by a noisy loss oracle.

An oracle is any callable ``oracle(params) -> Evaluation``. Both optimizers only
ever ask for loss values, so they plug into the engine interchangeably.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

log = logging.getLogger(__name__)

SPSA_ALPHA = 0.602
SPSA_GAMMA = 0.101
DEFAULT_C = 0.1
DEFAULT_TARGET_STEP = 0.1


class OptimizerError(ValueError):
    pass


class FlatLandscape(OptimizerError):
    pass


class DegenerateSimplex(OptimizerError):
    pass


@dataclass
class Evaluation:
    loss: float
    estimates: Optional[np.ndarray] = None  # per-term estimates, superset indexing
    shots: int = 0


LossOracle = Callable[[np.ndarray], Evaluation]


def as_oracle(fn: Callable[[np.ndarray], float]) -> LossOracle:
    """Wrap a plain ``f(x) -> float`` as a zero-shot oracle."""

    def oracle(x):
        return Evaluation(float(fn(x)))

    return oracle


@dataclass
class StepReport:
    params: np.ndarray
    losses: list[float]
    evaluations: list[Evaluation]

    @property
    def n_evals(self) -> int:
        return len(self.evaluations)

    @property
    def shots(self) -> int:
        return sum(e.shots for e in self.evaluations)


# -- SPSA ------------------------------------------------------------------------


@dataclass
class SpsaState:
    theta: np.ndarray
    a: float = 1.0
    A: float = 0.0
    alpha: float = SPSA_ALPHA
    c: float = DEFAULT_C
    gamma: float = SPSA_GAMMA
    t: int = 0
    seed: int = 0

    evals_per_step = 2

    def __post_init__(self):
        self.theta = np.array(self.theta, dtype=float)
        if not (self.a > 0 and self.c > 0):
            raise OptimizerError("SPSA needs a > 0 and c > 0")
        if not 0 < self.alpha <= 1:
            raise OptimizerError("SPSA needs 0 < alpha <= 1")
        if not 0 <= self.gamma < 1:
            raise OptimizerError("SPSA needs 0 <= gamma < 1")
        if self.A < 0:
            raise OptimizerError("SPSA needs A >= 0")

    def learning_rate(self, t: Optional[int] = None) -> float:
        t = self.t if t is None else t
        return self.a / (self.A + t + 1) ** self.alpha

    def perturbation(self, t: Optional[int] = None) -> float:
        t = self.t if t is None else t
        return self.c / (t + 1) ** self.gamma

    def step(self, oracle: LossOracle, rng=None) -> StepReport:
        return spsa_step(self, oracle, rng)

    def inherit(self) -> "SpsaState":
        return copy.deepcopy(self)


def spsa_step(state: SpsaState, oracle: LossOracle, rng: Optional[np.random.Generator] = None) -> StepReport:
    """One SPSA update with exactly two oracle calls; mutates ``state``."""
    if rng is None:
        rng = np.random.default_rng([state.seed, state.t])
    theta = state.theta
    delta = state.perturbation() * rng.choice((-1.0, 1.0), size=theta.shape)
    plus = oracle(theta + delta)
    minus = oracle(theta - delta)
    grad = (plus.loss - minus.loss) / (2.0 * delta)
    state.theta = theta - state.learning_rate() * grad
    state.t += 1
    return StepReport(state.theta.copy(), [plus.loss, minus.loss], [plus, minus])


def calibrate_spsa(
    oracle: LossOracle,
    theta0,
    target_first_step: float = DEFAULT_TARGET_STEP,
    planned_iterations: int = 1000,
    c: float = DEFAULT_C,
    alpha: float = SPSA_ALPHA,
    gamma: float = SPSA_GAMMA,
    n_probes: int = 5,
    rng: Optional[np.random.Generator] = None,
    seed: int = 0,
) -> tuple[SpsaState, list[Evaluation]]:
    """Pick ``a`` so the first update moves each parameter by about ``target_first_step``.

    Returns the state and the probe evaluations (they cost shots like any other).
    Falls back to ``a = target_first_step`` on a flat landscape.
    """
    if not target_first_step > 0:
        raise OptimizerError("target_first_step must be positive")
    if rng is None:
        rng = np.random.default_rng([seed, 2**31 - 1])
    theta0 = np.array(theta0, dtype=float)
    A = 0.1 * planned_iterations
    evals = []
    diffs = []
    for _ in range(n_probes):
        delta = c * rng.choice((-1.0, 1.0), size=theta0.shape)
        plus, minus = oracle(theta0 + delta), oracle(theta0 - delta)
        evals += [plus, minus]
        diffs.append(abs(plus.loss - minus.loss))
    grad_mag = float(np.mean(diffs)) / (2 * c)
    if grad_mag < 1e-12:
        log.warning("flat landscape during SPSA calibration; using a = target_first_step")
        a = target_first_step
    else:
        a = target_first_step * (A + 1) ** alpha / grad_mag
    state = SpsaState(theta0, a=a, A=A, alpha=alpha, c=c, gamma=gamma, seed=seed)
    return state, evals


# -- Nelder-Mead -------------------------------------------------------------------


@dataclass
class SimplexState:
    """Nelder-Mead simplex advanced one reflection/expansion/contraction per step."""

    theta: np.ndarray
    initial_step: float = 0.2
    min_diameter: float = 1e-8
    simplex: Optional[np.ndarray] = None
    values: Optional[np.ndarray] = None
    t: int = 0
    seed: int = 0
    reinitializations: int = field(default=0)

    evals_per_step = None  # varies

    def __post_init__(self):
        self.theta = np.array(self.theta, dtype=float)

    def step(self, oracle: LossOracle, rng=None) -> StepReport:
        return simplex_step(self, oracle)

    def inherit(self) -> "SimplexState":
        # stored vertex values belong to the parent's objective
        return SimplexState(self.theta.copy(), self.initial_step, self.min_diameter, seed=self.seed, t=self.t)

    def best(self) -> float:
        return float(self.values.min())


def _init_simplex(state: SimplexState, oracle: LossOracle, center: np.ndarray) -> list[Evaluation]:
    d = center.size
    verts = np.tile(center, (d + 1, 1))
    verts[1:] += state.initial_step * np.eye(d)
    evals = [oracle(v) for v in verts]
    state.simplex = verts
    state.values = np.array([e.loss for e in evals])
    return evals


def simplex_step(state: SimplexState, oracle: LossOracle) -> StepReport:
    evals: list[Evaluation] = []
    if state.simplex is None:
        evals += _init_simplex(state, oracle, state.theta)
    else:
        diameter = np.max(np.linalg.norm(state.simplex - state.simplex[0], axis=1))
        if diameter < state.min_diameter:
            state.reinitializations += 1
            log.info("degenerate simplex (diameter %.3g); reinitializing", diameter)
            evals += _init_simplex(state, oracle, state.simplex[np.argmin(state.values)])
        else:
            evals += _nelder_mead_move(state, oracle)
    best = int(np.argmin(state.values))
    state.theta = state.simplex[best].copy()
    state.t += 1
    return StepReport(state.theta.copy(), [e.loss for e in evals], evals)


def _nelder_mead_move(state: SimplexState, oracle: LossOracle) -> list[Evaluation]:
    order = np.argsort(state.values, kind="stable")
    S, f = state.simplex[order], state.values[order]
    centroid = S[:-1].mean(axis=0)
    worst = S[-1]
    evals = []

    xr = centroid + (centroid - worst)
    er = oracle(xr)
    evals.append(er)
    if er.loss < f[0]:
        xe = centroid + 2.0 * (centroid - worst)
        ee = oracle(xe)
        evals.append(ee)
        if ee.loss < er.loss:
            S[-1], f[-1] = xe, ee.loss
        else:
            S[-1], f[-1] = xr, er.loss
    elif er.loss < f[-2]:
        S[-1], f[-1] = xr, er.loss
    else:
        if er.loss < f[-1]:
            xc = centroid + 0.5 * (xr - centroid)
        else:
            xc = centroid + 0.5 * (worst - centroid)
        ec = oracle(xc)
        evals.append(ec)
        if ec.loss < min(er.loss, f[-1]):
            S[-1], f[-1] = xc, ec.loss
        else:
            # shrink toward the best vertex
            for j in range(1, len(S)):
                S[j] = S[0] + 0.5 * (S[j] - S[0])
                ej = oracle(S[j])
                evals.append(ej)
                f[j] = ej.loss
    state.simplex, state.values = S, f
    return evals
