"""Dense statevector simulation: gate kernels, ansatz builders, exact and shot-sampled energies."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np

from .pauli import PauliString, PauliTable, pauli_table

MAX_QUBITS = 24


class SimulationError(ValueError):
    pass


class QubitCountOutOfRange(SimulationError):
    pass


class QubitIndexOutOfRange(SimulationError):
    pass


class DuplicateQubit(SimulationError):
    pass


class ParamLengthMismatch(SimulationError):
    pass


class LengthMismatch(SimulationError):
    pass


class NonPositiveShots(SimulationError):
    pass


class StateVector:
    """``2**n`` complex amplitudes; qubit ``k`` is bit ``k`` of the index."""

    __slots__ = ("n_qubits", "amplitudes")

    def __init__(self, n_qubits: int, amplitudes: np.ndarray):
        _check_n(n_qubits)
        amps = np.asarray(amplitudes, dtype=complex)
        if amps.shape != (1 << n_qubits,):
            raise SimulationError(f"expected {1 << n_qubits} amplitudes, got {amps.shape}")
        self.n_qubits = n_qubits
        self.amplitudes = amps

    def copy(self) -> "StateVector":
        return StateVector(self.n_qubits, self.amplitudes.copy())

    def norm(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)


def _check_n(n: int) -> None:
    if not 1 <= n <= MAX_QUBITS:
        raise QubitCountOutOfRange(f"qubit count must be in [1, {MAX_QUBITS}], got {n}")


def zero_state(n: int) -> StateVector:
    _check_n(n)
    amps = np.zeros(1 << n, dtype=complex)
    amps[0] = 1.0
    return StateVector(n, amps)


def plus_state(n: int) -> StateVector:
    _check_n(n)
    dim = 1 << n
    return StateVector(n, np.full(dim, 1.0 / np.sqrt(dim), dtype=complex))


# -- gates -----------------------------------------------------------------


class Gate(NamedTuple):
    name: str
    qubits: tuple[int, ...]
    angle: float = 0.0


def RX(q: int, angle: float) -> Gate:
    return Gate("RX", (q,), angle)


def RY(q: int, angle: float) -> Gate:
    return Gate("RY", (q,), angle)


def RZ(q: int, angle: float) -> Gate:
    return Gate("RZ", (q,), angle)


def CX(control: int, target: int) -> Gate:
    return Gate("CX", (control, target))


def RZZ(q1: int, q2: int, angle: float) -> Gate:
    return Gate("RZZ", (q1, q2), angle)


def gate_matrix(gate: Gate) -> np.ndarray:
    """Local unitary; for two-qubit gates the first listed qubit is the low bit."""
    t = gate.angle / 2
    c, s = np.cos(t), np.sin(t)
    if gate.name == "RX":
        return np.array([[c, -1j * s], [-1j * s, c]])
    if gate.name == "RY":
        return np.array([[c, -s], [s, c]], dtype=complex)
    if gate.name == "RZ":
        return np.diag([np.exp(-1j * t), np.exp(1j * t)])
    if gate.name == "CX":
        # basis index = b_control + 2 * b_target
        return np.array([[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]], dtype=complex)
    if gate.name == "RZZ":
        return np.diag(np.exp(-1j * t * np.array([1, -1, -1, 1])))
    raise SimulationError(f"unknown gate {gate.name}")


@lru_cache(maxsize=64)
def _z_signs(n: int) -> np.ndarray:
    """``(-1)**bit_q(index)`` for each qubit, shape ``(n, 2**n)``."""
    idx = np.arange(1 << n)
    return np.stack([1.0 - 2.0 * ((idx >> q) & 1) for q in range(n)])


def _check_qubits(n: int, qubits: Sequence[int]) -> None:
    for q in qubits:
        if not 0 <= q < n:
            raise QubitIndexOutOfRange(f"qubit {q} out of range for {n} qubits")
    if len(set(qubits)) != len(qubits):
        raise DuplicateQubit(f"repeated qubit in {tuple(qubits)}")


def apply_gate(state: StateVector, gate: Gate) -> StateVector:
    n = state.n_qubits
    _check_qubits(n, gate.qubits)
    amps = state.amplitudes
    name = gate.name
    if name == "RZ":
        (q,) = gate.qubits
        amps *= np.exp(-0.5j * gate.angle * _z_signs(n)[q])
    elif name == "RZZ":
        q1, q2 = gate.qubits
        zz = _z_signs(n)[q1] * _z_signs(n)[q2]
        amps *= np.exp(-0.5j * gate.angle * zz)
    elif name in ("RX", "RY"):
        (q,) = gate.qubits
        view = amps.reshape(1 << (n - q - 1), 2, 1 << q)
        view[:] = np.matmul(gate_matrix(gate), view)
    elif name == "CX":
        c, t = gate.qubits
        tensor = amps.reshape((2,) * n)
        ca, ta = n - 1 - c, n - 1 - t
        sl = [slice(None)] * n
        sl[ca] = 1
        sub = tensor[tuple(sl)]
        tax = ta if ta < ca else ta - 1
        sub[...] = np.flip(sub, axis=tax).copy()
    else:
        raise SimulationError(f"unknown gate {name}")
    return state


# -- ansatze -----------------------------------------------------------------


@dataclass(frozen=True)
class HeaSpec:
    """Hardware-efficient ansatz: (layers + 1) RY/RZ rotation blocks around circular CX chains.

    Parameter layout: block ``b`` uses ``params[2*n*b : 2*n*(b+1)]``, first the ``n`` RY
    angles then the ``n`` RZ angles.
    """

    n_qubits: int
    layers: int = 2

    @property
    def n_params(self) -> int:
        return 2 * self.n_qubits * (self.layers + 1)


def _rotation_block(state: StateVector, angles: np.ndarray) -> None:
    n = state.n_qubits
    for q in range(n):
        apply_gate(state, RY(q, angles[q]))
    for q in range(n):
        apply_gate(state, RZ(q, angles[n + q]))


def _cx_ring(state: StateVector) -> None:
    n = state.n_qubits
    if n == 1:
        return
    for q in range(n - 1):
        apply_gate(state, CX(q, q + 1))
    if n > 2:
        apply_gate(state, CX(n - 1, 0))


def build_hea(spec: HeaSpec, params: Sequence[float]) -> StateVector:
    params = np.asarray(params, dtype=float)
    if params.shape != (spec.n_params,):
        raise ParamLengthMismatch(f"HEA expects {spec.n_params} params, got {params.shape}")
    n = spec.n_qubits
    state = zero_state(n)
    blocks = params.reshape(spec.layers + 1, 2 * n)
    for layer in range(spec.layers):
        _rotation_block(state, blocks[layer])
        _cx_ring(state)
    _rotation_block(state, blocks[-1])
    return state


@dataclass(frozen=True)
class MaQaoaSpec:
    """Multi-angle QAOA: per layer one angle per edge, then one mixer angle per qubit.

    Layout per layer: ``m`` gammas (edge order of ``edges``) followed by ``n`` betas.
    """

    n_nodes: int
    edges: tuple[tuple[int, int, float], ...]
    p: int = 1

    @property
    def n_params(self) -> int:
        return (len(self.edges) + self.n_nodes) * self.p


def build_maqaoa(spec: MaQaoaSpec, params: Sequence[float]) -> StateVector:
    params = np.asarray(params, dtype=float)
    if params.shape != (spec.n_params,):
        raise ParamLengthMismatch(f"ma-QAOA expects {spec.n_params} params, got {params.shape}")
    n, m = spec.n_nodes, len(spec.edges)
    state = plus_state(n)
    for layer in params.reshape(spec.p, m + n):
        gammas, betas = layer[:m], layer[m:]
        # exp(-i g C_a), C_a = w/2 (I - ZZ)  ==  RZZ(-g w) up to global phase
        for (u, v, w), g in zip(spec.edges, gammas):
            apply_gate(state, RZZ(u, v, -g * w))
        for q, b in enumerate(betas):
            apply_gate(state, RX(q, 2 * b))
    return state


# -- expectation values --------------------------------------------------------


def exact_term_expectation(state: StateVector, p: PauliString) -> float:
    if len(p) != state.n_qubits:
        raise LengthMismatch(f"{len(p)}-qubit string on {state.n_qubits}-qubit state")
    if p.is_identity:
        return 1.0
    return float(PauliTable([p]).expectations(state.amplitudes)[0])


def term_expectations(state: StateVector, superset: Sequence[PauliString]) -> np.ndarray:
    table = pauli_table(tuple(superset))
    if table.n_qubits != state.n_qubits:
        raise LengthMismatch("superset and state qubit counts differ")
    return table.expectations(state.amplitudes)


def exact_energy(state: StateVector, superset: Sequence[PauliString], coeffs) -> float:
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (len(superset),):
        raise LengthMismatch(f"{coeffs.shape} coefficients for {len(superset)} terms")
    if not len(superset):
        return 0.0
    table = pauli_table(tuple(superset))
    rows = np.flatnonzero((coeffs != 0) & ~table.identity)
    energy = float(coeffs[table.identity].sum())
    if rows.size:
        energy += float(coeffs[rows] @ table.expectations(state.amplitudes, rows))
    return energy


@dataclass(frozen=True)
class TermEstimate:
    index: int
    estimate: float
    shots: int


@dataclass
class SampledTerms:
    """Vector form of per-term estimates over a whole superset.

    Unmeasured non-identity terms carry ``nan``; identity terms carry 1 with 0 shots.
    """

    estimates: np.ndarray
    shots: np.ndarray = field(repr=False)

    @property
    def total_shots(self) -> int:
        return int(self.shots.sum())

    def as_term_estimates(self) -> list[TermEstimate]:
        return [
            TermEstimate(k, float(self.estimates[k]), int(self.shots[k]))
            for k in range(len(self.estimates))
            if not np.isnan(self.estimates[k])
        ]


def sample_terms(
    state: StateVector,
    table: PauliTable,
    measure: np.ndarray,
    shots_per_term: int,
    rng: np.random.Generator,
) -> SampledTerms:
    """Binomial shot sampling of every term selected by the boolean mask ``measure``."""
    if shots_per_term < 1:
        raise NonPositiveShots(f"shots_per_term must be >= 1, got {shots_per_term}")
    est = np.full(len(table), np.nan)
    shots = np.zeros(len(table), dtype=np.int64)
    est[table.identity] = 1.0
    rows = np.flatnonzero(measure & ~table.identity)
    if rows.size:
        p_true = np.clip(table.expectations(state.amplitudes, rows), -1.0, 1.0)
        k = rng.binomial(shots_per_term, (1.0 + p_true) / 2.0)
        est[rows] = 2.0 * k / shots_per_term - 1.0
        shots[rows] = shots_per_term
    return SampledTerms(est, shots)


def sampled_energy(
    state: StateVector,
    superset: Sequence[PauliString],
    coeffs,
    shots_per_term: int,
    rng: np.random.Generator,
) -> tuple[float, list[TermEstimate]]:
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (len(superset),):
        raise LengthMismatch(f"{coeffs.shape} coefficients for {len(superset)} terms")
    table = pauli_table(tuple(superset))
    sampled = sample_terms(state, table, coeffs != 0, shots_per_term, rng)
    used = ~np.isnan(sampled.estimates) & (coeffs != 0)
    energy = float(coeffs[used] @ sampled.estimates[used])
    return energy, sampled.as_term_estimates()
