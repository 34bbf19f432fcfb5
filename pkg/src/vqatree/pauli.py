"""Pauli strings, real-weighted Pauli sums and the padded task representation.

Qubit convention: character ``k`` of a Pauli string acts on qubit ``k``, and
qubit ``k`` is bit ``k`` (least-significant first) of a statevector index.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

DEDUP_EPS = 1e-12
DENSE_QUBIT_CAP = 12
PAULI_CHARS = "IXYZ"


class PauliError(ValueError):
    pass


class InvalidCharacter(PauliError):
    def __init__(self, position: int, char: str = ""):
        super().__init__(f"invalid Pauli character {char!r} at position {position}")
        self.position = position


class EmptyString(PauliError):
    pass


class QubitCountMismatch(PauliError):
    pass


class EmptyTaskList(PauliError):
    pass


class EmptyMemberSet(PauliError):
    pass


class LengthMismatch(PauliError):
    pass


class NonPositiveEpsilon(PauliError):
    pass


class TooManyQubits(PauliError):
    pass


@dataclass(frozen=True, order=True)
class PauliString:
    ops: str

    def __post_init__(self):
        if not self.ops:
            raise EmptyString("Pauli string must be nonempty")
        for k, ch in enumerate(self.ops):
            if ch not in PAULI_CHARS:
                raise InvalidCharacter(k, ch)

    @property
    def n_qubits(self) -> int:
        return len(self.ops)

    @property
    def is_identity(self) -> bool:
        return all(ch == "I" for ch in self.ops)

    def __len__(self) -> int:
        return len(self.ops)

    def __getitem__(self, k: int) -> str:
        return self.ops[k]

    def __str__(self) -> str:
        return self.ops

    def masks(self) -> tuple[int, int, int]:
        """Return ``(x_mask, z_mask, n_y)``.

        ``P|b> = i**n_y * (-1)**popcount(b & z_mask) |b ^ x_mask>``.
        """
        return _masks(self.ops)


@lru_cache(maxsize=4096)
def _masks(ops: str) -> tuple[int, int, int]:
    x_mask = z_mask = n_y = 0
    for k, ch in enumerate(ops):
        if ch in "XY":
            x_mask |= 1 << k
        if ch in "ZY":
            z_mask |= 1 << k
        if ch == "Y":
            n_y += 1
    return x_mask, z_mask, n_y


def parse_pauli_string(text: str) -> PauliString:
    return PauliString(text)


def identity_string(n: int) -> PauliString:
    return PauliString("I" * n)


@dataclass(frozen=True)
class Hamiltonian:
    """Real-weighted Pauli sum. ``terms`` holds ``(PauliString, coeff)`` pairs."""

    n_qubits: int
    terms: tuple[tuple[PauliString, float], ...] = ()

    def __post_init__(self):
        if self.n_qubits < 1:
            raise PauliError("n_qubits must be positive")
        terms = []
        for p, c in self.terms:
            if not isinstance(p, PauliString):
                p = PauliString(p)
            if len(p) != self.n_qubits:
                raise QubitCountMismatch(
                    f"term {p} has {len(p)} qubits, Hamiltonian has {self.n_qubits}"
                )
            c = float(c)
            if not math.isfinite(c):
                raise PauliError(f"non-finite coefficient for {p}")
            terms.append((p, c))
        object.__setattr__(self, "terms", tuple(terms))

    @classmethod
    def from_terms(cls, n_qubits: int, terms: Mapping[str, float] | Iterable[tuple[str, float]]):
        items = terms.items() if isinstance(terms, Mapping) else terms
        return cls(n_qubits, tuple((PauliString(p), c) for p, c in items))

    def __len__(self) -> int:
        return len(self.terms)

    def strings(self) -> list[PauliString]:
        return [p for p, _ in self.terms]

    def coeffs(self) -> np.ndarray:
        return np.array([c for _, c in self.terms], dtype=float)

    def as_dict(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for p, c in self.terms:
            out[p.ops] = out.get(p.ops, 0.0) + c
        return out

    def non_identity_count(self) -> int:
        return sum(1 for p, c in self.terms if not p.is_identity and c != 0.0)

    def to_json_dict(self) -> dict:
        return {
            "n_qubits": self.n_qubits,
            "terms": [{"pauli": p.ops, "coeff": c} for p, c in self.terms],
        }


def canonicalize(h: Hamiltonian) -> Hamiltonian:
    merged: dict[str, float] = {}
    for p, c in h.terms:
        merged[p.ops] = merged.get(p.ops, 0.0) + c
    terms = tuple(
        (PauliString(s), merged[s]) for s in sorted(merged) if abs(merged[s]) >= DEDUP_EPS
    )
    return Hamiltonian(h.n_qubits, terms)


def l1_norm(h: Hamiltonian) -> float:
    return float(sum(abs(c) for _, c in h.terms))


def shots_per_eval(h: Hamiltonian, eps: float) -> float:
    """Shots needed to estimate ``<H>`` to accuracy ``eps``: ``(sum |c_j|)^2 / eps^2``."""
    if not eps > 0:
        raise NonPositiveEpsilon(f"eps must be positive, got {eps}")
    return l1_norm(h) ** 2 / eps**2


def l1_distance(row_i: Sequence[float], row_j: Sequence[float]) -> float:
    a = np.asarray(row_i, dtype=float)
    b = np.asarray(row_j, dtype=float)
    if a.shape != b.shape:
        raise LengthMismatch(f"rows of length {a.shape} and {b.shape}")
    return float(np.abs(a - b).sum())


# -- padded task sets ------------------------------------------------------


@dataclass(frozen=True)
class PaddedTaskSet:
    """Union of Pauli strings over a task family with zero-padded coefficient rows.

    ``coeff_vectors[i, k]`` is task ``i``'s coefficient on ``superset[k]``.
    Zeros are kept so every row shares the same column indexing.
    """

    n_qubits: int
    superset: tuple[PauliString, ...]
    coeff_vectors: np.ndarray
    task_ids: tuple[str, ...]

    @property
    def n_tasks(self) -> int:
        return len(self.task_ids)

    @property
    def n_terms(self) -> int:
        return len(self.superset)

    def identity_mask(self) -> np.ndarray:
        return np.array([p.is_identity for p in self.superset], dtype=bool)

    def reconstruct(self, i: int) -> Hamiltonian:
        return Hamiltonian(
            self.n_qubits,
            tuple((p, float(c)) for p, c in zip(self.superset, self.coeff_vectors[i])),
        )


def build_padded_set(
    tasks: Sequence[Hamiltonian], task_ids: Sequence[str] | None = None
) -> PaddedTaskSet:
    if not tasks:
        raise EmptyTaskList("need at least one task")
    n = tasks[0].n_qubits
    for h in tasks:
        if h.n_qubits != n:
            raise QubitCountMismatch(f"tasks mix {n} and {h.n_qubits} qubits")
    if task_ids is None:
        task_ids = [str(i) for i in range(len(tasks))]
    if len(task_ids) != len(tasks):
        raise PauliError("task_ids length differs from task count")
    dicts = [h.as_dict() for h in tasks]
    superset = sorted(set().union(*dicts))
    col = {s: k for k, s in enumerate(superset)}
    rows = np.zeros((len(tasks), len(superset)))
    for i, d in enumerate(dicts):
        for s, c in d.items():
            rows[i, col[s]] = c
    rows.setflags(write=False)
    return PaddedTaskSet(
        n_qubits=n,
        superset=tuple(PauliString(s) for s in superset),
        coeff_vectors=rows,
        task_ids=tuple(str(t) for t in task_ids),
    )


@dataclass(frozen=True)
class MixedHamiltonian:
    superset: tuple[PauliString, ...]
    mixed_coeffs: np.ndarray
    member_count: int

    def to_hamiltonian(self) -> Hamiltonian:
        n = len(self.superset[0])
        return Hamiltonian(n, tuple(zip(self.superset, map(float, self.mixed_coeffs))))


def mixed_hamiltonian(p: PaddedTaskSet, member_rows: Sequence[int]) -> MixedHamiltonian:
    rows = list(member_rows)
    if not rows:
        raise EmptyMemberSet("mixed Hamiltonian needs at least one member")
    mixed = p.coeff_vectors[rows].mean(axis=0)
    return MixedHamiltonian(p.superset, mixed, len(rows))


# -- dense and matrix-free representations ----------------------------------

_PAULI_MATS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def pauli_matrix(p: PauliString) -> np.ndarray:
    # kron order puts qubit 0 on the least-significant index bit
    out = np.ones((1, 1), dtype=complex)
    for ch in reversed(p.ops):
        out = np.kron(out, _PAULI_MATS[ch])
    return out


def to_dense(h: Hamiltonian) -> np.ndarray:
    if h.n_qubits > DENSE_QUBIT_CAP:
        raise TooManyQubits(f"dense cap is {DENSE_QUBIT_CAP} qubits, got {h.n_qubits}")
    dim = 1 << h.n_qubits
    idx = np.arange(dim)
    out = np.zeros((dim, dim), dtype=complex)
    for p, c in h.terms:
        x, z, ny = p.masks()
        signs = 1 - 2 * (_popcount(idx & z) & 1)
        # column b maps to row b ^ x
        out[idx ^ x, idx] += c * (1j**ny) * signs
    return out


def _popcount(a: np.ndarray) -> np.ndarray:
    a = a.astype(np.int64)
    count = np.zeros_like(a)
    while np.any(a):
        count += a & 1
        a = a >> 1
    return count


@lru_cache(maxsize=64)
def _index_parity_table(n: int) -> np.ndarray:
    """popcount parity of every index, shape ``(2**n,)``; used with masks."""
    idx = np.arange(1 << n)
    return _popcount(idx) & 1


class PauliTable:
    """Precomputed permutation/phase arrays for evaluating many strings on one register."""

    def __init__(self, strings: Sequence[PauliString]):
        if not strings:
            raise PauliError("empty Pauli table")
        self.n_qubits = len(strings[0])
        self.strings = tuple(strings)
        dim = 1 << self.n_qubits
        idx = np.arange(dim)
        parity = _index_parity_table(self.n_qubits)
        self.identity = np.array([p.is_identity for p in strings], dtype=bool)
        self.perms = np.empty((len(strings), dim), dtype=np.int64)
        self.phases = np.empty((len(strings), dim), dtype=complex)
        for k, p in enumerate(strings):
            x, z, ny = p.masks()
            self.perms[k] = idx ^ x
            self.phases[k] = (1j**ny) * (1 - 2 * parity[idx & z])

    def __len__(self) -> int:
        return len(self.strings)

    def expectations(self, amps: np.ndarray, rows: np.ndarray | None = None) -> np.ndarray:
        """``<psi|P_k|psi>`` for the selected rows (all by default)."""
        perms = self.perms if rows is None else self.perms[rows]
        phases = self.phases if rows is None else self.phases[rows]
        vals = np.einsum("kd,kd->k", np.conj(amps[perms]), phases * amps)
        return vals.real

    def matvec(self, coeffs: np.ndarray, vec: np.ndarray) -> np.ndarray:
        out = np.zeros_like(vec, dtype=complex)
        for k in np.flatnonzero(coeffs):
            # (P v)[b ^ x] = phase[b] v[b]  <=>  (P v)[b] = phase[b ^ x] v[b ^ x]
            perm = self.perms[k]
            out += coeffs[k] * (self.phases[k][perm] * vec[perm])
        return out


@lru_cache(maxsize=32)
def pauli_table(strings: tuple[PauliString, ...]) -> PauliTable:
    return PauliTable(strings)


# -- file ingestion ----------------------------------------------------------


def hamiltonian_from_json(data: Mapping) -> Hamiltonian:
    try:
        n = int(data["n_qubits"])
        terms = [(PauliString(t["pauli"]), float(t["coeff"])) for t in data["terms"]]
    except (KeyError, TypeError) as exc:
        raise PauliError(f"malformed Hamiltonian document: {exc}") from exc
    return canonicalize(Hamiltonian(n, tuple(terms)))


def load_hamiltonian(path: str | Path) -> Hamiltonian:
    with open(path) as f:
        return hamiltonian_from_json(json.load(f))


def save_hamiltonian(h: Hamiltonian, path: str | Path) -> None:
    with open(path, "w") as f:
        json.dump(h.to_json_dict(), f, indent=1)
        f.write("\n")
