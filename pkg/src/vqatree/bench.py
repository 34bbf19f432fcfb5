"""Benchmark task families and their reference ground energies."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .pauli import (
    DENSE_QUBIT_CAP,
    Hamiltonian,
    PauliString,
    TooManyQubits,
    canonicalize,
    pauli_table,
    to_dense,
)

ITERATIVE_QUBIT_CAP = 16


class BenchError(ValueError):
    pass


class InvalidSpec(BenchError):
    pass


class InvalidGraph(BenchError):
    pass


class NonPositiveScale(BenchError):
    pass


class StructureMismatch(BenchError):
    pass


class NonConvergence(BenchError):
    def __init__(self, iterations: int):
        super().__init__(f"Lanczos did not converge in {iterations} iterations")
        self.iterations = iterations


def _pauli(n: int, ops: dict[int, str]) -> PauliString:
    chars = ["I"] * n
    for q, ch in ops.items():
        chars[q] = ch
    return PauliString("".join(chars))


# -- spin chains -----------------------------------------------------------------


@dataclass(frozen=True)
class TfimSpec:
    sites: int
    J: float = 1.0
    h: tuple[float, ...] = (1.0,)

    def validate(self):
        if self.sites < 2 or not self.h:
            raise InvalidSpec("TFIM needs >= 2 sites and at least one field value")


@dataclass(frozen=True)
class XxzSpec:
    sites: int
    J: float = 1.0
    delta: tuple[float, ...] = (1.0,)

    def validate(self):
        if self.sites < 2 or not self.delta:
            raise InvalidSpec("XXZ needs >= 2 sites and at least one anisotropy")


def tfim_hamiltonian(sites: int, J: float, h: float) -> Hamiltonian:
    terms = [(_pauli(sites, {i: "Z", i + 1: "Z"}), -J) for i in range(sites - 1)]
    terms += [(_pauli(sites, {i: "X"}), -h) for i in range(sites)]
    return canonicalize(Hamiltonian(sites, tuple(terms)))


def gen_tfim(spec: TfimSpec) -> list[Hamiltonian]:
    """Open-chain transverse-field Ising model, one task per field value."""
    spec.validate()
    return [tfim_hamiltonian(spec.sites, spec.J, h) for h in spec.h]


def xxz_hamiltonian(sites: int, J: float, delta: float) -> Hamiltonian:
    terms = []
    for i in range(sites - 1):
        terms.append((_pauli(sites, {i: "X", i + 1: "X"}), J))
        terms.append((_pauli(sites, {i: "Y", i + 1: "Y"}), J))
        terms.append((_pauli(sites, {i: "Z", i + 1: "Z"}), J * delta))
    return canonicalize(Hamiltonian(sites, tuple(terms)))


def gen_xxz(spec: XxzSpec) -> list[Hamiltonian]:
    spec.validate()
    return [xxz_hamiltonian(spec.sites, spec.J, d) for d in spec.delta]


# -- MaxCut graphs --------------------------------------------------------------------


@dataclass(frozen=True)
class WeightedGraph:
    n_nodes: int
    edges: tuple[tuple[int, int, float], ...]
    base: Optional["WeightedGraph"] = field(default=None, compare=False, repr=False)
    load_scale: float = 1.0

    def __post_init__(self):
        if self.n_nodes < 1:
            raise InvalidGraph("graph needs at least one node")
        seen = set()
        edges = []
        for u, v, w in self.edges:
            u, v, w = int(u), int(v), float(w)
            if u > v:
                u, v = v, u
            if not (0 <= u < v < self.n_nodes):
                raise InvalidGraph(f"bad edge ({u}, {v}) for {self.n_nodes} nodes")
            if (u, v) in seen:
                raise InvalidGraph(f"duplicate edge ({u}, {v})")
            if not math.isfinite(w):
                raise InvalidGraph(f"non-finite weight on ({u}, {v})")
            seen.add((u, v))
            edges.append((u, v, w))
        object.__setattr__(self, "edges", tuple(edges))

    def structure(self) -> tuple[tuple[int, int], ...]:
        return tuple((u, v) for u, v, _ in self.edges)

    def weights(self) -> np.ndarray:
        return np.array([w for _, _, w in self.edges])

    def to_json_dict(self) -> dict:
        return {"nodes": self.n_nodes, "edges": [[u, v, w] for u, v, w in self.edges]}


def graph_from_json(data) -> WeightedGraph:
    try:
        return WeightedGraph(int(data["nodes"]), tuple(tuple(e) for e in data["edges"]))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InvalidGraph):
            raise
        raise InvalidGraph(f"malformed graph document: {exc}") from exc


def load_graph(path) -> WeightedGraph:
    with open(path) as f:
        return graph_from_json(json.load(f))


def save_graph(g: WeightedGraph, path) -> None:
    with open(path, "w") as f:
        json.dump(g.to_json_dict(), f, indent=1)
        f.write("\n")


def maxcut_cost(g: WeightedGraph) -> Hamiltonian:
    """H_C = sum_(i,j) w_ij/2 (I - Z_i Z_j)."""
    n = g.n_nodes
    terms = []
    for u, v, w in g.edges:
        terms.append((_pauli(n, {}), 0.5 * w))
        terms.append((_pauli(n, {u: "Z", v: "Z"}), -0.5 * w))
    return canonicalize(Hamiltonian(n, tuple(terms)))


def gen_maxcut(g: WeightedGraph) -> Hamiltonian:
    """Task Hamiltonian ``-H_C``: its minimum is minus the maximum cut value."""
    h = maxcut_cost(g)
    return Hamiltonian(h.n_qubits, tuple((p, -c) for p, c in h.terms))


def graph_from_cost(h: Hamiltonian) -> WeightedGraph:
    """Recover edge weights from a ``-H_C`` task (ZZ coefficient is ``+w/2``)."""
    edges = []
    for p, c in h.terms:
        qs = [k for k, ch in enumerate(p.ops) if ch != "I"]
        if p.is_identity:
            continue
        if len(qs) != 2 or any(p.ops[k] != "Z" for k in qs):
            raise InvalidGraph(f"term {p} is not a ZZ edge term")
        edges.append((qs[0], qs[1], 2.0 * c))
    return WeightedGraph(h.n_qubits, tuple(sorted(edges)))


def scale_graph(g: WeightedGraph, load_scale: float) -> WeightedGraph:
    if not load_scale > 0:
        raise NonPositiveScale(f"load scale must be positive, got {load_scale}")
    base = g.base or g
    edges = tuple((u, v, w * load_scale) for u, v, w in g.edges)
    return WeightedGraph(g.n_nodes, edges, base=base, load_scale=g.load_scale * load_scale)


def edge_weight_variance(graphs: Sequence[WeightedGraph]) -> float:
    """Mean squared deviation of edge weights from the mean graph."""
    if not graphs:
        raise StructureMismatch("no graphs")
    struct = graphs[0].structure()
    for g in graphs:
        if g.structure() != struct or g.n_nodes != graphs[0].n_nodes:
            raise StructureMismatch("graphs do not share edge structure")
    W = np.stack([g.weights() for g in graphs])
    if W.size == 0:
        return 0.0
    return float(((W - W.mean(axis=0)) ** 2).mean())


def brute_force_maxcut(g: WeightedGraph) -> tuple[float, int]:
    """Maximum cut value and a maximizing bitstring (bit k = side of node k)."""
    if g.n_nodes > 24:
        raise TooManyQubits("brute-force MaxCut capped at 24 nodes")
    idx = np.arange(1 << g.n_nodes)
    value = np.zeros(len(idx))
    for u, v, w in g.edges:
        value += w * (((idx >> u) ^ (idx >> v)) & 1)
    best = int(np.argmax(value))
    return float(value[best]), best


def synthetic_grid_graph(n_nodes: int = 14, extra_edges: int = 4, seed: int = 14) -> WeightedGraph:
    """Sparse connected weighted graph standing in for a small power-grid topology.

    A ring over all nodes plus ``extra_edges`` random chords; weights are drawn
    uniformly from [0.5, 1.5] with ``np.random.default_rng(seed)``, so a given
    ``(n_nodes, extra_edges, seed)`` always produces the same graph.
    """
    if n_nodes < 3:
        raise InvalidGraph("synthetic grid needs at least 3 nodes")
    rng = np.random.default_rng(seed)
    pairs = {(i, (i + 1) % n_nodes) for i in range(n_nodes)}
    pairs = {(min(u, v), max(u, v)) for u, v in pairs}
    candidates = [p for p in itertools.combinations(range(n_nodes), 2) if p not in pairs]
    chosen = rng.choice(len(candidates), size=min(extra_edges, len(candidates)), replace=False)
    pairs |= {candidates[k] for k in chosen}
    edges = tuple((u, v, float(rng.uniform(0.5, 1.5))) for u, v in sorted(pairs))
    return WeightedGraph(n_nodes, edges)


# -- ground-state oracles ------------------------------------------------------------


def dense_ground_energy(h: Hamiltonian) -> float:
    if not h.terms:
        return 0.0
    return float(np.linalg.eigvalsh(to_dense(h))[0])


def lanczos_ground_energy(
    h: Hamiltonian, tol: float = 1e-9, max_iter: int = 300, seed: int = 0
) -> float:
    """Lowest eigenvalue by Lanczos with full reorthogonalization on the Pauli-sum matvec.

    Converged when the lowest Ritz value changes by less than ``tol`` between iterations.
    """
    if h.n_qubits > ITERATIVE_QUBIT_CAP:
        raise TooManyQubits(f"iterative cap is {ITERATIVE_QUBIT_CAP} qubits")
    if not h.terms:
        return 0.0
    strings = tuple(p for p, _ in h.terms)
    table = pauli_table(strings)
    coeffs = h.coeffs()
    dim = 1 << h.n_qubits
    rng = np.random.default_rng(seed)
    q = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    q /= np.linalg.norm(q)
    Q = [q]
    alphas, betas = [], []
    prev = np.inf
    for it in range(min(max_iter, dim)):
        w = table.matvec(coeffs, Q[-1])
        alpha = float(np.vdot(Q[-1], w).real)
        alphas.append(alpha)
        w = w - alpha * Q[-1] - (betas[-1] * Q[-2] if betas else 0.0)
        B = np.array(Q)
        w = w - B.T @ (B.conj() @ w)
        w = w - B.T @ (B.conj() @ w)
        T = np.diag(alphas) + np.diag(betas, 1) + np.diag(betas, -1)
        ritz = float(np.linalg.eigvalsh(T)[0])
        beta = float(np.linalg.norm(w))
        if abs(ritz - prev) < tol or beta < 1e-12 or len(Q) == dim:
            return ritz
        prev = ritz
        betas.append(beta)
        Q.append(w / beta)
    raise NonConvergence(max_iter)


def exact_ground_energy(h: Hamiltonian, method: str = "auto") -> float:
    if method == "auto":
        method = "dense" if h.n_qubits <= DENSE_QUBIT_CAP else "lanczos"
    if method == "dense":
        return dense_ground_energy(h)
    if method == "lanczos":
        return lanczos_ground_energy(h)
    raise ValueError(f"unknown method {method!r}")


# -- ranges and families ----------------------------------------------------------------


def parse_range(text: str) -> list[float]:
    """``start:stop:count`` with inclusive endpoints, or a comma-separated list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise InvalidSpec(f"range must be start:stop:count, got {text!r}")
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 1:
            raise InvalidSpec("range count must be >= 1")
        if count == 1:
            return [start]
        return [float(x) for x in np.linspace(start, stop, count)]
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise InvalidSpec(str(exc)) from exc


@dataclass
class TaskFamily:
    """Named tasks plus generator provenance and reference ground energies."""

    kind: str
    task_ids: list[str]
    hamiltonians: list[Hamiltonian]
    parameters: list[dict]
    reference_energies: list[Optional[float]]
    graph: Optional[WeightedGraph] = None

    def manifest(self, files: Sequence[str]) -> dict:
        doc = {
            "kind": self.kind,
            "tasks": [
                {"id": t, "file": f, "parameters": p, "reference_energy": e}
                for t, f, p, e in zip(self.task_ids, files, self.parameters, self.reference_energies)
            ],
        }
        if self.graph is not None:
            doc["base_graph"] = self.graph.to_json_dict()
        return doc


def tfim_family(sites: int, J: float, hs: Sequence[float], references: bool = True) -> TaskFamily:
    hams = gen_tfim(TfimSpec(sites, J, tuple(hs)))
    return TaskFamily(
        "tfim",
        [f"tfim_h{k:02d}" for k in range(len(hs))],
        hams,
        [{"sites": sites, "J": J, "h": h} for h in hs],
        [exact_ground_energy(h) if references else None for h in hams],
    )


def xxz_family(sites: int, J: float, deltas: Sequence[float], references: bool = True) -> TaskFamily:
    hams = gen_xxz(XxzSpec(sites, J, tuple(deltas)))
    return TaskFamily(
        "xxz",
        [f"xxz_d{k:02d}" for k in range(len(deltas))],
        hams,
        [{"sites": sites, "J": J, "delta": d} for d in deltas],
        [exact_ground_energy(h) if references else None for h in hams],
    )


def maxcut_family(graph: WeightedGraph, scales: Sequence[float], references: bool = True) -> TaskFamily:
    graphs = [scale_graph(graph, s) for s in scales]
    hams = [gen_maxcut(g) for g in graphs]
    refs = [-brute_force_maxcut(g)[0] if references else None for g in graphs]
    return TaskFamily(
        "maxcut",
        [f"maxcut_s{k:02d}" for k in range(len(scales))],
        hams,
        [{"load_scale": s} for s in scales],
        refs,
        graph=graph,
    )
