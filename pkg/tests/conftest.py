import numpy as np
import pytest
from hypothesis import strategies as st

from vqatree.pauli import Hamiltonian


def random_hamiltonian(rng: np.random.Generator, n: int, n_terms: int = 5, identity: bool = False) -> Hamiltonian:
    chars = np.array(list("IXYZ"))
    terms = []
    for _ in range(n_terms):
        ops = "".join(rng.choice(chars, n))
        terms.append((ops, float(rng.normal())))
    if identity:
        terms.append(("I" * n, float(rng.normal())))
    return Hamiltonian.from_terms(n, terms)


def random_state(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return v / np.linalg.norm(v)


@st.composite
def hamiltonians(draw, n_qubits=None, max_terms=6):
    n = draw(st.integers(1, 3)) if n_qubits is None else n_qubits
    ops = st.text(alphabet="IXYZ", min_size=n, max_size=n)
    coeff = st.floats(-2, 2, allow_nan=False, allow_infinity=False)
    terms = draw(st.lists(st.tuples(ops, coeff), min_size=1, max_size=max_terms))
    return Hamiltonian.from_terms(n, terms)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, filled in by tests/test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1])):
            terminalreporter.write_line(line)
