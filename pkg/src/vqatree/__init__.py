"""Tree-structured shot-frugal optimization of families of related variational problems."""

from .pauli import Hamiltonian, PauliString, build_padded_set, load_hamiltonian, save_hamiltonian
from .engine import RunConfig, RunRecord, run

__version__ = "0.1.0"

__all__ = [
    "Hamiltonian",
    "PauliString",
    "RunConfig",
    "RunRecord",
    "build_padded_set",
    "load_hamiltonian",
    "run",
    "save_hamiltonian",
]
