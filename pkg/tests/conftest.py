"""Shared oracles: dense Kronecker-product matrices and fermionic ladder algebra.

Everything here is deliberately independent of the package's combinatorial
paths: Pauli matrices are built by explicit tensor products, fermionic
operators act on occupation tuples with explicit sign bookkeeping.
"""

import numpy as np
import pytest

from heffsolve.fermion import FermionHamiltonian, FermionTerm, jw_transform
from heffsolve.pauli import BasisState, PauliSum

PAULI_MATRICES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def dense_pauli(label: str) -> np.ndarray:
    """Dense matrix of a Pauli string; qubit 0 is the least significant bit."""
    out = np.array([[1.0 + 0j]])
    for c in reversed(label):
        out = np.kron(out, PAULI_MATRICES[c])
    return out


def dense_sum(hamiltonian: PauliSum) -> np.ndarray:
    dim = 1 << hamiltonian.qubit_count
    out = np.zeros((dim, dim), dtype=complex)
    for w, s in hamiltonian:
        out += w * dense_pauli(s.label)
    return out


def basis_vector(state: BasisState) -> np.ndarray:
    vec = np.zeros(1 << state.num_qubits, dtype=complex)
    vec[state.mask] = 1.0
    return vec


def dense_projection(hamiltonian: PauliSum, states) -> np.ndarray:
    """Brute-force <m|H|n> over a basis list, via the dense matrix."""
    matrix = dense_sum(hamiltonian)
    vectors = np.stack([basis_vector(s) for s in states], axis=1)
    return vectors.conj().T @ matrix @ vectors


# --- independent fermionic oracle -----------------------------------------

def ladder_matrix(mode: int, dagger: bool, num_modes: int) -> np.ndarray:
    """Dense annihilation/creation matrix from occupation-number bookkeeping.

    a_j clears bit j with sign (-1)**(number of occupied modes below j);
    built directly on occupation bit masks, no Pauli algebra involved.
    """
    dim = 1 << num_modes
    out = np.zeros((dim, dim), dtype=complex)
    below = (1 << mode) - 1
    for n in range(dim):
        occupied = bool(n >> mode & 1)
        if occupied == dagger:
            continue
        m = n ^ (1 << mode)
        sign = -1.0 if bin(n & below).count("1") & 1 else 1.0
        out[m, n] = sign
    return out


def dense_fermion(hamiltonian: FermionHamiltonian) -> np.ndarray:
    dim = 1 << hamiltonian.mode_count
    out = np.eye(dim, dtype=complex) * hamiltonian.constant
    for term in hamiltonian.terms:
        product = np.eye(dim, dtype=complex)
        for mode, dagger in term.factors:
            product = product @ ladder_matrix(mode, dagger, hamiltonian.mode_count)
        out += term.coefficient * product
    return out


# --- random instances -------------------------------------------------------

def random_fermion_terms(rng: np.random.Generator, num_modes: int, count: int):
    terms = []
    for _ in range(count):
        kind = int(rng.integers(3 if num_modes >= 4 else 2))
        coeff = float(rng.normal())
        if kind == 0:
            i = int(rng.integers(num_modes))
            terms.append(FermionTerm(coeff, ((i, True), (i, False))))
        elif kind == 1:
            i, j = (int(v) for v in rng.choice(num_modes, 2, replace=False))
            terms.append(FermionTerm(coeff, ((i, True), (j, False))))
            terms.append(FermionTerm(coeff, ((j, True), (i, False))))
        else:
            i, j, k, l = (int(v) for v in rng.choice(num_modes, 4, replace=False))
            terms.append(FermionTerm(coeff, ((i, True), (j, True), (k, False), (l, False))))
            terms.append(FermionTerm(coeff, ((l, True), (k, True), (j, False), (i, False))))
    return terms


def random_conserving_hamiltonian(
    rng: np.random.Generator,
    num_modes: int,
    fermionic_terms: int = 4,
    max_strings: int = 30,
) -> PauliSum:
    """Random Hermitian particle-conserving Pauli sum with a bounded term count."""
    while True:
        terms = random_fermion_terms(rng, num_modes, fermionic_terms)
        mapped = jw_transform(FermionHamiltonian(tuple(terms), num_modes))
        if 0 < mapped.num_terms <= max_strings:
            return mapped


def random_hermitian_sum(rng: np.random.Generator, num_qubits: int, terms: int) -> PauliSum:
    """Random Hermitian Pauli sum without any conservation structure."""
    pairs = []
    for _ in range(terms):
        label = "".join(rng.choice(list("IXYZ"), size=num_qubits))
        pairs.append((float(rng.normal()), label))
    return PauliSum.from_label_weights(pairs, num_qubits)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
