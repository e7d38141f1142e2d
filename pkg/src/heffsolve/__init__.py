"""heffsolve: non-variational hybrid eigensolver.

Projects a fermionic/qubit Hamiltonian onto a selected set of computational
basis states by simulating ancilla-based interference measurement circuits,
assembles the resulting effective Hamiltonian matrix, and diagonalizes it
classically for ground- and excited-state energies and densities of states.
"""

from .pauli import (
    BasisState,
    PauliOp,
    PauliString,
    PauliSum,
    apply_string,
    classify_terms,
    load_pauli_sum,
    multiply_strings,
    save_pauli_sum,
    string_matrix_element,
    sum_matrix_element,
)
from .fermion import (
    FermionHamiltonian,
    FermionTerm,
    check_particle_conservation,
    jw_ladder,
    jw_transform,
    load_fermion_hamiltonian,
    save_fermion_hamiltonian,
)
from .subspace import (
    ExhaustiveSearch,
    MonteCarloSearch,
    SubspaceBasis,
    SubspaceSpec,
    build_subspace,
    enumerate_excitations,
    find_reference,
)
from .circuits import (
    Circuit,
    Gate,
    ReadoutNoise,
    ShotResult,
    build_indirect_circuit,
    build_offdiagonal_circuit,
    controlled_prepare,
    exact_expectation,
    run_statevector,
    sample,
)
from .estimator import (
    Backend,
    CalibrationMatrix,
    EffectiveHamiltonian,
    MeasurementEstimate,
    build_calibration,
    build_effective_hamiltonian,
    measure_diagonal,
    measure_offdiagonal,
    mitigate,
)
from .spectra import (
    CapacityError,
    DosHistogram,
    Spectrum,
    dos,
    eigendecompose,
    exact_sector_spectrum,
    jacobi_eigh,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "BasisState", "PauliOp", "PauliString", "PauliSum",
    "apply_string", "classify_terms", "multiply_strings",
    "string_matrix_element", "sum_matrix_element",
    "load_pauli_sum", "save_pauli_sum",
    "FermionHamiltonian", "FermionTerm", "check_particle_conservation",
    "jw_ladder", "jw_transform", "load_fermion_hamiltonian", "save_fermion_hamiltonian",
    "ExhaustiveSearch", "MonteCarloSearch", "SubspaceBasis", "SubspaceSpec",
    "build_subspace", "enumerate_excitations", "find_reference",
    "Circuit", "Gate", "ReadoutNoise", "ShotResult",
    "build_indirect_circuit", "build_offdiagonal_circuit", "controlled_prepare",
    "exact_expectation", "run_statevector", "sample",
    "Backend", "CalibrationMatrix", "EffectiveHamiltonian", "MeasurementEstimate",
    "build_calibration", "build_effective_hamiltonian",
    "measure_diagonal", "measure_offdiagonal", "mitigate",
    "CapacityError", "DosHistogram", "Spectrum",
    "dos", "eigendecompose", "exact_sector_spectrum", "jacobi_eigh",
]
