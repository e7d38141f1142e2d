"""Assembly of the effective Hamiltonian from measured matrix elements.

Diagonal entries come from plain basis preparation and Z-basis readout;
off-diagonal entries come from the interference circuits in
:mod:`heffsolve.circuits`.  Only strings containing X or Y are ever measured
for off-diagonal entries (I/Z-only strings cannot connect two different
basis states), and their own diagonal elements vanish identically, so the
recovery reduces to

    Re <n|H|n'> = 2 m_re            Im <n|H|n'> = -2 m_im      (direct)
    Re <n|h|n'> = 4 m_re - 1        Im <n|h|n'> = 1 - 4 m_im   (indirect, per string)

where ``m`` is the measured ancilla-projector expectation of each circuit.
Backends: ``oracle`` (combinatorial, no circuits), ``exact`` (statevector
expectations), ``sampled`` (finite shots, optional readout noise and
calibration-matrix mitigation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls

from .circuits import (
    Circuit,
    ReadoutNoise,
    ShotResult,
    apply_circuit,
    build_indirect_circuit,
    build_offdiagonal_circuit,
    derive_seed,
    marginal_probabilities,
    measurement_rotations,
    parity_values,
    prepare_basis_circuit,
    rng_from_seed,
    run_statevector,
    sample_outcome_counts,
    state_expectation,
)
from .pauli import BasisState, PauliString, PauliSum, classify_terms, sum_matrix_element
from .subspace import SubspaceBasis

__all__ = [
    "Backend",
    "MeasurementEstimate",
    "CalibrationMatrix",
    "CircuitCounts",
    "EffectiveHamiltonian",
    "measure_diagonal",
    "measure_offdiagonal",
    "build_effective_hamiltonian",
    "build_calibration",
    "mitigate",
    "heff_to_dict",
    "heff_matrix_from_dict",
]

_BACKEND_KINDS = ("oracle", "exact", "sampled")
_STYLES = ("direct", "indirect")

# Seed-derivation tags keeping every randomized stage on an independent stream.
_TAG_DIAGONAL = 1
_TAG_OFFDIAGONAL = 2
_TAG_CALIBRATION = 3


@dataclass(frozen=True, slots=True)
class Backend:
    """How matrix elements are evaluated.

    ``oracle`` computes them combinatorially; ``exact`` runs the measurement
    circuits with deterministic statevector expectations; ``sampled`` draws
    finite shots, optionally through a readout-noise channel with
    calibration-matrix mitigation.  Diagonal entries default to the
    classical path even for circuit backends (they are classically trivial);
    ``measure_diagonals_with_circuits`` forces the all-hardware mode.
    """

    kind: str = "oracle"
    shots: int = 8000
    seed: int = 0
    noise: ReadoutNoise | None = None
    mitigation: bool = False
    measurement_style: str = "direct"
    measure_diagonals_with_circuits: bool = False
    calibration_shots: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in _BACKEND_KINDS:
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.measurement_style not in _STYLES:
            raise ValueError(f"unknown measurement style {self.measurement_style!r}")
        if self.kind == "sampled" and self.shots <= 0:
            raise ValueError("sampled backend needs shots > 0")
        if self.noise is not None and self.kind != "sampled":
            raise ValueError("readout noise applies to the sampled backend only")
        if self.mitigation and self.noise is None:
            raise ValueError("mitigation requires a noise model")

    @classmethod
    def oracle(cls) -> "Backend":
        return cls(kind="oracle")

    @classmethod
    def exact(cls, style: str = "direct", **kw) -> "Backend":
        return cls(kind="exact", measurement_style=style, **kw)

    @classmethod
    def sampled(cls, shots: int = 8000, seed: int = 0, style: str = "direct", **kw) -> "Backend":
        return cls(kind="sampled", shots=shots, seed=seed, measurement_style=style, **kw)

    @property
    def uses_circuits(self) -> bool:
        return self.kind != "oracle"

    def describe(self) -> dict:
        noise = None
        if self.noise is not None:
            noise = {"p01": self.noise.p01, "p10": self.noise.p10}
        return {
            "kind": self.kind,
            "shots": self.shots if self.kind == "sampled" else None,
            "seed": self.seed,
            "noise": noise,
            "mitigation": self.mitigation,
            "measurement_style": self.measurement_style if self.uses_circuits else None,
            "measure_diagonals_with_circuits": self.measure_diagonals_with_circuits,
            "calibration_shots": self.calibration_shots,
        }


@dataclass(frozen=True, slots=True)
class MeasurementEstimate:
    """One estimated matrix element and its statistical pedigree.

    Raw histograms stay at the single-observable level (:class:`ShotResult`
    from :func:`heffsolve.circuits.sample`); per-entry aggregation keeps the
    shot and circuit totals with the propagated standard errors.
    """

    value: complex
    stderr_re: float = 0.0
    stderr_im: float = 0.0
    shots: int = 0
    circuits: int = 0
    executions: int = 0

    @property
    def variance_re(self) -> float:
        return self.stderr_re * self.stderr_re

    @property
    def variance_im(self) -> float:
        return self.stderr_im * self.stderr_im


@dataclass(frozen=True, slots=True)
class CalibrationMatrix:
    """Per-qubit 2x2 column-stochastic confusion matrices (composite = tensor product)."""

    matrices: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        for m in self.matrices:
            if m.shape != (2, 2):
                raise ValueError("calibration matrices must be 2x2")
            if not np.allclose(m.sum(axis=0), 1.0, atol=1e-9):
                raise ValueError("calibration matrix columns must sum to 1")
            if abs(np.linalg.det(m)) < 1e-9:
                raise ValueError("singular calibration matrix")

    def matrix_for(self, qubit: int) -> np.ndarray:
        return self.matrices[qubit]

    def composite(self, qubits) -> np.ndarray:
        out = np.array([[1.0]])
        for q in reversed(tuple(qubits)):
            out = np.kron(out, self.matrices[q])
        return out


@dataclass(slots=True)
class CircuitCounts:
    """Execution accounting for one effective-Hamiltonian build.

    ``diagonal``/``offdiagonal_*`` count circuits at per-(state) and
    per-(pair, part) granularity; ``string_executions`` counts individual
    string-level measurement settings within them.
    """

    diagonal: int = 0
    offdiagonal_real: int = 0
    offdiagonal_imag: int = 0
    string_executions: int = 0
    total_shots: int = 0

    @property
    def offdiagonal(self) -> int:
        return self.offdiagonal_real + self.offdiagonal_imag

    def as_dict(self) -> dict:
        return {
            "diagonal": self.diagonal,
            "offdiagonal_real": self.offdiagonal_real,
            "offdiagonal_imag": self.offdiagonal_imag,
            "offdiagonal_total": self.offdiagonal,
            "string_executions": self.string_executions,
            "total_shots": self.total_shots,
        }


@dataclass(slots=True)
class EffectiveHamiltonian:
    """The projected Hamiltonian over a subspace basis, exactly Hermitian."""

    basis: SubspaceBasis
    matrix: np.ndarray
    estimates: dict[tuple[int, int], MeasurementEstimate]
    backend: Backend
    circuit_counts: CircuitCounts

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


# ---------------------------------------------------------------------------
# Calibration and mitigation
# ---------------------------------------------------------------------------

def build_calibration(
    noise: ReadoutNoise,
    shots: int | None,
    seed: int,
    qubit_count: int,
) -> CalibrationMatrix:
    """Estimate per-qubit confusion matrices from calibration preparations.

    For every wire, ``|0>`` and ``|1>`` are prepared and read ``shots`` times
    through the flip channel; observed frequencies fill the columns.
    ``shots=None`` returns the exact (infinite-shot) matrices.
    """
    matrices = []
    for q in range(qubit_count):
        p01, p10 = noise.for_qubit(q)
        if shots is None:
            matrices.append(np.array([[1 - p01, p10], [p01, 1 - p10]]))
            continue
        if shots <= 0:
            raise ValueError("calibration shots must be positive")
        rng0 = rng_from_seed(derive_seed(seed, _TAG_CALIBRATION, q, 0))
        rng1 = rng_from_seed(derive_seed(seed, _TAG_CALIBRATION, q, 1))
        ones_from_zero = int(rng0.binomial(shots, p01)) if p01 > 0 else 0
        zeros_from_one = int(rng1.binomial(shots, p10)) if p10 > 0 else 0
        matrices.append(
            np.array(
                [
                    [(shots - ones_from_zero) / shots, zeros_from_one / shots],
                    [ones_from_zero / shots, (shots - zeros_from_one) / shots],
                ]
            )
        )
    return CalibrationMatrix(tuple(matrices))


_NNLS_MAX_DIM = 4096


def _mitigate_probabilities(
    weights: np.ndarray, calibration: CalibrationMatrix, qubits
) -> np.ndarray:
    """Solve ``cal @ p = observed`` for a nonnegative normalized ``p``.

    The tensor-structured linear inversion is tried first; when it is already
    nonnegative it coincides with the nonnegative least-squares solution.
    Otherwise NNLS runs on the dense composite matrix.
    """
    qubits = tuple(qubits)
    num = len(qubits)
    observed = weights / weights.sum()
    solved = observed.reshape([2] * num)
    for j, q in enumerate(qubits):
        axis = num - 1 - j
        inverse = np.linalg.inv(calibration.matrix_for(q))
        solved = np.moveaxis(np.tensordot(inverse, solved, axes=([1], [axis])), 0, axis)
    solved = solved.reshape(-1)
    if solved.min() < -1e-9:
        if solved.shape[0] > _NNLS_MAX_DIM:
            raise ValueError(
                f"NNLS fallback needs a dense {solved.shape[0]}-dim calibration matrix; too large"
            )
        solved, _ = nnls(calibration.composite(qubits), observed)
    solved = np.clip(solved, 0.0, None)
    total = solved.sum()
    if total <= 0.0:
        raise ValueError("mitigated distribution vanished")
    return solved / total


def mitigate(
    counts: ShotResult, calibration: CalibrationMatrix, qubits=None
) -> dict[str, float]:
    """Correct a measured histogram through the calibration matrix.

    Returns the corrected distribution keyed like the input bit strings; it
    feeds the same parity estimators as raw counts.
    """
    num_bits = len(next(iter(counts.counts)))
    if qubits is None:
        qubits = tuple(range(num_bits))
    vec = counts.counts_vector(num_bits).astype(float)
    corrected = _mitigate_probabilities(vec, calibration, qubits)
    out: dict[str, float] = {}
    for outcome in np.flatnonzero(corrected > 0):
        bits = "".join("1" if outcome >> j & 1 else "0" for j in range(num_bits))
        out[bits] = float(corrected[outcome])
    return out


# ---------------------------------------------------------------------------
# Matrix-element measurement
# ---------------------------------------------------------------------------

def _mean_and_variance(weights: np.ndarray, values: np.ndarray, shots: int) -> tuple[float, float]:
    freq = weights / weights.sum()
    mean = float(freq @ values)
    second = float(freq @ (values * values))
    return mean, max(second - mean * mean, 0.0) / shots


def _inverse_transposed_values(
    values: np.ndarray, calibration: CalibrationMatrix, qubits
) -> np.ndarray:
    """Per-outcome values pulled back through the calibration inverse.

    The mitigated mean is a linear functional of the raw counts,
    ``u^T c / shots`` with ``u = (A^-1)^T v``, so ``u`` is what the raw
    sampling variance acts on.
    """
    qubits = tuple(qubits)
    num = len(qubits)
    out = values.reshape([2] * num)
    for j, q in enumerate(qubits):
        axis = num - 1 - j
        pullback = np.linalg.inv(calibration.matrix_for(q)).T
        out = np.moveaxis(np.tensordot(pullback, out, axes=([1], [axis])), 0, axis)
    return out.reshape(-1)


def _sampled_estimate(
    probs: np.ndarray,
    values: np.ndarray,
    backend: Backend,
    seed: int,
    qubits,
    calibration: CalibrationMatrix | None,
) -> tuple[float, float]:
    """Sample one histogram and estimate ``E[values]`` with its variance.

    Under mitigation the mean comes from the corrected distribution while the
    variance is evaluated on the raw counts with the pulled-back values, which
    accounts for the amplification introduced by inverting the channel.
    """
    rng = rng_from_seed(seed)
    counts = sample_outcome_counts(probs, backend.shots, rng, backend.noise, tuple(qubits))
    weights = counts.astype(float)
    if not backend.mitigation:
        return _mean_and_variance(weights, values, backend.shots)
    if calibration is None:
        raise ValueError("mitigation requested but no calibration supplied")
    corrected = _mitigate_probabilities(weights, calibration, qubits)
    mean = float(corrected @ values)
    pulled_back = _inverse_transposed_values(values, calibration, qubits)
    _, variance = _mean_and_variance(weights, pulled_back, backend.shots)
    return mean, variance


def measure_diagonal(
    hamiltonian: PauliSum,
    n: BasisState,
    backend: Backend,
    calibration: CalibrationMatrix | None = None,
    seed: int | None = None,
) -> MeasurementEstimate:
    """Estimate ``<n|H|n>``.

    The classical path evaluates the sum combinatorially.  The circuit path
    prepares ``|n>`` with X gates and reads every I/Z-only string from the
    Z-basis histogram; strings containing X or Y have identically zero
    diagonal elements and are skipped.
    """
    if not backend.uses_circuits or not backend.measure_diagonals_with_circuits:
        value = sum_matrix_element(n, hamiltonian, n).real
        return MeasurementEstimate(complex(value))
    diagonal_part, _ = classify_terms(hamiltonian)
    num = n.num_qubits
    circuit = prepare_basis_circuit(n)
    if backend.kind == "exact":
        state = run_statevector(circuit)
        value = sum(
            w.real * state_expectation(state, s) for w, s in diagonal_part
        )
        return MeasurementEstimate(complex(value), circuits=1, executions=diagonal_part.num_terms)
    # sampled: one Z-basis histogram serves every diagonal string
    probs = marginal_probabilities(run_statevector(circuit), num, circuit.measured)
    if seed is None:
        seed = derive_seed(backend.seed, _TAG_DIAGONAL, n.mask)
    values = np.zeros(probs.shape[0])
    for w, s in diagonal_part:
        values += w.real * parity_values(num, s.z_mask)
    mean, var = _sampled_estimate(probs, values, backend, seed, circuit.measured, calibration)
    return MeasurementEstimate(
        complex(mean),
        stderr_re=math.sqrt(var),
        shots=backend.shots,
        circuits=1,
        executions=diagonal_part.num_terms,
    )


def _offdiagonal_direct(
    offdiag: PauliSum,
    n: BasisState,
    nprime: BasisState,
    backend: Backend,
    calibration: CalibrationMatrix | None,
) -> tuple[complex, float, float, CircuitCounts]:
    """Recovered ``<n|H_offdiag|n'>`` from the single-ancilla circuits.

    Per part the circuit expectation is ``m = sum_s lambda_s q_s`` with
    ``q_s = (<I (x) h_s> + <Z_anc (x) h_s>)/2``, read from the rotated
    histogram as the string-support parity gated on the ancilla reading 0;
    the recovery is ``Re = 2 m_re`` and ``Im = -2 m_im``.
    """
    num = n.num_qubits
    anc_bit = 1 << num
    counts = CircuitCounts()
    m_part: dict[str, float] = {}
    var_part: dict[str, float] = {}
    for part in ("real", "imag"):
        circuit = build_offdiagonal_circuit(n, nprime, part)
        base_state = run_statevector(circuit)
        if part == "real":
            counts.offdiagonal_real += 1
        else:
            counts.offdiagonal_imag += 1
        m_total = 0.0
        var_total = 0.0
        for s_index, (w, s) in enumerate(offdiag.terms):
            counts.string_executions += 1
            if backend.kind == "exact":
                q = 0.5 * (
                    state_expectation(base_state, PauliString(s.label + "I"))
                    + state_expectation(base_state, PauliString(s.label + "Z"))
                )
                m_total += w.real * q
                continue
            rotated = apply_circuit(
                base_state, Circuit(num + 1, measurement_rotations(s))
            )
            probs = marginal_probabilities(rotated, num + 1, circuit.measured)
            seed = derive_seed(
                backend.seed, _TAG_OFFDIAGONAL, n.mask, nprime.mask,
                0 if part == "real" else 1, s_index,
            )
            support = sum(1 << q_idx for q_idx in s.support())
            values = parity_values(num + 1, support)
            idx = np.arange(values.shape[0])
            values = values * ((idx & anc_bit) == 0)
            q_mean, q_var = _sampled_estimate(
                probs, values, backend, seed, circuit.measured, calibration
            )
            m_total += w.real * q_mean
            var_total += (w.real ** 2) * q_var
            counts.total_shots += backend.shots
        m_part[part] = m_total
        var_part[part] = var_total
    value = complex(2.0 * m_part["real"], -2.0 * m_part["imag"])
    return value, 4.0 * var_part["real"], 4.0 * var_part["imag"], counts


def _offdiagonal_indirect(
    offdiag: PauliSum,
    n: BasisState,
    nprime: BasisState,
    backend: Backend,
    calibration: CalibrationMatrix | None,
) -> tuple[complex, float, float, CircuitCounts]:
    """Recovered ``<n|H_offdiag|n'>`` from the two-ancilla per-string circuits.

    ``m_s`` is the probability that both ancillas read 0; since every
    measured string flips bits its own diagonal elements vanish, leaving
    ``Re_s = 4 m_s - 1`` on the real circuit and ``Im_s = 1 - 4 m_s`` on the
    imaginary one.
    """
    num = n.num_qubits
    ancilla_bits = (1 << num) | (1 << (num + 1))
    counts = CircuitCounts()
    totals = {"real": 0.0, "imag": 0.0}
    variances = {"real": 0.0, "imag": 0.0}
    for part in ("real", "imag"):
        for s_index, (w, s) in enumerate(offdiag.terms):
            circuit = build_indirect_circuit(n, nprime, s, part)
            if part == "real":
                counts.offdiagonal_real += 1
            else:
                counts.offdiagonal_imag += 1
            counts.string_executions += 1
            probs = marginal_probabilities(
                run_statevector(circuit), num + 2, circuit.measured
            )
            idx = np.arange(probs.shape[0])
            values = ((idx & ancilla_bits) == 0).astype(float)
            if backend.kind == "exact":
                m_s, v_s = float(probs @ values), 0.0
            else:
                seed = derive_seed(
                    backend.seed, _TAG_OFFDIAGONAL, n.mask, nprime.mask,
                    2 if part == "real" else 3, s_index,
                )
                m_s, v_s = _sampled_estimate(
                    probs, values, backend, seed, circuit.measured, calibration
                )
                counts.total_shots += backend.shots
            recovered = 4.0 * m_s - 1.0
            totals[part] += w.real * (recovered if part == "real" else -recovered)
            variances[part] += (w.real ** 2) * 16.0 * v_s
    value = complex(totals["real"], totals["imag"])
    return value, variances["real"], variances["imag"], counts


def measure_offdiagonal(
    hamiltonian: PauliSum,
    n: BasisState,
    nprime: BasisState,
    backend: Backend,
    diag_n: MeasurementEstimate | float | None = None,
    diag_nprime: MeasurementEstimate | float | None = None,
    calibration: CalibrationMatrix | None = None,
) -> MeasurementEstimate:
    """Estimate the complex element ``<n|H|n'>`` for ``n != n'``.

    Only the off-diagonal-classified strings are measured; substituting the
    (identically zero) diagonal elements of that operator into the recovery
    leaves ``Re = 2 m_re`` and ``Im = -2 m_im``.  The reported standard errors
    propagate the circuit variance together with the supplied diagonal
    estimates' variances, treating the circuits as independent.
    """
    if n == nprime:
        raise ValueError("off-diagonal measurement needs two distinct states")
    if backend.kind == "oracle":
        return MeasurementEstimate(sum_matrix_element(n, hamiltonian, nprime))
    if backend.uses_circuits and (diag_n is None or diag_nprime is None):
        raise ValueError("circuit backends need both diagonal estimates")
    _, offdiag = classify_terms(hamiltonian)
    if offdiag.num_terms == 0:
        return MeasurementEstimate(0j)
    if backend.measurement_style == "direct":
        value, var_re, var_im, counts = _offdiagonal_direct(
            offdiag, n, nprime, backend, calibration
        )
    else:
        value, var_re, var_im, counts = _offdiagonal_indirect(
            offdiag, n, nprime, backend, calibration
        )

    def _variance(d) -> float:
        if isinstance(d, MeasurementEstimate):
            return d.variance_re
        return 0.0

    diag_var = 0.25 * (_variance(diag_n) + _variance(diag_nprime))
    stderr_re = math.sqrt(var_re + diag_var)
    stderr_im = math.sqrt(var_im + diag_var)
    return MeasurementEstimate(
        value,
        stderr_re=stderr_re,
        stderr_im=stderr_im,
        shots=counts.total_shots,
        circuits=counts.offdiagonal,
        executions=counts.string_executions,
    )


def build_effective_hamiltonian(
    hamiltonian: PauliSum,
    basis: SubspaceBasis,
    backend: Backend,
) -> EffectiveHamiltonian:
    """Measure all entries of the projection of ``H`` onto ``basis``.

    ``size`` diagonal entries plus one complex estimate per unordered pair
    fill the upper triangle; the lower triangle is the conjugate transpose
    and a final ``(M + M^dagger)/2`` pass makes Hermiticity exact.
    """
    hamiltonian = hamiltonian.real_weights()
    states = basis.states
    size = len(states)
    calibration = None
    if backend.mitigation:
        calibration = build_calibration(
            backend.noise,
            backend.calibration_shots if backend.calibration_shots is not None else backend.shots,
            backend.seed,
            qubit_count=hamiltonian.qubit_count + 2,
        )
    matrix = np.zeros((size, size), dtype=complex)
    estimates: dict[tuple[int, int], MeasurementEstimate] = {}
    totals = CircuitCounts()
    diagonals: list[MeasurementEstimate] = []
    for i, state in enumerate(states):
        est = measure_diagonal(hamiltonian, state, backend, calibration)
        diagonals.append(est)
        estimates[(i, i)] = est
        matrix[i, i] = est.value.real
        totals.diagonal += est.circuits
        totals.string_executions += est.executions
        totals.total_shots += est.shots
    for i in range(size):
        for j in range(i + 1, size):
            est = measure_offdiagonal(
                hamiltonian, states[i], states[j], backend,
                diagonals[i], diagonals[j], calibration,
            )
            estimates[(i, j)] = est
            matrix[i, j] = est.value
            matrix[j, i] = est.value.conjugate()
            totals.offdiagonal_real += est.circuits // 2
            totals.offdiagonal_imag += est.circuits - est.circuits // 2
            totals.string_executions += est.executions
            totals.total_shots += est.shots
    matrix = 0.5 * (matrix + matrix.conj().T)
    return EffectiveHamiltonian(basis, matrix, estimates, backend, totals)


# ---------------------------------------------------------------------------
# JSON form
# ---------------------------------------------------------------------------

def heff_to_dict(heff: EffectiveHamiltonian) -> dict:
    """JSON-ready description: basis, complex matrix, per-entry statistics."""
    entries = []
    for (i, j), est in sorted(heff.estimates.items()):
        entries.append(
            {
                "row": i,
                "col": j,
                "shots": est.shots,
                "stderr_re": est.stderr_re,
                "stderr_im": est.stderr_im,
                "circuits": est.circuits,
            }
        )
    return {
        "format": "heffsolve-heff-v1",
        "qubit_count": heff.basis.reference.num_qubits,
        "reference": heff.basis.reference.bits,
        "basis": [s.bits for s in heff.basis.states],
        "diagonal_energies": list(heff.basis.diagonal_energies),
        "matrix": [[[v.real, v.imag] for v in row] for row in heff.matrix],
        "entries": entries,
        "backend": heff.backend.describe(),
        "circuit_counts": heff.circuit_counts.as_dict(),
    }


def heff_matrix_from_dict(payload: dict) -> tuple[list[BasisState], np.ndarray]:
    """Recover (basis states, complex matrix) from the JSON form."""
    states = [BasisState(bits) for bits in payload["basis"]]
    matrix = np.array(
        [[complex(re, im) for re, im in row] for row in payload["matrix"]], dtype=complex
    )
    return states, matrix
