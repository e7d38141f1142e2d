"""Effective-Hamiltonian assembly: backends, calibration, mitigation."""

import json
from math import comb

import numpy as np
import pytest

from heffsolve.circuits import ReadoutNoise, ShotResult
from heffsolve.estimator import (
    Backend,
    CalibrationMatrix,
    MeasurementEstimate,
    build_calibration,
    build_effective_hamiltonian,
    heff_matrix_from_dict,
    heff_to_dict,
    measure_diagonal,
    measure_offdiagonal,
    mitigate,
    _mitigate_probabilities,
)
from heffsolve.pauli import BasisState, PauliSum, sum_matrix_element
from heffsolve.spectra import eigendecompose
from heffsolve.subspace import SubspaceSpec, basis_from_states, build_subspace

from conftest import dense_projection, random_conserving_hamiltonian

SECTOR_BASES = [BasisState(b) for b in ("1100", "1010", "1001", "0110", "0101", "0011")]


def two_particle_basis(hamiltonian):
    return basis_from_states(hamiltonian, SECTOR_BASES)


class TestBackendType:
    def test_default_shot_budget(self):
        assert Backend.sampled().shots == 8000

    def test_validation(self):
        with pytest.raises(ValueError):
            Backend(kind="quantum")
        with pytest.raises(ValueError):
            Backend(kind="sampled", shots=0)
        with pytest.raises(ValueError):
            Backend(kind="exact", noise=ReadoutNoise(0.1, 0.1))
        with pytest.raises(ValueError):
            Backend(kind="sampled", mitigation=True)

    def test_describe_round_trips_through_json(self):
        backend = Backend.sampled(noise=ReadoutNoise(0.02, 0.02), mitigation=True)
        assert json.loads(json.dumps(backend.describe()))["mitigation"] is True


class TestMeasureDiagonal:
    def test_single_z_term_all_backends(self):
        hamiltonian = PauliSum.from_label_weights([(0.8, "ZIII")])
        n = BasisState("1000")
        for backend in (
            Backend.oracle(),
            Backend.exact(measure_diagonals_with_circuits=True),
            Backend.sampled(seed=5, measure_diagonals_with_circuits=True),
        ):
            estimate = measure_diagonal(hamiltonian, n, backend)
            assert estimate.value.real == pytest.approx(-0.8, abs=1e-12)

    def test_flip_strings_are_skipped(self):
        hamiltonian = PauliSum.from_label_weights(
            [(0.5, "ZIII"), (0.7, "YXXY"), (0.2, "IIII")]
        )
        backend = Backend.exact(measure_diagonals_with_circuits=True)
        estimate = measure_diagonal(hamiltonian, BasisState("1100"), backend)
        assert estimate.executions == 2  # ZIII and IIII only
        assert estimate.value.real == pytest.approx(-0.3)

    def test_classical_default_even_when_sampled(self):
        hamiltonian = PauliSum.from_label_weights([(0.5, "ZIII")])
        estimate = measure_diagonal(hamiltonian, BasisState("1000"), Backend.sampled(seed=1))
        assert estimate.circuits == 0 and estimate.stderr_re == 0.0

    def test_sampled_noisy_within_four_stderr(self, rng):
        hamiltonian = random_conserving_hamiltonian(rng, 4)
        n = BasisState("1100")
        oracle = sum_matrix_element(n, hamiltonian, n).real
        noise = ReadoutNoise(0.01, 0.01)
        hits = 0
        for seed in range(20):
            backend = Backend.sampled(
                seed=seed, noise=noise, mitigation=True,
                measure_diagonals_with_circuits=True,
            )
            calibration = build_calibration(noise, None, seed, 6)
            estimate = measure_diagonal(hamiltonian, n, backend, calibration)
            if abs(estimate.value.real - oracle) <= 4 * max(estimate.stderr_re, 1e-4):
                hits += 1
        assert hits >= 19


class TestMeasureOffdiagonal:
    def test_matches_oracle_on_all_pairs(self, rng):
        hamiltonian = random_conserving_hamiltonian(rng, 4)
        diag = {
            s.bits: measure_diagonal(hamiltonian, s, Backend.oracle()) for s in SECTOR_BASES
        }
        for style in ("direct", "indirect"):
            backend = Backend.exact(style=style)
            for i in range(6):
                for j in range(i + 1, 6):
                    n, nprime = SECTOR_BASES[i], SECTOR_BASES[j]
                    estimate = measure_offdiagonal(
                        hamiltonian, n, nprime, backend, diag[n.bits], diag[nprime.bits]
                    )
                    oracle = sum_matrix_element(n, hamiltonian, nprime)
                    assert estimate.value == pytest.approx(oracle, abs=1e-10)

    def test_popcount_changing_pair_is_zero(self, rng):
        hamiltonian = random_conserving_hamiltonian(rng, 4)
        n, nprime = BasisState("1100"), BasisState("1110")
        backend = Backend.exact()
        zero = MeasurementEstimate(0j)
        estimate = measure_offdiagonal(hamiltonian, n, nprime, backend, zero, zero)
        assert abs(estimate.value) < 1e-10

    def test_lone_string_pair(self):
        hamiltonian = PauliSum.from_label_weights([(1.0, "YXXY")])
        zero = MeasurementEstimate(0j)
        estimate = measure_offdiagonal(
            hamiltonian, BasisState("0110"), BasisState("1001"), Backend.exact(), zero, zero
        )
        assert estimate.value == pytest.approx(-1.0 + 0j, abs=1e-12)

    def test_requires_distinct_states(self):
        hamiltonian = PauliSum.from_label_weights([(1.0, "YXXY")])
        with pytest.raises(ValueError, match="distinct"):
            measure_offdiagonal(
                hamiltonian, BasisState("0110"), BasisState("0110"), Backend.oracle()
            )

    def test_requires_diagonals_for_circuits(self):
        hamiltonian = PauliSum.from_label_weights([(1.0, "YXXY")])
        with pytest.raises(ValueError, match="diagonal"):
            measure_offdiagonal(
                hamiltonian, BasisState("0110"), BasisState("1001"), Backend.exact()
            )

    def test_diagonal_variances_propagate(self):
        hamiltonian = PauliSum.from_label_weights([(1.0, "YXXY")])
        noisy_diag = MeasurementEstimate(0j, stderr_re=0.1)
        estimate = measure_offdiagonal(
            hamiltonian, BasisState("0110"), BasisState("1001"), Backend.exact(),
            noisy_diag, noisy_diag,
        )
        # sqrt(4 var(m) + 0.25 var(d) + 0.25 var(d)) with var(m) = 0
        assert estimate.stderr_re == pytest.approx(np.sqrt(0.005))


class TestBuildEffectiveHamiltonian:
    def test_single_state_basis(self, rng):
        hamiltonian = random_conserving_hamiltonian(rng, 4)
        basis = build_subspace(hamiltonian, SubspaceSpec(2, 0))
        heff = build_effective_hamiltonian(hamiltonian, basis, Backend.oracle())
        assert heff.matrix.shape == (1, 1)
        expected = sum_matrix_element(basis.reference, hamiltonian, basis.reference)
        assert heff.matrix[0, 0] == pytest.approx(expected, abs=1e-12)

    def test_oracle_equals_dense_projection(self, rng):
        hamiltonian = random_conserving_hamiltonian(rng, 4)
        basis = two_particle_basis(hamiltonian)
        heff = build_effective_hamiltonian(hamiltonian, basis, Backend.oracle())
        assert np.allclose(heff.matrix, dense_projection(hamiltonian, basis.states), atol=1e-12)

    def test_exact_circuit_equals_oracle_both_styles(self, rng):
        hamiltonian = random_conserving_hamiltonian(rng, 4)
        basis = two_particle_basis(hamiltonian)
        oracle = build_effective_hamiltonian(hamiltonian, basis, Backend.oracle())
        for style in ("direct", "indirect"):
            exact = build_effective_hamiltonian(hamiltonian, basis, Backend.exact(style=style))
            assert np.abs(exact.matrix - oracle.matrix).max() < 1e-10

    def test_exactly_hermitian(self, rng):
        hamiltonian = random_conserving_hamiltonian(rng, 4)
        basis = two_particle_basis(hamiltonian)
        heff = build_effective_hamiltonian(hamiltonian, basis, Backend.sampled(seed=3))
        assert np.array_equal(heff.matrix, heff.matrix.conj().T)
        assert np.allclose(heff.matrix.diagonal().imag, 0.0)

    def test_circuit_count_closed_form(self, rng):
        hamiltonian = random_conserving_hamiltonian(rng, 4)
        basis = two_particle_basis(hamiltonian)
        backend = Backend.exact(measure_diagonals_with_circuits=True)
        heff = build_effective_hamiltonian(hamiltonian, basis, backend)
        size = basis.size
        counts = heff.circuit_counts
        assert counts.diagonal == size
        assert counts.offdiagonal_real == comb(size, 2)
        assert counts.offdiagonal_imag == comb(size, 2)
        assert counts.offdiagonal == 2 * comb(size, 2)

    def test_indirect_counts_scale_with_strings(self, rng):
        hamiltonian = random_conserving_hamiltonian(rng, 4)
        basis = two_particle_basis(hamiltonian)
        heff = build_effective_hamiltonian(hamiltonian, basis, Backend.exact(style="indirect"))
        n_off = sum(1 for _, s in hamiltonian if not s.is_diagonal())
        assert heff.circuit_counts.offdiagonal == 2 * comb(basis.size, 2) * n_off

    def test_rephasing_leaves_spectrum_invariant(self, rng):
        hamiltonian = random_conserving_hamiltonian(rng, 4)
        basis = two_particle_basis(hamiltonian)
        heff = build_effective_hamiltonian(hamiltonian, basis, Backend.oracle())
        phases = np.exp(1j * rng.uniform(0, 2 * np.pi, size=basis.size))
        conjugated = np.diag(phases.conj()) @ heff.matrix @ np.diag(phases)
        original = eigendecompose(heff).eigenvalues
        rotated = eigendecompose(conjugated).eigenvalues
        assert np.allclose(original, rotated, atol=1e-10)

    def test_basis_reordering_leaves_spectrum_invariant(self, rng):
        hamiltonian = random_conserving_hamiltonian(rng, 4)
        basis = two_particle_basis(hamiltonian)
        shuffled = basis_from_states(
            hamiltonian, [SECTOR_BASES[k] for k in (3, 0, 5, 1, 4, 2)]
        )
        original = build_effective_hamiltonian(hamiltonian, basis, Backend.oracle())
        permuted = build_effective_hamiltonian(hamiltonian, shuffled, Backend.oracle())
        assert np.allclose(
            eigendecompose(original).eigenvalues,
            eigendecompose(permuted).eigenvalues,
            atol=1e-10,
        )

    def test_sampled_reproducible(self, rng):
        hamiltonian = random_conserving_hamiltonian(rng, 4)
        basis = two_particle_basis(hamiltonian)
        backend = Backend.sampled(seed=17)
        first = build_effective_hamiltonian(hamiltonian, basis, backend)
        second = build_effective_hamiltonian(hamiltonian, basis, backend)
        assert np.array_equal(first.matrix, second.matrix)

    def test_non_hermitian_input_rejected(self):
        lopsided = PauliSum.from_label_weights([(1j, "XXII")])
        basis = basis_from_states(
            PauliSum.from_label_weights([(1.0, "IIII")]), SECTOR_BASES
        )
        with pytest.raises(ValueError, match="Hermitian"):
            build_effective_hamiltonian(lopsided, basis, Backend.oracle())


class TestCalibration:
    def test_exact_matrices(self):
        noise = ReadoutNoise(0.03, 0.08)
        calibration = build_calibration(noise, None, 0, 2)
        assert np.allclose(calibration.matrix_for(0), [[0.97, 0.08], [0.03, 0.92]])

    def test_zero_noise_estimates_identity(self):
        calibration = build_calibration(ReadoutNoise(0.0, 0.0), 4000, 0, 3)
        for q in range(3):
            assert np.allclose(calibration.matrix_for(q), np.eye(2))

    def test_estimated_entries_within_binomial_error(self):
        noise = ReadoutNoise(0.02, 0.02)
        shots = 8000
        bound = 4 * np.sqrt(0.02 * 0.98 / shots)
        for seed in range(10):
            calibration = build_calibration(noise, shots, seed, 1)
            matrix = calibration.matrix_for(0)
            assert abs(matrix[1, 0] - 0.02) <= bound
            assert abs(matrix[0, 1] - 0.02) <= bound

    def test_columns_validated(self):
        with pytest.raises(ValueError, match="sum to 1"):
            CalibrationMatrix((np.array([[0.9, 0.1], [0.2, 0.9]]),))

    def test_composite_is_tensor_product(self):
        noise = ReadoutNoise((0.1, 0.2), 0.0)
        calibration = build_calibration(noise, None, 0, 2)
        composite = calibration.composite((0, 1))
        expected = np.kron(calibration.matrix_for(1), calibration.matrix_for(0))
        assert np.allclose(composite, expected)


class TestMitigation:
    def test_identity_calibration_is_noop(self):
        calibration = CalibrationMatrix((np.eye(2), np.eye(2)))
        result = ShotResult({"00": 70, "10": 30}, 100, seed=0)
        corrected = mitigate(result, calibration)
        assert corrected == pytest.approx({"00": 0.7, "10": 0.3})

    def test_exact_inversion_recovers_noiseless_distribution(self):
        noise = ReadoutNoise(0.04, 0.07)
        calibration = build_calibration(noise, None, 0, 2)
        clean = np.array([0.5, 0.0, 0.25, 0.25])
        channel = calibration.composite((0, 1))
        observed = channel @ clean
        recovered = _mitigate_probabilities(observed, calibration, (0, 1))
        assert np.allclose(recovered, clean, atol=1e-12)

    def test_nnls_fallback_on_infeasible_counts(self):
        # a pure |0> histogram under symmetric noise makes plain inversion negative
        calibration = CalibrationMatrix((np.array([[0.7, 0.3], [0.3, 0.7]]),))
        recovered = _mitigate_probabilities(np.array([1.0, 0.0]), calibration, (0,))
        assert recovered.min() >= 0.0
        assert recovered.sum() == pytest.approx(1.0)
        assert recovered[0] == pytest.approx(1.0)

    def test_mitigation_improves_noisy_diagonal(self, rng):
        hamiltonian = random_conserving_hamiltonian(rng, 4)
        n = BasisState("1100")
        oracle = sum_matrix_element(n, hamiltonian, n).real
        noise = ReadoutNoise(0.02, 0.02)
        calibration = build_calibration(noise, None, 0, 6)
        wins = 0
        trials = 30
        for seed in range(trials):
            raw = measure_diagonal(
                hamiltonian, n,
                Backend.sampled(seed=seed, noise=noise, measure_diagonals_with_circuits=True),
            )
            fixed = measure_diagonal(
                hamiltonian, n,
                Backend.sampled(
                    seed=seed, noise=noise, mitigation=True,
                    measure_diagonals_with_circuits=True,
                ),
                calibration,
            )
            if abs(fixed.value.real - oracle) < abs(raw.value.real - oracle):
                wins += 1
        assert wins >= int(0.8 * trials)


class TestHeffJson:
    def test_round_trip(self, rng):
        hamiltonian = random_conserving_hamiltonian(rng, 4)
        basis = two_particle_basis(hamiltonian)
        heff = build_effective_hamiltonian(hamiltonian, basis, Backend.sampled(seed=2))
        payload = json.loads(json.dumps(heff_to_dict(heff)))
        states, matrix = heff_matrix_from_dict(payload)
        assert [s.bits for s in states] == [s.bits for s in basis.states]
        assert np.allclose(matrix, heff.matrix)
        entry = payload["entries"][1]
        assert entry["shots"] > 0 and entry["stderr_re"] > 0
