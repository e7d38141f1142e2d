"""Measurement circuits and their exact statevector simulation.

The circuits built here are the interference circuits that extract matrix
elements ``<n|H|n'>`` between computational basis states: a single-ancilla
version whose ancilla statistics encode the real or imaginary part, and a
two-ancilla variant that reads one Pauli string at a time through controlled
applications.  The register layout is target qubits ``0..N-1`` followed by
the ancilla(s) at the highest indices.

Simulation is a dense statevector; finite-shot sampling (optionally through
an asymmetric per-qubit readout flip channel) uses a counter-based Philox
generator so every result is reproducible from its recorded seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .pauli import BasisState, PauliOp, PauliString

__all__ = [
    "Gate",
    "Circuit",
    "ReadoutNoise",
    "ShotResult",
    "SampleEstimate",
    "controlled_prepare",
    "build_offdiagonal_circuit",
    "build_indirect_circuit",
    "prep_ancilla_index",
    "measure_ancilla_index",
    "run_statevector",
    "apply_circuit",
    "exact_expectation",
    "outcome_distribution",
    "sample",
    "measurement_rotations",
    "parity_values",
]

_SQRT2_INV = 1.0 / math.sqrt(2.0)

_MAT_1Q = {
    "h": np.array([[1, 1], [1, -1]], dtype=complex) * _SQRT2_INV,
    "s": np.array([[1, 0], [0, 1j]], dtype=complex),
    "sdg": np.array([[1, 0], [0, -1j]], dtype=complex),
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}

_CONTROLLED = {"cx": "x", "cy": "y", "cz": "z"}
_GATE_KINDS = frozenset(_MAT_1Q) - {"y", "z"} | frozenset(_CONTROLLED) | {"rx", "ry"}


def _rx(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


def _ry(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


@dataclass(frozen=True, slots=True)
class Gate:
    """One gate: kind, qubit indices (control first for controlled kinds)."""

    kind: str
    qubits: tuple[int, ...]
    angle: float | None = None

    @classmethod
    def h(cls, q: int) -> "Gate":
        return cls("h", (q,))

    @classmethod
    def s(cls, q: int) -> "Gate":
        return cls("s", (q,))

    @classmethod
    def sdg(cls, q: int) -> "Gate":
        return cls("sdg", (q,))

    @classmethod
    def x(cls, q: int) -> "Gate":
        return cls("x", (q,))

    @classmethod
    def rx(cls, q: int, angle: float) -> "Gate":
        return cls("rx", (q,), angle)

    @classmethod
    def ry(cls, q: int, angle: float) -> "Gate":
        return cls("ry", (q,), angle)

    @classmethod
    def cx(cls, control: int, target: int) -> "Gate":
        return cls("cx", (control, target))

    @classmethod
    def controlled_pauli(cls, control: int, target: int, op: PauliOp) -> "Gate":
        if op is PauliOp.I:
            raise ValueError("controlled identity is a no-op; build the circuit without it")
        return cls("c" + op.value.lower(), (control, target))

    @property
    def is_controlled(self) -> bool:
        return self.kind in _CONTROLLED

    def matrix_1q(self) -> np.ndarray:
        """The 2x2 matrix applied to the (last) target qubit."""
        if self.kind == "rx":
            return _rx(self.angle)
        if self.kind == "ry":
            return _ry(self.angle)
        return _MAT_1Q[_CONTROLLED.get(self.kind, self.kind)]


@dataclass(slots=True)
class Circuit:
    """An ordered gate list on ``total_qubits`` wires.

    ``measured_qubits`` lists the wires read out at the end (ascending,
    default all); sampled bit strings use one character per measured wire.
    """

    total_qubits: int
    gates: list[Gate] = field(default_factory=list)
    measured_qubits: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        for gate in self.gates:
            self._check(gate)
        if self.measured_qubits is not None:
            self.measured_qubits = tuple(sorted(self.measured_qubits))
            for q in self.measured_qubits:
                if not 0 <= q < self.total_qubits:
                    raise ValueError(f"measured qubit {q} out of range")

    def _check(self, gate: Gate) -> None:
        if gate.kind not in _GATE_KINDS:
            raise ValueError(f"unknown gate kind {gate.kind!r}")
        for q in gate.qubits:
            if not 0 <= q < self.total_qubits:
                raise ValueError(f"qubit {q} out of range for {self.total_qubits} wires")
        if gate.is_controlled and gate.qubits[0] == gate.qubits[1]:
            raise ValueError("control and target coincide")

    def add(self, gate: Gate) -> None:
        self._check(gate)
        self.gates.append(gate)

    def extend(self, gates) -> None:
        for gate in gates:
            self.add(gate)

    @property
    def measured(self) -> tuple[int, ...]:
        if self.measured_qubits is None:
            return tuple(range(self.total_qubits))
        return self.measured_qubits

    # -- netlist text form ---------------------------------------------------

    def to_netlist(self) -> str:
        lines = [f"qubits {self.total_qubits}"]
        for g in self.gates:
            parts = [g.kind.upper(), *map(str, g.qubits)]
            if g.angle is not None:
                parts.append(f"{g.angle:.17g}")
            lines.append(" ".join(parts))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_netlist(cls, text: str) -> "Circuit":
        lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
        lines = [ln for ln in lines if ln]
        if not lines or not lines[0].startswith("qubits"):
            raise ValueError("netlist must start with 'qubits N'")
        total = int(lines[0].split()[1])
        circuit = cls(total)
        for ln in lines[1:]:
            fields = ln.split()
            kind = fields[0].lower()
            if kind in ("rx", "ry"):
                circuit.add(Gate(kind, (int(fields[1]),), float(fields[2])))
            elif kind in _CONTROLLED:
                circuit.add(Gate(kind, (int(fields[1]), int(fields[2]))))
            else:
                circuit.add(Gate(kind, (int(fields[1]),)))
        return circuit


# ---------------------------------------------------------------------------
# Circuit builders
# ---------------------------------------------------------------------------

def prep_ancilla_index(num_targets: int) -> int:
    """Wire index of the basis-preparation ancilla."""
    return num_targets


def measure_ancilla_index(num_targets: int) -> int:
    """Wire index of the operator-measurement ancilla (indirect style only)."""
    return num_targets + 1


def controlled_prepare(pattern: BasisState, control: int, control_value: int) -> list[Gate]:
    """Gates that flip the set bits of ``pattern`` when the control reads ``control_value``.

    One controlled-X per set bit; a ``control_value`` of 0 is realized by
    X-conjugating the control wire.
    """
    if control < pattern.num_qubits:
        raise ValueError(f"control {control} collides with the {pattern.num_qubits}-qubit target register")
    if control_value not in (0, 1):
        raise ValueError("control_value must be 0 or 1")
    flips = [Gate.cx(control, i) for i in pattern.occupied()]
    if control_value == 0:
        return [Gate.x(control), *flips, Gate.x(control)]
    return flips


def build_offdiagonal_circuit(n: BasisState, nprime: BasisState, part: str) -> Circuit:
    """Single-ancilla interference circuit for the pair ``(n, n')``.

    The ancilla branch ``|1>`` holds ``|n>`` and branch ``|0>`` holds
    ``|n'>``; the ``imag`` variant inserts an S-dagger on the ancilla before
    the closing Hadamard.  Recovery formulas live in the estimator.
    """
    if part not in ("real", "imag"):
        raise ValueError(f"part must be 'real' or 'imag', got {part!r}")
    if n.num_qubits != nprime.num_qubits:
        raise ValueError("basis states have different lengths")
    if n == nprime:
        raise ValueError("n == n'; diagonal elements use plain basis preparation")
    num = n.num_qubits
    anc = prep_ancilla_index(num)
    circuit = Circuit(num + 1)
    circuit.add(Gate.h(anc))
    circuit.extend(controlled_prepare(nprime, anc, 0))
    circuit.extend(controlled_prepare(n, anc, 1))
    if part == "imag":
        circuit.add(Gate.sdg(anc))
    circuit.add(Gate.h(anc))
    return circuit


def build_indirect_circuit(
    n: BasisState, nprime: BasisState, h: PauliString, part: str
) -> Circuit:
    """Two-ancilla circuit reading one Pauli string through controlled gates.

    The preparation ancilla entangles ``|n'>``/``|n>`` as in the direct
    circuit; the measurement ancilla controls one single-qubit Pauli per
    non-identity site of ``h``.  Both ancillas are Hadamard-framed and read
    in the Z basis.  Sampled like any other circuit, so reaching precision
    ``eps`` still costs O(1/eps^2) shots; amplitude-estimation-style
    readout is out of scope.
    """
    if part not in ("real", "imag"):
        raise ValueError(f"part must be 'real' or 'imag', got {part!r}")
    if n.num_qubits != nprime.num_qubits or h.num_qubits != n.num_qubits:
        raise ValueError("basis states and string must share one register size")
    if n == nprime:
        raise ValueError("n == n'; diagonal elements use plain basis preparation")
    num = n.num_qubits
    prep, meas = prep_ancilla_index(num), measure_ancilla_index(num)
    circuit = Circuit(num + 2)
    circuit.add(Gate.h(prep))
    circuit.add(Gate.h(meas))
    circuit.extend(controlled_prepare(nprime, prep, 0))
    circuit.extend(controlled_prepare(n, prep, 1))
    for site in h.support():
        circuit.add(Gate.controlled_pauli(meas, site, h[site]))
    if part == "imag":
        circuit.add(Gate.sdg(prep))
    circuit.add(Gate.h(prep))
    circuit.add(Gate.h(meas))
    return circuit


def prepare_basis_circuit(n: BasisState) -> Circuit:
    """X gates preparing ``|n>`` on a bare target register (diagonal entries)."""
    circuit = Circuit(n.num_qubits)
    circuit.extend(Gate.x(i) for i in n.occupied())
    return circuit


# ---------------------------------------------------------------------------
# Statevector simulation
# ---------------------------------------------------------------------------

_IDX_CACHE: dict[int, np.ndarray] = {}


def _indices(dim: int) -> np.ndarray:
    idx = _IDX_CACHE.get(dim)
    if idx is None:
        idx = np.arange(dim, dtype=np.int64)
        _IDX_CACHE[dim] = idx
    return idx


def _apply_1q(state: np.ndarray, matrix: np.ndarray, qubit: int, total: int) -> None:
    view = np.moveaxis(state.reshape([2] * total), total - 1 - qubit, 0)
    block = view.reshape(2, -1)
    view[...] = (matrix @ block).reshape(view.shape)


def _apply_controlled_1q(
    state: np.ndarray, matrix: np.ndarray, control: int, target: int, total: int
) -> None:
    axes = (total - 1 - control, total - 1 - target)
    view = np.moveaxis(state.reshape([2] * total), axes, (0, 1))
    block = view[1].reshape(2, -1)
    view[1] = (matrix @ block).reshape(view[1].shape)


def apply_circuit(state: np.ndarray, circuit: Circuit) -> np.ndarray:
    """Apply all gates to a copy of ``state`` and return the result."""
    total = circuit.total_qubits
    if state.shape != (1 << total,):
        raise ValueError("state size does not match the circuit register")
    out = np.array(state, dtype=complex, copy=True)
    for gate in circuit.gates:
        if gate.is_controlled:
            _apply_controlled_1q(out, gate.matrix_1q(), gate.qubits[0], gate.qubits[1], total)
        else:
            _apply_1q(out, gate.matrix_1q(), gate.qubits[0], total)
    return out


def run_statevector(circuit: Circuit) -> np.ndarray:
    """Simulate from ``|0...0>``; amplitude index bit ``i`` is qubit ``i``."""
    state = np.zeros(1 << circuit.total_qubits, dtype=complex)
    state[0] = 1.0
    state = apply_circuit(state, circuit)
    norm = np.linalg.norm(state)
    if abs(norm - 1.0) > 1e-9:
        raise RuntimeError(f"statevector norm drifted to {norm!r}")
    return state


def _mask_parity(indices: np.ndarray, mask: int) -> np.ndarray:
    """Parity (0/1) of ``popcount(indices & mask)``, vectorized."""
    out = np.zeros(indices.shape, dtype=np.int64)
    bit = 0
    m = mask
    while m:
        if m & 1:
            out ^= (indices >> bit) & 1
        m >>= 1
        bit += 1
    return out


def apply_pauli_to_state(state: np.ndarray, string: PauliString) -> np.ndarray:
    """Dense action of a Pauli string on a statevector (permutation * phase)."""
    dim = state.shape[0]
    if dim != 1 << string.num_qubits:
        raise ValueError("state size does not match the string length")
    idx = _indices(dim)
    sign = 1.0 - 2.0 * _mask_parity(idx, string.z_mask)
    phase = (1j ** (string.y_count % 4)) * sign
    out = np.empty_like(state)
    out[idx ^ string.x_mask] = phase * state
    return out


def exact_expectation(circuit: Circuit, observable: PauliString) -> float:
    """Deterministic ``<psi|O|psi>`` on the circuit's final state."""
    if observable.num_qubits != circuit.total_qubits:
        raise ValueError("observable must cover every wire of the circuit")
    state = run_statevector(circuit)
    return float(np.vdot(state, apply_pauli_to_state(state, observable)).real)


def state_expectation(state: np.ndarray, observable: PauliString) -> float:
    return float(np.vdot(state, apply_pauli_to_state(state, observable)).real)


# ---------------------------------------------------------------------------
# Readout noise and finite-shot sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class ReadoutNoise:
    """Asymmetric per-qubit readout flip channel.

    ``p01`` is the probability of reading 1 when the true bit is 0, ``p10``
    the reverse; scalars broadcast over all qubits, sequences are indexed by
    wire.  Probabilities must lie in [0, 0.5) so the channel is invertible.
    """

    p01: float | tuple[float, ...] = 0.0
    p10: float | tuple[float, ...] = 0.0

    def __post_init__(self) -> None:
        for name, value in (("p01", self.p01), ("p10", self.p10)):
            values = value if isinstance(value, tuple) else (value,)
            for p in values:
                if not 0.0 <= p < 0.5:
                    raise ValueError(f"{name} must be in [0, 0.5), got {p}")

    def for_qubit(self, qubit: int) -> tuple[float, float]:
        p01 = self.p01[qubit] if isinstance(self.p01, tuple) else self.p01
        p10 = self.p10[qubit] if isinstance(self.p10, tuple) else self.p10
        return p01, p10

    def is_trivial(self, qubits) -> bool:
        return all(self.for_qubit(q) == (0.0, 0.0) for q in qubits)

    def channel_matrix(self, qubit: int) -> np.ndarray:
        """Column-stochastic 2x2 map from true to observed bit distribution."""
        p01, p10 = self.for_qubit(qubit)
        return np.array([[1 - p01, p10], [p01, 1 - p10]])


@dataclass(slots=True)
class ShotResult:
    """Histogram of measured bit strings with the seed that produced it."""

    counts: dict[str, int]
    shots: int
    seed: int

    def __post_init__(self) -> None:
        if sum(self.counts.values()) != self.shots:
            raise ValueError("counts do not sum to the shot total")

    def counts_vector(self, num_bits: int) -> np.ndarray:
        vec = np.zeros(1 << num_bits, dtype=np.int64)
        for bits, c in self.counts.items():
            vec[int(bits[::-1], 2)] += c
        return vec


@dataclass(frozen=True, slots=True)
class SampleEstimate:
    """A sampled expectation value with its binomial standard error."""

    value: float
    stderr: float
    shots: int


def rng_from_seed(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def derive_seed(master_seed: int, *key: int) -> int:
    """Deterministic 63-bit stream seed for an independent task."""
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))
    return int(seq.generate_state(1, np.uint64)[0] >> np.uint64(1))


def marginal_probabilities(state: np.ndarray, total: int, measured: tuple[int, ...]) -> np.ndarray:
    """Probabilities over measured wires, outcome index bit ``j`` = measured[j]."""
    probs = np.abs(state) ** 2
    measured = tuple(sorted(measured))
    if len(measured) == total:
        return probs
    tensor = probs.reshape([2] * total)
    drop = tuple(total - 1 - q for q in range(total) if q not in measured)
    tensor = tensor.sum(axis=drop)
    # remaining axes are ordered most-significant-first over the kept wires,
    # which matches outcome index bit j <-> measured[j]
    return tensor.reshape(-1)


def apply_noise_to_distribution(
    probs: np.ndarray, noise: ReadoutNoise, qubits: tuple[int, ...]
) -> np.ndarray:
    """Exact (infinite-shot) push of a distribution through the flip channel."""
    num = len(qubits)
    out = probs.reshape([2] * num)
    for j, q in enumerate(qubits):
        p01, p10 = noise.for_qubit(q)
        if p01 == 0.0 and p10 == 0.0:
            continue
        axis = num - 1 - j
        out = np.moveaxis(np.tensordot(noise.channel_matrix(q), out, axes=([1], [axis])), 0, axis)
    return out.reshape(-1)


def sample_outcome_counts(
    probs: np.ndarray,
    shots: int,
    rng: np.random.Generator,
    noise: ReadoutNoise | None = None,
    qubits: tuple[int, ...] | None = None,
) -> np.ndarray:
    """Multinomial counts over outcomes, then per-shot readout flips.

    Flips are drawn binomially per qubit, which is statistically identical to
    flipping each shot independently.  Zero-probability channels are skipped
    entirely so a trivial noise model reproduces the noiseless stream.
    """
    if shots <= 0:
        raise ValueError("shots must be positive")
    p = np.clip(probs, 0.0, None)
    p = p / p.sum()
    counts = rng.multinomial(shots, p).astype(np.int64)
    if noise is None or qubits is None or noise.is_trivial(qubits):
        return counts
    dim = counts.shape[0]
    idx = _indices(dim)
    for j, q in enumerate(qubits):
        p01, p10 = noise.for_qubit(q)
        if p01 == 0.0 and p10 == 0.0:
            continue
        bit = 1 << j
        zero_side = idx[(idx & bit) == 0]
        one_side = zero_side ^ bit
        flips_up = rng.binomial(counts[zero_side], p01) if p01 > 0.0 else 0
        flips_down = rng.binomial(counts[one_side], p10) if p10 > 0.0 else 0
        counts[zero_side] += flips_down - flips_up
        counts[one_side] += flips_up - flips_down
    return counts


def counts_vector_to_dict(counts: np.ndarray, num_bits: int) -> dict[str, int]:
    out: dict[str, int] = {}
    for outcome in np.flatnonzero(counts):
        bits = "".join("1" if outcome >> j & 1 else "0" for j in range(num_bits))
        out[bits] = int(counts[outcome])
    return out


def parity_values(num_bits: int, support_mask: int) -> np.ndarray:
    """``(-1)**popcount(outcome & support)`` for every outcome index."""
    idx = _indices(1 << num_bits)
    return 1.0 - 2.0 * _mask_parity(idx, support_mask)


def estimate_from_distribution(
    weights: np.ndarray, values: np.ndarray, shots: int
) -> SampleEstimate:
    """Mean and standard error of a per-outcome value under count/prob weights."""
    total = weights.sum()
    freq = weights / total
    mean = float(freq @ values)
    second = float(freq @ (values * values))
    var = max(second - mean * mean, 0.0)
    return SampleEstimate(mean, math.sqrt(var / shots), shots)


def measurement_rotations(observable: PauliString, offset: int = 0) -> list[Gate]:
    """Basis changes making the observable Z-diagonal: H for X, S-dagger + H for Y."""
    gates: list[Gate] = []
    for i, c in enumerate(observable.label):
        if c == "X":
            gates.append(Gate.h(offset + i))
        elif c == "Y":
            gates.append(Gate.sdg(offset + i))
            gates.append(Gate.h(offset + i))
    return gates


def outcome_distribution(circuit: Circuit, noise: ReadoutNoise | None = None) -> np.ndarray:
    """Exact outcome probabilities over the measured wires, noise applied analytically."""
    state = run_statevector(circuit)
    measured = circuit.measured
    probs = marginal_probabilities(state, circuit.total_qubits, measured)
    if noise is not None:
        probs = apply_noise_to_distribution(probs, noise, measured)
    return probs


def sample(
    circuit: Circuit,
    observable: PauliString,
    shots: int,
    seed: int,
    noise: ReadoutNoise | None = None,
) -> tuple[ShotResult, SampleEstimate]:
    """Append basis rotations for ``observable``, sample, and estimate its mean.

    The estimate is the +-1 parity over the observable's support; the
    reported standard error is ``sqrt((1 - est**2)/shots)``.
    """
    if observable.num_qubits != circuit.total_qubits:
        raise ValueError("observable must cover every wire of the circuit")
    measured = circuit.measured
    position = {q: j for j, q in enumerate(measured)}
    support_mask = 0
    for q in observable.support():
        if q not in position:
            raise ValueError(f"observable acts on unmeasured qubit {q}")
        support_mask |= 1 << position[q]
    rotated = Circuit(circuit.total_qubits, list(circuit.gates), circuit.measured_qubits)
    rotated.extend(measurement_rotations(observable))
    probs = marginal_probabilities(run_statevector(rotated), circuit.total_qubits, measured)
    rng = rng_from_seed(seed)
    counts = sample_outcome_counts(probs, shots, rng, noise, measured)
    values = parity_values(len(measured), support_mask)
    estimate = estimate_from_distribution(counts.astype(float), values, shots)
    result = ShotResult(counts_vector_to_dict(counts, len(measured)), shots, seed)
    return result, estimate
