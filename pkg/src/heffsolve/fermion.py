"""Second-quantized fermionic Hamiltonians and the Jordan-Wigner map.

A Hamiltonian is a list of terms ``coefficient * a(+)_i a(+)_j ... a_k a_l``
restricted to the particle-conserving one- and two-body class.  Mapping to
qubits goes factor-by-factor through the ladder-operator images

    a_j(+) -> 1/2 (Z_0 ... Z_{j-1}) (X_j -+ i Y_j)

and multiplies the resulting Pauli sums exactly, which carries every
anticommutation sign automatically (no symbolic normal ordering needed).
The occupied convention is ``1`` (see :mod:`heffsolve.pauli`), so the
creation operator takes the ``- i Y`` branch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np

from .pauli import BasisState, PauliString, PauliSum, apply_string

__all__ = [
    "FermionTerm",
    "FermionHamiltonian",
    "jw_ladder",
    "jw_transform",
    "check_particle_conservation",
    "load_fermion_hamiltonian",
    "save_fermion_hamiltonian",
    "parse_fermion_hamiltonian",
    "format_fermion_hamiltonian",
]


@dataclass(frozen=True, slots=True)
class FermionTerm:
    """One product of ladder operators with a coefficient (Hartree).

    ``factors`` is an ordered sequence of ``(mode, dagger)``; the operator is
    read left to right, e.g. ``((1, True), (0, False))`` is ``a+_1 a_0``.
    """

    coefficient: complex
    factors: tuple[tuple[int, bool], ...]

    def conserves_particles(self) -> bool:
        daggers = sum(1 for _, d in self.factors if d)
        return 2 * daggers == len(self.factors)


@dataclass(frozen=True, slots=True)
class FermionHamiltonian:
    """Particle-conserving one- and two-body Hamiltonian on ``mode_count`` modes.

    ``constant`` is a scalar shift (e.g. nuclear-nuclear repulsion) carried
    into the identity string by the qubit map.
    """

    terms: tuple[FermionTerm, ...]
    mode_count: int
    constant: float = 0.0

    def __post_init__(self) -> None:
        for term in self.terms:
            if len(term.factors) not in (2, 4):
                raise ValueError(
                    f"term has {len(term.factors)} factors; only one- and two-body terms are supported"
                )
            if not term.conserves_particles():
                raise ValueError(f"term {term.factors} does not conserve particle number")
            for mode, _ in term.factors:
                if not 0 <= mode < self.mode_count:
                    raise ValueError(f"mode {mode} out of range for {self.mode_count} modes")


def jw_ladder(mode: int, dagger: bool, qubit_count: int) -> PauliSum:
    """Jordan-Wigner image of a single ladder operator as a two-term sum.

    Returns ``1/2 (Z...Z X I...I) -+ (i/2) (Z...Z Y I...I)`` with Z on every
    qubit below ``mode``; the creation operator (``dagger=True``) takes the
    minus sign so that ``a+ a`` is the occupation projector ``(I - Z)/2``.
    """
    if not 0 <= mode < qubit_count:
        raise ValueError(f"mode {mode} out of range for {qubit_count} qubits")
    tail = "Z" * mode
    rest = "I" * (qubit_count - mode - 1)
    x_string = PauliString(tail + "X" + rest)
    y_string = PauliString(tail + "Y" + rest)
    y_weight = -0.5j if dagger else 0.5j
    return PauliSum([(0.5, x_string), (y_weight, y_string)], qubit_count)


def jw_transform(hamiltonian: FermionHamiltonian, hermitian_tol: float = 1e-10) -> PauliSum:
    """Map a fermionic Hamiltonian to a Pauli sum via Jordan-Wigner.

    Each term is mapped factor-by-factor and multiplied out exactly; duplicate
    strings merge and near-zero weights are pruned.  The constant becomes the
    identity-string weight.  For a Hermitian input the resulting weights are
    real; residual imaginary parts above ``hermitian_tol`` raise ValueError.
    """
    n = hamiltonian.mode_count
    total = PauliSum.zero(n)
    for term in hamiltonian.terms:
        mapped = PauliSum([(term.coefficient, PauliString.identity(n))], n)
        for mode, dagger in term.factors:
            mapped = mapped * jw_ladder(mode, dagger, n)
        total = total + mapped
    if hamiltonian.constant:
        total = total + PauliSum([(hamiltonian.constant, PauliString.identity(n))], n)
    return total.real_weights(tol=hermitian_tol)


def check_particle_conservation(
    hamiltonian: PauliSum, trials: int = 50, seed: int = 0, tol: float = 1e-12
) -> bool:
    """Check that ``<m|H|n> = 0`` whenever m and n have different popcounts.

    For each sampled basis state the full column ``H|n>`` is accumulated term
    by term, so any string that changes the particle number and survives
    cancellation is caught exactly.
    """
    n_qubits = hamiltonian.qubit_count
    if not hamiltonian.terms:
        return True
    rng = np.random.default_rng(seed)
    samples = {0, (1 << n_qubits) - 1}
    samples.update(int(v) for v in rng.integers(0, 1 << n_qubits, size=trials))
    for mask in samples:
        state = BasisState.from_mask(mask, n_qubits)
        column: dict[int, complex] = {}
        for weight, string in hamiltonian.terms:
            phase, image = apply_string(string, state)
            column[image.mask] = column.get(image.mask, 0) + weight * phase
        popcount = state.particle_number
        for image_mask, amplitude in column.items():
            if bin(image_mask).count("1") != popcount and abs(amplitude) > tol:
                return False
    return True


# ---------------------------------------------------------------------------
# Text format:
#   modes 4
#   constant 0.7137
#   0.5 0.0 1^ 0^ 2 3     # <re> <im> then factors, '^' marks creation
# ---------------------------------------------------------------------------

class FermionFormatError(ValueError):
    """Raised on malformed fermion-term text, with a 1-based line number."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


def _parse_factor(token: str, lineno: int) -> tuple[int, bool]:
    dagger = token.endswith("^")
    body = token[:-1] if dagger else token
    if not body.isdigit():
        raise FermionFormatError(lineno, f"malformed factor token {token!r}")
    return int(body), dagger


def parse_fermion_hamiltonian(text: str | Iterable[str]) -> FermionHamiltonian:
    lines = text.splitlines() if isinstance(text, str) else list(text)
    mode_count: int | None = None
    constant = 0.0
    terms: list[FermionTerm] = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if fields[0] == "modes":
            if len(fields) != 2 or not fields[1].isdigit():
                raise FermionFormatError(lineno, f"bad header {raw.strip()!r}")
            mode_count = int(fields[1])
            continue
        if fields[0] == "constant":
            try:
                constant = float(fields[1])
            except (IndexError, ValueError):
                raise FermionFormatError(lineno, f"bad constant line {raw.strip()!r}") from None
            continue
        if mode_count is None:
            raise FermionFormatError(lineno, "term before 'modes N' header")
        if len(fields) < 3:
            raise FermionFormatError(lineno, f"expected '<re> <im> <factor>...', got {raw.strip()!r}")
        try:
            re_part, im_part = float(fields[0]), float(fields[1])
        except ValueError:
            raise FermionFormatError(lineno, f"bad coefficient in {raw.strip()!r}") from None
        factors = tuple(_parse_factor(tok, lineno) for tok in fields[2:])
        terms.append(FermionTerm(complex(re_part, im_part), factors))
    if mode_count is None:
        raise FermionFormatError(len(lines) + 1, "missing 'modes N' header")
    try:
        return FermionHamiltonian(tuple(terms), mode_count, constant)
    except ValueError as exc:
        raise FermionFormatError(len(lines) + 1, str(exc)) from None


def format_fermion_hamiltonian(hamiltonian: FermionHamiltonian) -> str:
    lines = [f"modes {hamiltonian.mode_count}"]
    if hamiltonian.constant:
        lines.append(f"constant {hamiltonian.constant:.17g}")
    for term in hamiltonian.terms:
        factors = " ".join(f"{m}^" if d else f"{m}" for m, d in term.factors)
        c = complex(term.coefficient)
        lines.append(f"{c.real:.17g} {c.imag:.17g} {factors}")
    return "\n".join(lines) + "\n"


def load_fermion_hamiltonian(path_or_file: str | TextIO) -> FermionHamiltonian:
    if hasattr(path_or_file, "read"):
        return parse_fermion_hamiltonian(path_or_file.read())
    with open(path_or_file, "r", encoding="utf-8") as fh:
        return parse_fermion_hamiltonian(fh.read())


def save_fermion_hamiltonian(hamiltonian: FermionHamiltonian, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_fermion_hamiltonian(hamiltonian))
