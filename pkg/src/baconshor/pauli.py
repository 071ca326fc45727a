"""Pauli algebra and the four-qubit Bacon-Shor code.

Qubits are labelled 1..4 and ordered with qubit 1 as the most significant
tensor factor, so computational index ``b1 b2 b3 b4`` is ``8*b1 + 4*b2 + 2*b3 + b4``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from itertools import product

import numpy as np

N_QUBITS = 4
DIM = 2**N_QUBITS

_I2 = np.eye(2, dtype=complex)
_X2 = np.array([[0, 1], [1, 0]], dtype=complex)
_Y2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z2 = np.array([[1, 0], [0, -1]], dtype=complex)
SINGLE_QUBIT = {"I": _I2, "X": _X2, "Y": _Y2, "Z": _Z2}

# product table for single-qubit Paulis: (a, b) -> (phase, c) with a*b = phase*c
_MUL = {}
for _a, _b in product("IXYZ", repeat=2):
    _m = SINGLE_QUBIT[_a] @ SINGLE_QUBIT[_b]
    for _c in "IXYZ":
        _ph = np.trace(SINGLE_QUBIT[_c].conj().T @ _m) / 2
        if abs(_ph) > 0.5:
            _MUL[_a, _b] = (complex(np.round(_ph)), _c)
            break

_PHASES = (1, -1, 1j, -1j)


class PauliError(ValueError):
    """Raised for malformed Pauli strings or invalid qubit indices."""


@dataclass(frozen=True)
class PauliString:
    """Tensor product of single-qubit Paulis with a phase in {1, -1, i, -i}."""

    ops: str
    phase: complex = 1

    def __post_init__(self):
        if len(self.ops) != N_QUBITS or any(c not in "IXYZ" for c in self.ops):
            raise PauliError(f"invalid Pauli string {self.ops!r}")
        ph = complex(self.phase)
        if not any(abs(ph - p) < 1e-12 for p in _PHASES):
            raise PauliError(f"phase must be one of 1, -1, i, -i, got {self.phase}")
        object.__setattr__(self, "phase", complex(np.round(ph.real) + 1j * np.round(ph.imag)))

    @classmethod
    def single(cls, kind: str, qubit: int) -> "PauliString":
        """Single-qubit Pauli ``kind`` acting on ``qubit`` (1-based)."""
        if kind not in "XYZ" or len(kind) != 1:
            raise PauliError(f"unknown Pauli type {kind!r}")
        if not 1 <= int(qubit) <= N_QUBITS:
            raise PauliError(f"qubit index {qubit} out of range 1..{N_QUBITS}")
        ops = ["I"] * N_QUBITS
        ops[int(qubit) - 1] = kind
        return cls("".join(ops))

    @classmethod
    def parse(cls, text: str) -> "PauliString":
        """Parse ``"X1X2"``, ``"-Y1Y4"``, ``"XXII"`` or ``"I"``."""
        s = text.strip()
        phase = 1
        for prefix, ph in (("-i", -1j), ("+i", 1j), ("i", 1j), ("-", -1), ("+", 1)):
            if s.startswith(prefix) and (len(s) > len(prefix)):
                phase, s = ph, s[len(prefix):]
                break
        if len(s) == N_QUBITS and all(c in "IXYZ" for c in s):
            return cls(s, phase)
        if s == "I":
            return cls("IIII", phase)
        out = cls("IIII", phase)
        i = 0
        while i < len(s):
            kind = s[i]
            j = i + 1
            while j < len(s) and s[j].isdigit():
                j += 1
            if kind not in "XYZ" or j == i + 1:
                raise PauliError(f"cannot parse Pauli string {text!r}")
            out = out * cls.single(kind, int(s[i + 1:j]))
            i = j
        return out

    def __mul__(self, other: "PauliString") -> "PauliString":
        phase = self.phase * other.phase
        ops = []
        for a, b in zip(self.ops, other.ops):
            ph, c = _MUL[a, b]
            phase *= ph
            ops.append(c)
        return PauliString("".join(ops), phase)

    def __neg__(self) -> "PauliString":
        return PauliString(self.ops, -self.phase)

    def commutes_with(self, other: "PauliString") -> bool:
        n_anti = sum(1 for a, b in zip(self.ops, other.ops) if a != "I" and b != "I" and a != b)
        return n_anti % 2 == 0

    @property
    def weight(self) -> int:
        return sum(c != "I" for c in self.ops)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(i + 1 for i, c in enumerate(self.ops) if c != "I")

    def equal_up_to_phase(self, other: "PauliString") -> bool:
        return self.ops == other.ops

    def to_matrix(self) -> np.ndarray:
        return self.phase * _kron_ops(self.ops)

    def __str__(self) -> str:
        body = "".join(f"{c}{i + 1}" for i, c in enumerate(self.ops) if c != "I") or "I"
        ph = {1: "", -1: "-", 1j: "i", -1j: "-i"}[self.phase]
        return ph + body


@lru_cache(maxsize=None)
def _kron_ops_cached(ops: str) -> np.ndarray:
    m = np.ones((1, 1), dtype=complex)
    for c in ops:
        m = np.kron(m, SINGLE_QUBIT[c])
    m.setflags(write=False)
    return m


def _kron_ops(ops: str) -> np.ndarray:
    return _kron_ops_cached(ops).copy()


def pauli(text: str) -> PauliString:
    """Shorthand for :meth:`PauliString.parse`."""
    return PauliString.parse(text)


def single_qubit_operator(matrix: np.ndarray, qubit: int) -> np.ndarray:
    """Embed a 2x2 ``matrix`` acting on ``qubit`` into the 16-dimensional space."""
    if not 1 <= qubit <= N_QUBITS:
        raise PauliError(f"qubit index {qubit} out of range 1..{N_QUBITS}")
    factors = [_I2] * N_QUBITS
    factors[qubit - 1] = np.asarray(matrix, dtype=complex)
    m = factors[0]
    for f in factors[1:]:
        m = np.kron(m, f)
    return m


# gauge operators, stabilizers and logical representatives
GAUGE = (pauli("X1X2"), pauli("X3X4"), pauli("Z1Z3"), pauli("Z2Z4"))
X_ALL = pauli("XXXX")
Z_ALL = pauli("ZZZZ")
Y_ALL = pauli("YYYY")
LOGICAL_REPS = {"X": pauli("X1X3"), "Y": pauli("Y1Y4"), "Z": pauli("Z1Z2")}


def gauge_operator(k: int) -> PauliString:
    """Gauge operator ``G_k`` for ``k`` in 1..4."""
    if not 1 <= k <= 4:
        raise PauliError(f"gauge index {k} out of range 1..4")
    return GAUGE[k - 1]


def _ket(bits: str) -> np.ndarray:
    v = np.zeros(DIM, dtype=complex)
    v[int(bits, 2)] = 1.0
    return v


_PHI_BITS = (("0000", "1111"), ("1100", "0011"), ("1010", "0101"), ("0110", "1001"))


class SubspaceTag(enum.IntEnum):
    """Error subspaces, identified by the (X_all, Z_all) stabilizer signs."""

    Q0 = 0
    QX = 1
    QY = 2
    QZ = 3


# representative single-qubit Pauli on qubit 1 that maps Q0 to each subspace
SUBSPACE_REP = {SubspaceTag.Q0: "I", SubspaceTag.QX: "X", SubspaceTag.QY: "Y", SubspaceTag.QZ: "Z"}
# stabilizer signs (X_all, Z_all) of each subspace
SUBSPACE_SIGNS = {
    SubspaceTag.Q0: (1, 1),
    SubspaceTag.QX: (1, -1),
    SubspaceTag.QY: (-1, -1),
    SubspaceTag.QZ: (-1, 1),
}


@dataclass(frozen=True)
class CodeBasis:
    """Orthonormal basis {phi_j, X1 phi_j, Y1 phi_j, Z1 phi_j} of the 16-dim space.

    ``matrix[:, 4*s + j]`` is ``B_s |phi_{j+1}>`` in the computational basis with
    ``B_s`` running over I, X1, Y1, Z1.  Within each block the index ``j = 2*l + g``
    factorizes into a logical bit ``l`` and a gauge bit ``g``.
    """

    matrix: np.ndarray

    def block(self, tag: SubspaceTag) -> np.ndarray:
        s = int(tag)
        return self.matrix[:, 4 * s:4 * s + 4]

    def to_code(self, op: np.ndarray) -> np.ndarray:
        """Express a 16x16 operator (or a stack of them) in the code basis."""
        b = self.matrix
        return b.conj().T @ op @ b

    def from_code(self, op: np.ndarray) -> np.ndarray:
        b = self.matrix
        return b @ op @ b.conj().T


@lru_cache(maxsize=None)
def code_basis() -> CodeBasis:
    phis = [(_ket(a) + _ket(b)) / np.sqrt(2) for a, b in _PHI_BITS]
    cols = []
    for rep in "IXYZ":
        op = PauliString.single(rep, 1).to_matrix() if rep != "I" else np.eye(DIM, dtype=complex)
        cols.extend(op @ p for p in phis)
    m = np.column_stack(cols)
    m.setflags(write=False)
    return CodeBasis(m)


def code_state(j: int) -> np.ndarray:
    """Code-space basis vector phi_j for j in 1..4."""
    if not 1 <= j <= 4:
        raise PauliError("code state index must be 1..4")
    return code_basis().matrix[:, j - 1].copy()


def encode(alpha: complex, beta: complex, gauge: str = "z+") -> np.ndarray:
    """Encode ``alpha|0> + beta|1>`` into the code space.

    ``gauge`` chooses the gauge-qubit state: ``z+``, ``z-``, ``x+`` or ``x-``.
    Raises ``ValueError`` unless ``|alpha|^2 + |beta|^2 = 1`` within 1e-10.
    """
    if abs(abs(alpha) ** 2 + abs(beta) ** 2 - 1) > 1e-10:
        raise ValueError("logical amplitudes must be normalized")
    a, b = complex(alpha), complex(beta)
    phi = code_basis().matrix[:, :4]
    z_plus = a * phi[:, 0] + b * phi[:, 2]
    z_minus = a * phi[:, 1] + b * phi[:, 3]
    states = {
        "z+": z_plus,
        "z-": z_minus,
        "x+": (z_plus + z_minus) / np.sqrt(2),
        "x-": (z_plus - z_minus) / np.sqrt(2),
    }
    if gauge not in states:
        raise ValueError(f"unknown gauge state {gauge!r}")
    return states[gauge]


def _cnot(control: int, target: int) -> np.ndarray:
    m = np.zeros((DIM, DIM), dtype=complex)
    for i in range(DIM):
        bits = [(i >> (N_QUBITS - q)) & 1 for q in range(1, N_QUBITS + 1)]
        if bits[control - 1]:
            bits[target - 1] ^= 1
        m[int("".join(map(str, bits)), 2), i] = 1.0
    return m


def encoding_unitary() -> np.ndarray:
    """Circuit CNOT21 CNOT13 CNOT24 CNOT23 H2 acting on |psi>|000>."""
    h = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
    u = single_qubit_operator(h, 2)
    for c, t in ((2, 3), (2, 4), (1, 3), (2, 1)):
        u = _cnot(c, t) @ u
    return u


def z_type_projectors() -> tuple[np.ndarray, np.ndarray]:
    """Projectors Pi_{++} and Pi_{--} onto joint eigenspaces of G3 and G4."""
    g3, g4 = GAUGE[2].to_matrix(), GAUGE[3].to_matrix()
    one = np.eye(DIM)
    pp = (one + g3) @ (one + g4) / 4
    mm = (one - g3) @ (one - g4) / 4
    return pp, mm


def x_type_projectors() -> tuple[np.ndarray, np.ndarray]:
    """Projectors onto G1 = G2 = +1 and G1 = G2 = -1."""
    g1, g2 = GAUGE[0].to_matrix(), GAUGE[1].to_matrix()
    one = np.eye(DIM)
    return (one + g1) @ (one + g2) / 4, (one - g1) @ (one - g2) / 4


class DecodeError(ValueError):
    """Raised when a state has no weight left in the code space."""


def decode_logical(rho: np.ndarray) -> np.ndarray:
    """Unnormalized 2x2 logical density matrix carried by ``rho``.

    Applies the Z-type gauge projection, keeps the Q0 block and traces out the
    gauge qubit.  Works on a single 16x16 matrix or a stack of them.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim == 1:
        rho = np.outer(rho, rho.conj())
    pp, mm = z_type_projectors()
    proj = pp @ rho @ pp + mm @ rho @ mm
    b0 = code_basis().block(SubspaceTag.Q0)
    q = b0.conj().T @ proj @ b0
    q = q.reshape(q.shape[:-2] + (2, 2, 2, 2))
    return np.einsum("...agbg->...ab", q)


def logical_bloch(rho_l: np.ndarray, atol: float = 1e-12) -> np.ndarray:
    """Bloch vector of a (possibly unnormalized) 2x2 logical density matrix."""
    rho_l = np.asarray(rho_l, dtype=complex)
    tr = np.real(rho_l[..., 0, 0] + rho_l[..., 1, 1])
    if np.any(np.abs(tr) <= atol):
        raise DecodeError("state has no weight in the code space")
    x = 2 * np.real(rho_l[..., 0, 1]) / tr
    y = -2 * np.imag(rho_l[..., 0, 1]) / tr
    z = np.real(rho_l[..., 0, 0] - rho_l[..., 1, 1]) / tr
    return np.stack([x, y, z], axis=-1)


def decode(rho: np.ndarray) -> np.ndarray:
    """Logical Bloch vector (x_L, y_L, z_L) after gauge projection.

    Normalized by the Q0-block trace.  Raises :class:`DecodeError` if that
    trace vanishes.
    """
    return logical_bloch(decode_logical(rho))


class ErrorClass(enum.Enum):
    HARMLESS = "harmless"
    LOGICAL_X = "logical_x"
    LOGICAL_Y = "logical_y"
    LOGICAL_Z = "logical_z"
    DETECTABLE = "detectable"


@lru_cache(maxsize=None)
def _gauge_group() -> dict[str, PauliString]:
    group = {}
    for bits in product((0, 1), repeat=4):
        p = PauliString("IIII")
        for b, g in zip(bits, GAUGE):
            if b:
                p = p * g
        group[p.ops] = p
    return group


def _logical_content(p: PauliString) -> str | None:
    """Logical Pauli implemented by ``p`` modulo the gauge group, or None."""
    group = _gauge_group()
    for name, rep in (("I", PauliString("IIII")), *LOGICAL_REPS.items()):
        if (p * rep).ops in group:
            return name
    return None


def classify_pair(e1: PauliString | str, e2: PauliString | str) -> ErrorClass:
    """Classify the effect of two single-qubit errors on the code space."""
    e1 = pauli(e1) if isinstance(e1, str) else e1
    e2 = pauli(e2) if isinstance(e2, str) else e2
    for e in (e1, e2):
        if e.weight != 1:
            raise PauliError(f"{e} is not a single-qubit Pauli error")
    p = e2 * e1
    if not (p.commutes_with(X_ALL) and p.commutes_with(Z_ALL)):
        return ErrorClass.DETECTABLE
    return {
        "I": ErrorClass.HARMLESS,
        "X": ErrorClass.LOGICAL_X,
        "Y": ErrorClass.LOGICAL_Y,
        "Z": ErrorClass.LOGICAL_Z,
    }[_logical_content(p)]


def single_qubit_errors() -> list[PauliString]:
    return [PauliString.single(k, q) for q in range(1, 5) for k in "XYZ"]


@dataclass(frozen=True)
class SubspaceLabel:
    """Where a Pauli sends a subspace, and what it does to logical and gauge qubits.

    ``P B_s |l, g> = phase * B_target (L (x) G) |l, g>`` with ``L`` and ``G``
    single-qubit Paulis named by ``logical_op`` and ``gauge_op``.
    """

    tag: SubspaceTag
    logical_op: str
    gauge_op: str
    phase: complex

    def operator(self) -> np.ndarray:
        """The 4x4 block ``phase * L (x) G``."""
        return self.phase * np.kron(SINGLE_QUBIT[self.logical_op], SINGLE_QUBIT[self.gauge_op])


def _decompose_block(block: np.ndarray) -> tuple[str, str, complex]:
    for lo, go in product("IXYZ", repeat=2):
        basis = np.kron(SINGLE_QUBIT[lo], SINGLE_QUBIT[go])
        c = np.trace(basis.conj().T @ block) / 4
        if abs(abs(c) - 1) < 1e-9:
            return lo, go, complex(np.round(c.real) + 1j * np.round(c.imag))
    raise PauliError("block is not a Pauli tensor product")


def error_subspace_map(error: PauliString | str, source: SubspaceTag = SubspaceTag.Q0) -> SubspaceLabel:
    """Action of a Pauli operator on the subspace ``source``.

    The result names the target subspace and the logical and gauge Paulis
    (with phase) such that the error acts as ``B_target (L (x) G)`` on the
    source block.
    """
    error = pauli(error) if isinstance(error, str) else error
    cb = code_basis()
    src = cb.block(source)
    image = error.to_matrix() @ src
    for tag in SubspaceTag:
        blk = cb.block(tag).conj().T @ image
        if np.linalg.norm(blk) > 0.5:
            lo, go, ph = _decompose_block(blk)
            return SubspaceLabel(tag, lo, go, ph)
    raise PauliError("error image not found")  # pragma: no cover


def gauge_action(k: int, source: SubspaceTag) -> tuple[int, str]:
    """Sign and gauge Pauli by which ``G_k`` acts inside subspace ``source``."""
    lab = error_subspace_map(gauge_operator(k), source)
    if lab.tag != source or lab.logical_op != "I":
        raise PauliError("gauge operator left the subspace")  # pragma: no cover
    return int(np.real(lab.phase)), lab.gauge_op
