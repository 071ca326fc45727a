"""Single-qubit decoherence models and the Lindblad generator."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .pauli import DIM, SINGLE_QUBIT, single_qubit_operator

SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)

KINDS = ("none", "markovian", "depolarizing", "dephasing", "relaxation")


@dataclass(frozen=True)
class DecoherenceModel:
    """Independent single-qubit decoherence on the four physical qubits.

    ``kind`` selects the parametrization:

    * ``markovian``: ``rates`` has shape (4, 3) giving Gamma_i^X, Gamma_i^Y, Gamma_i^Z.
    * ``depolarizing``: ``rates`` is Gamma_d per qubit, each Pauli at Gamma_d/3.
    * ``dephasing``: ``rates`` is Gamma_phi per qubit, Z at Gamma_phi/2.
    * ``relaxation``: ``rates`` is mu per qubit, lowering operator at rate mu.
    """

    kind: str = "none"
    rates: np.ndarray = field(default_factory=lambda: np.zeros(4))

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown decoherence kind {self.kind!r}")
        r = np.array(self.rates, dtype=float)
        if self.kind == "markovian":
            r = r.reshape(4, 3)
        else:
            r = np.broadcast_to(r, (4,)).copy()
        if np.any(r < 0) or not np.all(np.isfinite(r)):
            raise ValueError("decoherence rates must be finite and non-negative")
        r.setflags(write=False)
        object.__setattr__(self, "rates", r)

    @classmethod
    def none(cls) -> "DecoherenceModel":
        return cls("none", np.zeros(4))

    @classmethod
    def markovian(cls, rates) -> "DecoherenceModel":
        return cls("markovian", rates)

    @classmethod
    def depolarizing(cls, gamma_d) -> "DecoherenceModel":
        return cls("depolarizing", gamma_d)

    @classmethod
    def dephasing(cls, gamma_phi) -> "DecoherenceModel":
        return cls("dephasing", gamma_phi)

    @classmethod
    def relaxation(cls, mu) -> "DecoherenceModel":
        return cls("relaxation", mu)

    @property
    def is_pauli(self) -> bool:
        return self.kind != "relaxation"

    def pauli_rates(self) -> np.ndarray:
        """Rates Gamma_i^{X,Y,Z} as a (4, 3) array.

        For relaxation this is the Pauli-twirled equivalent (mu/4 for X and Y),
        which reproduces its logical rates but not its coherent terms.
        """
        r = self.rates
        out = np.zeros((4, 3))
        if self.kind == "markovian":
            out[:] = r
        elif self.kind == "depolarizing":
            out[:] = r[:, None] / 3
        elif self.kind == "dephasing":
            out[:, 2] = r / 2
        elif self.kind == "relaxation":
            out[:, 0] = out[:, 1] = r / 4
        return out

    def operators(self) -> list[tuple[int, np.ndarray, float]]:
        """Jump operators as ``(qubit, 2x2 matrix, rate)`` with nonzero rate."""
        ops = []
        if self.kind == "relaxation":
            for q in range(4):
                if self.rates[q] > 0:
                    ops.append((q + 1, SIGMA_MINUS, float(self.rates[q])))
            return ops
        pr = self.pauli_rates()
        for q in range(4):
            for t, name in enumerate("XYZ"):
                if pr[q, t] > 0:
                    ops.append((q + 1, SINGLE_QUBIT[name], float(pr[q, t])))
        return ops

    def operator_labels(self) -> list[str]:
        """Names such as ``X1`` or ``sm3`` (lowering operator) for :meth:`operators`."""
        if self.kind == "relaxation":
            return [f"sm{q}" for q, _, _ in self.operators()]
        pr = self.pauli_rates()
        return [f"{name}{q + 1}" for q in range(4) for t, name in enumerate("XYZ") if pr[q, t] > 0]

    def total_rate(self) -> float:
        """Sum of single-qubit error rates; the base termination rate."""
        if self.kind == "relaxation":
            return float(np.sum(self.rates) / 2)
        return float(np.sum(self.pauli_rates()))

    def lindblad_terms(self) -> list[tuple[np.ndarray, float]]:
        """Full 16x16 jump operators with rates."""
        return [(single_qubit_operator(m, q), r) for q, m, r in self.operators()]


class LindbladGenerator:
    """Generator ``L(rho) = sum_k r_k (L rho L^dag - {L^dag L, rho}/2)``."""

    def __init__(self, model: DecoherenceModel):
        self.model = model
        self.terms = model.lindblad_terms()
        self._ldl = sum((r * op.conj().T @ op for op, r in self.terms), np.zeros((DIM, DIM), complex))

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        out = -0.5 * (self._ldl @ rho + rho @ self._ldl)
        for op, r in self.terms:
            out = out + r * (op @ rho @ op.conj().T)
        return out


def lindblad_step(rho: np.ndarray, model: DecoherenceModel | LindbladGenerator, dt_step: float,
                  substeps: int = 1) -> np.ndarray:
    """Advance ``rho`` by ``dt_step`` under the Lindblad equation.

    Uses the explicit midpoint rule on ``substeps`` equal substeps, second
    order in the substep size.  Trace and Hermiticity are preserved exactly
    (up to rounding); ``rho`` may be a stack of matrices.
    """
    gen = model if isinstance(model, LindbladGenerator) else LindbladGenerator(model)
    if not gen.terms or dt_step == 0:
        return np.array(rho, dtype=complex, copy=True)
    h = dt_step / substeps
    out = np.asarray(rho, dtype=complex)
    for _ in range(substeps):
        mid = out + 0.5 * h * gen(out)
        out = out + h * gen(mid)
    return 0.5 * (out + np.swapaxes(out, -1, -2).conj())


def lindblad_propagator(model: DecoherenceModel, duration: float) -> np.ndarray:
    """Exact superoperator ``exp(L t)`` acting on row-major ``rho.reshape(256)``."""
    from scipy.linalg import expm

    one = np.eye(DIM)
    sup = np.zeros((DIM * DIM, DIM * DIM), dtype=complex)
    for op, r in model.lindblad_terms():
        ldl = op.conj().T @ op
        sup += r * (np.kron(op, op.conj()) - 0.5 * np.kron(ldl, one) - 0.5 * np.kron(one, ldl.T))
    return expm(sup * duration)


def apply_superoperator(sup: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Apply a 256x256 superoperator to a matrix or a stack of matrices."""
    rho = np.asarray(rho, dtype=complex)
    flat = rho.reshape(rho.shape[:-2] + (DIM * DIM,))
    out = (flat @ sup.T).reshape(rho.shape)
    return 0.5 * (out + np.swapaxes(out, -1, -2).conj())
