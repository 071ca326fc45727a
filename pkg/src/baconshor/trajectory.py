"""Quantum trajectories of the continuously monitored four-qubit code.

Two descriptions are provided.  The dense one evolves the full 16x16 density
matrix with a quantum Bayesian update per detector and frame.  The reduced
one tracks only the error subspace, a logical Pauli frame and the gauge-qubit
Bloch vector, which is exact for Pauli errors on a code state.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import _kernels
from .decoherence import DecoherenceModel, LindbladGenerator, lindblad_step
from .detectors import DetectorBank
from .pauli import (
    DIM,
    GAUGE,
    PauliString,
    SubspaceTag,
    code_basis,
    error_subspace_map,
    gauge_action,
    pauli,
    single_qubit_errors,
)

PAULI_INDEX = {"I": 0, "X": 1, "Y": 2, "Z": 3}
PAULI_NAMES = "IXYZ"


class NumericalError(RuntimeError):
    """Raised when a state loses normalization or positivity beyond tolerance."""


@lru_cache(maxsize=None)
def _gauge_matrices() -> tuple[np.ndarray, ...]:
    out = []
    for g in GAUGE:
        m = g.to_matrix()
        m.setflags(write=False)
        out.append(m)
    return tuple(out)


def _check_rho(rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (DIM, DIM):
        raise ValueError(f"density matrix must be {DIM}x{DIM}, got {rho.shape}")
    return rho


def readout_likelihoods(r: float, tau: float, dt: float) -> tuple[float, float]:
    """Gaussian likelihoods of readout ``r`` given eigenvalue +1 and -1."""
    var = tau / dt
    norm = 1 / np.sqrt(2 * np.pi * var)
    return norm * np.exp(-((r - 1) ** 2) / (2 * var)), norm * np.exp(-((r + 1) ** 2) / (2 * var))


def sample_readout(rho: np.ndarray, k: int, bank: DetectorBank, dt: float, rng: np.random.Generator) -> float:
    """Draw the frame-averaged output of detector ``k`` (0-based).

    The result is a mixture of two Gaussians centred at +1 and -1 with
    variance ``tau_k/dt``, weighted by the populations of the G_k eigenspaces.
    """
    g = _gauge_matrices()[k]
    ev = float(np.real(np.trace(g @ rho)) / np.real(np.trace(rho)))
    p_plus = min(max(0.5 * (1 + ev), 0.0), 1.0)
    centre = 1.0 if rng.random() < p_plus else -1.0
    return centre + np.sqrt(bank.tau[k] / dt) * rng.standard_normal()


def kraus_update(rho: np.ndarray, k: int, r: float, bank: DetectorBank, dt: float) -> np.ndarray:
    """Unnormalized measurement map of detector ``k`` for readout ``r``.

    Linear in ``rho``, which may be any operator or a stack of operators
    (for example images of non-Hermitian units |i><j|).  The overall scale
    is arbitrary; only ratios between branches are meaningful.
    """
    g = _gauge_matrices()[k]
    tau, K, eps = bank.tau[k], bank.K[k], bank.eps[k]
    lam = r * dt / tau
    phi = (K * r + eps) * dt
    # sqrt(P+) and sqrt(P-) relative to the larger of the two
    cp = np.exp(min(lam, 0.0))
    cm = np.exp(-max(lam, 0.0)) * np.exp(-1j * phi)
    one = np.eye(DIM)
    m = 0.5 * (cp * (one + g) + cm * (one - g))
    out = m @ rho @ m.conj().T
    gres = bank.residual_dephasing[k]
    if gres > 0:
        flip = g @ out @ g
        d = np.exp(-gres * dt)
        out = 0.5 * (out + flip) + 0.5 * d * (out - flip)
    return out


def bayesian_update(rho: np.ndarray, k: int, r: float, bank: DetectorBank, dt: float) -> np.ndarray:
    """Update ``rho`` after readout ``r`` of detector ``k`` over one frame ``dt``.

    The +1 and -1 eigenspaces of G_k are weighted by the square roots of the
    readout likelihoods, the -1 branch picks up the phase ``(K r + eps) dt``,
    and coherences between the eigenspaces decay by the residual dephasing
    ``Gamma - 1/(2 tau) - K^2 tau/2``.  The result is normalized.
    """
    rho = _check_rho(rho)
    out = kraus_update(rho, k, r, bank, dt)
    tr = np.real(np.trace(out))
    if not np.isfinite(tr) or tr <= 0:
        raise NumericalError("Bayesian update produced a non-positive trace")
    out = out / tr
    return 0.5 * (out + out.conj().T)


@dataclass
class ErrorInjectionPlan:
    """How single-qubit errors enter a trajectory.

    ``mode`` is ``"lindblad"`` (deterministic averaging inside the density
    matrix) or ``"jumps"`` (stochastic jumps with no-jump back-action).
    ``scheduled`` lists ``(time, PauliString)`` errors applied at given times.
    """

    model: DecoherenceModel = field(default_factory=DecoherenceModel.none)
    mode: str = "lindblad"
    scheduled: tuple = ()

    def __post_init__(self):
        if self.mode not in ("lindblad", "jumps"):
            raise ValueError(f"unknown injection mode {self.mode!r}")
        self.scheduled = tuple((float(t), pauli(e) if isinstance(e, str) else e) for t, e in self.scheduled)


def inject_errors(rho: np.ndarray, plan: ErrorInjectionPlan, dt: float, rng: np.random.Generator,
                  t: float = 0.0) -> tuple[np.ndarray, list[str]]:
    """Apply scheduled errors in ``[t, t+dt)`` and, in jump mode, sample jumps.

    Returns the normalized state and the labels of the errors that occurred.
    """
    rho = _check_rho(rho)
    happened = []
    for ts, e in plan.scheduled:
        if t <= ts < t + dt:
            m = e.to_matrix()
            rho = m @ rho @ m.conj().T
            happened.append(str(e))
    if plan.mode == "jumps":
        terms = plan.model.lindblad_terms()
        labels = plan.model.operator_labels()
        probs = np.array([r * dt * np.real(np.trace(op.conj().T @ op @ rho)) for op, r in terms])
        u = rng.random()
        if terms and u < probs.sum():
            j = int(np.searchsorted(np.cumsum(probs), u, side="right"))
            op = terms[j][0]
            rho = op @ rho @ op.conj().T
            happened.append(labels[j])
        elif terms:
            ldl = sum(r * op.conj().T @ op for op, r in terms)
            k0 = np.eye(DIM) - 0.5 * dt * ldl
            rho = k0 @ rho @ k0.conj().T
    tr = np.real(np.trace(rho))
    return 0.5 * (rho + rho.conj().T) / tr, happened


def sme_step(rho: np.ndarray, bank: DetectorBank, plan: ErrorInjectionPlan | DecoherenceModel, dt: float,
             rng: np.random.Generator, t: float = 0.0,
             generator: LindbladGenerator | None = None) -> tuple[np.ndarray, np.ndarray]:
    """One frame of continuous measurement of G1..G4 plus decoherence.

    The four detectors are applied sequentially, each reading the state left
    by the previous one.  Returns the new state and the four readouts.
    """
    if isinstance(plan, DecoherenceModel):
        plan = ErrorInjectionPlan(plan)
    readouts = np.empty(4)
    for k in range(4):
        readouts[k] = sample_readout(rho, k, bank, dt, rng)
        rho = bayesian_update(rho, k, readouts[k], bank, dt)
    if plan.mode == "lindblad" and plan.model.kind != "none":
        rho = lindblad_step(rho, generator or plan.model, dt)
    rho, _ = inject_errors(rho, plan, dt, rng, t)
    return rho, readouts


def check_state(rho: np.ndarray, tol: float = 1e-9) -> None:
    """Raise :class:`NumericalError` if ``rho`` is not a valid density matrix."""
    if abs(np.real(np.trace(rho)) - 1) > tol:
        raise NumericalError("trace drifted from one")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -tol:
        raise NumericalError("density matrix lost positivity")


def subspace_weights(rho: np.ndarray) -> np.ndarray:
    """Populations of Q0, QX, QY, QZ."""
    q = code_basis().to_code(rho)
    d = np.real(np.diag(q))
    return d.reshape(4, 4).sum(axis=1)


def gauge_bloch(rho: np.ndarray, tag: SubspaceTag = SubspaceTag.Q0) -> np.ndarray:
    """Gauge-qubit Bloch vector of the block of ``rho`` in subspace ``tag``."""
    q = code_basis().to_code(rho)
    s = int(tag)
    blk = q[4 * s:4 * s + 4, 4 * s:4 * s + 4].reshape(2, 2, 2, 2)
    rg = np.einsum("lalb->ab", blk)
    tr = np.real(np.trace(rg))
    return np.array([2 * np.real(rg[0, 1]), -2 * np.imag(rg[0, 1]), np.real(rg[0, 0] - rg[1, 1])]) / tr


# ------------------------------------------------------------ reduced model

@lru_cache(maxsize=None)
def subspace_tables() -> dict[str, np.ndarray]:
    """Lookup tables for the reduced model, derived from the Pauli algebra.

    ``sign[s, k]`` is the sign of G_k within subspace s.  For the twelve
    single-qubit errors ordered (qubit, X/Y/Z), ``next``, ``gauge`` and
    ``logical`` give the target subspace and the induced gauge and logical
    Paulis (index 0..3 for I, X, Y, Z) for every source subspace.
    """
    sign = np.zeros((4, 4), dtype=np.int64)
    for s in SubspaceTag:
        for k in range(4):
            sign[s, k] = gauge_action(k + 1, s)[0]
    errors = single_qubit_errors()
    nxt = np.zeros((12, 4), dtype=np.int64)
    gau = np.zeros((12, 4), dtype=np.int64)
    log = np.zeros((12, 4), dtype=np.int64)
    for e_i, e in enumerate(errors):
        for s in SubspaceTag:
            lab = error_subspace_map(e, s)
            nxt[e_i, s] = int(lab.tag)
            gau[e_i, s] = PAULI_INDEX[lab.gauge_op]
            log[e_i, s] = PAULI_INDEX[lab.logical_op]
    out = {"sign": sign, "next": nxt, "gauge": gau, "logical": log}
    for v in out.values():
        v.setflags(write=False)
    return out


def error_index(error: PauliString | str) -> int:
    """Position of a single-qubit error in the reduced-model tables."""
    e = pauli(error) if isinstance(error, str) else error
    for i, cand in enumerate(single_qubit_errors()):
        if cand.ops == e.ops:
            return i
    raise ValueError(f"{error} is not a single-qubit Pauli error")


@dataclass
class GaugeQubitState:
    """Reduced state: gauge Bloch vector, error subspace and logical Pauli frame."""

    bloch: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    subspace: SubspaceTag = SubspaceTag.Q0
    frame: str = "I"

    def __post_init__(self):
        self.bloch = np.asarray(self.bloch, dtype=float).copy()
        if self.bloch.shape != (3,) or np.linalg.norm(self.bloch) > 1 + 1e-9:
            raise ValueError("gauge Bloch vector must have length at most one")
        self.subspace = SubspaceTag(self.subspace)

    def copy(self) -> "GaugeQubitState":
        return GaugeQubitState(self.bloch.copy(), self.subspace, self.frame)

    def apply_error(self, error: PauliString | str) -> None:
        tabs = subspace_tables()
        e = error_index(error)
        s = int(self.subspace)
        _kernels.apply_gauge_pauli(self.bloch, int(tabs["gauge"][e, s]))
        f = _kernels.pauli_product_index(int(tabs["logical"][e, s]), PAULI_INDEX[self.frame])
        self.frame = PAULI_NAMES[f]
        self.subspace = SubspaceTag(int(tabs["next"][e, s]))

    def signal_signs(self) -> np.ndarray:
        return subspace_tables()["sign"][int(self.subspace)].astype(float)


def _damping(bank: DetectorBank, dt: float) -> np.ndarray:
    return np.exp(-bank.residual_dephasing * dt)


def gauge_bloch_step(state: GaugeQubitState, bank: DetectorBank, dt: float,
                     rng: np.random.Generator | None = None,
                     readouts: np.ndarray | None = None) -> tuple[GaugeQubitState, np.ndarray]:
    """One frame of the reduced model.

    Either ``readouts`` are supplied (for example taken from a dense
    trajectory) or they are drawn with ``rng``.  The update is the same
    sequential Bayesian rule as the dense model, restricted to the gauge
    qubit; in an error subspace the signs of the affected signals flip.
    """
    new = state.copy()
    signs = new.signal_signs()
    if readouts is None:
        if rng is None:
            raise ValueError("either readouts or rng must be given")
        readouts = np.empty(4)
        for k in range(4):
            axis = 0 if k < 2 else 2
            p_plus = min(max(0.5 * (1 + signs[k] * new.bloch[axis]), 0.0), 1.0)
            centre = 1.0 if rng.random() < p_plus else -1.0
            readouts[k] = centre + np.sqrt(bank.tau[k] / dt) * rng.standard_normal()
            _kernels.gauge_measure(new.bloch, axis, signs[k] * readouts[k],
                                   signs[k] * (bank.K[k] * readouts[k] + bank.eps[k]) * dt,
                                   dt / bank.tau[k], float(np.exp(-bank.residual_dephasing[k] * dt)))
    else:
        readouts = np.asarray(readouts, dtype=float).copy()
        tau = np.asarray(bank.tau, dtype=float)
        _kernels.gauge_measure_all(np.random.default_rng(0), new.bloch, signs.astype(float), readouts, dt,
                                   np.sqrt(tau / dt), dt / tau, np.asarray(bank.K, dtype=float),
                                   np.asarray(bank.eps, dtype=float), _damping(bank, dt), False)
    return new, readouts


def gauge_bloch_drift(bloch: np.ndarray, bank: DetectorBank,
                      subspace: SubspaceTag = SubspaceTag.Q0) -> tuple[np.ndarray, np.ndarray]:
    """Ito drift and noise coefficients of the gauge Bloch vector.

    Returns ``(drift, B)`` with ``db = drift dt + B dW`` where ``dW`` are the
    Wiener increments of the four detector outputs.  Inside an error subspace
    the noise and frequency shift of each sign-flipped detector change sign.
    """
    x, y, z = bloch
    sg = subspace_tables()["sign"][int(subspace)]
    drift = np.zeros(3)
    B = np.zeros((3, 4))
    for k in range(4):
        s = sg[k]
        st = np.sqrt(bank.tau[k])
        gam, K, eps = bank.gamma[k], bank.K[k], s * bank.eps[k]
        if k < 2:
            drift += [0.0, -gam * y + eps * z, -gam * z - eps * y]
            B[:, k] = s * np.array([(1 - x * x) / st, K * st * z - x * y / st, -K * st * y - x * z / st])
        else:
            drift += [-gam * x + eps * y, -gam * y - eps * x, 0.0]
            B[:, k] = s * np.array([K * st * y - x * z / st, -K * st * x - y * z / st, (1 - z * z) / st])
    return drift, B
