"""Argument packing for the compiled trajectory kernels."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .decoherence import DecoherenceModel
from .detectors import DetectorBank
from .pauli import SubspaceTag, code_basis, encode, z_type_projectors
from .trajectory import NumericalError, error_index, subspace_tables


def trajectory_rng(seed: int, index: int, purpose: int = 0) -> np.random.Generator:
    """Generator for one trajectory, keyed by (seed, purpose, index).

    Streams depend only on the trajectory index, so any partition of the
    trajectories across workers gives identical results.
    """
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(purpose), int(index))))


def check_time_step(bank: DetectorBank, dt: float) -> None:
    if not dt > 0:
        raise ValueError("time step must be positive")
    if dt > 5e-3 * np.min(2 * bank.tau) * 1.000001:
        raise NumericalError("time step exceeds 5e-3 of the shortest 2 tau_k")


def detector_args(bank: DetectorBank, dt: float) -> dict:
    damp = np.exp(-bank.residual_dephasing * dt)
    return {
        "tau": np.array(bank.tau, dtype=float),
        "K": np.array(bank.K, dtype=float),
        "eps": np.array(bank.eps, dtype=float),
        "damp": damp,
    }


@dataclass(frozen=True)
class MonitorArgs:
    inner: int
    kernel: int
    a_in: float
    a_out: float
    nwin: int
    wlast: float
    tdt: float
    c_init: float
    thr: float
    arm_step: int

    def as_tuple(self) -> tuple:
        return (self.inner, self.kernel, self.a_in, self.a_out, self.nwin, self.wlast, self.tdt)


def disarmed_monitor() -> MonitorArgs:
    return MonitorArgs(0, 0, 0.0, 0.0, 1, 1.0, 1.0, 0.0, -np.inf, np.iinfo(np.int64).max)


def pauli_tables(model: DecoherenceModel) -> dict:
    """Rates and subspace transition tables for the twelve Pauli errors."""
    tabs = subspace_tables()
    rates = model.pauli_rates().reshape(12)
    return {
        "sub_sign": np.array(tabs["sign"], dtype=float),
        "rates": rates.astype(float),
        "jump_next": np.array(tabs["next"]),
        "jump_gauge": np.array(tabs["gauge"]),
        "jump_logical": np.array(tabs["logical"]),
    }


def run_gauge(seed: int, indices, n_steps: int, dt: float, bank: DetectorBank, model: DecoherenceModel,
              monitor: MonitorArgs, rec_steps, boost: float = 1.0, bloch0=(0.0, 0.0, 1.0),
              sub0: int = 0, stop_on_alarm: bool = True, inject_step: int = -1,
              inject: str | None = None, purpose: int = 0) -> dict:
    """Reduced-model trajectories ``indices`` of the stream ``(seed, purpose)``.

    Returns per-trajectory alarm step and pair (-1 if none), jump counts and
    records (alive flag, importance weight, subspace, logical Pauli frame)
    at each frame count in ``rec_steps``.
    """
    if not model.is_pauli:
        raise ValueError("the gauge-qubit engine supports Pauli error models only")
    check_time_step(bank, dt)
    indices = np.atleast_1d(np.asarray(indices, dtype=np.int64))
    rec_steps = np.asarray(rec_steps, dtype=np.int64)
    tabs = pauli_tables(model)
    det = detector_args(bank, dt)
    inject_idx = error_index(inject) if inject is not None else 0
    n, n_rec = len(indices), len(rec_steps)
    out = {
        "alarm_step": np.full(n, -1, dtype=np.int64),
        "alarm_pair": np.full(n, -1, dtype=np.int64),
        "n_jumps": np.zeros(n, dtype=np.int64),
        "inject_seen": np.full(n, -1, dtype=np.int64),
        "alive": np.zeros((n, n_rec), dtype=np.bool_),
        "weight": np.zeros((n, n_rec)),
        "subspace": np.zeros((n, n_rec), dtype=np.int64),
        "frame": np.zeros((n, n_rec), dtype=np.int64),
    }
    b0 = np.asarray(bloch0, dtype=float)
    for t, idx in enumerate(indices):
        rng = trajectory_rng(seed, idx, purpose)
        res = _kernels.run_gauge_trajectory(
            rng, int(n_steps), float(dt), det["tau"], det["K"], det["eps"], det["damp"],
            tabs["sub_sign"], tabs["rates"], tabs["jump_next"], tabs["jump_gauge"], tabs["jump_logical"],
            float(boost), b0, int(sub0), *monitor.as_tuple(), monitor.c_init, monitor.thr,
            monitor.arm_step, bool(stop_on_alarm), int(inject_step), int(inject_idx), rec_steps,
            out["alive"][t], out["weight"][t], out["subspace"][t], out["frame"][t])
        out["alarm_step"][t], out["alarm_pair"][t], out["n_jumps"][t], out["inject_seen"][t] = res
    return out


def gauge_trace(rng: np.random.Generator, n_steps: int, dt: float, bank: DetectorBank,
                model: DecoherenceModel, bloch0=(0.0, 0.0, 1.0), sub0: int = 0, inject_step: int = -1,
                inject: str | None = None) -> dict:
    """Single reduced-model trajectory with full signal and state history."""
    tabs = pauli_tables(model)
    det = detector_args(bank, dt)
    inject_idx = error_index(inject) if inject is not None else 0
    sig, bl, subs, frames = _kernels.gauge_trace(
        rng, int(n_steps), float(dt), det["tau"], det["K"], det["eps"], det["damp"],
        tabs["sub_sign"], tabs["rates"], tabs["jump_next"], tabs["jump_gauge"], tabs["jump_logical"],
        np.asarray(bloch0, dtype=float), int(sub0), int(inject_step), int(inject_idx))
    return {"signals": sig, "bloch": bl, "subspace": subs, "frame": frames}


def _statevector_ops(model: DecoherenceModel) -> dict:
    ops = model.operators()
    n = len(ops)
    mats = np.zeros((n, 2, 2), dtype=complex)
    diag = np.zeros((n, 16))
    qubit = np.zeros(n, dtype=np.int64)
    rate = np.zeros(n)
    bits = (np.arange(16)[None, :] >> (3 - np.arange(4)[:, None])) & 1  # (qubit, index)
    for i, (q, m, r) in enumerate(ops):
        ldl = m.conj().T @ m
        if abs(ldl[0, 1]) > 1e-14 or abs(ldl[1, 0]) > 1e-14:
            raise ValueError("jump operators must have diagonal L^dag L")
        mats[i] = m
        qubit[i] = q - 1
        rate[i] = r
        diag[i] = np.real(ldl[bits[q - 1], bits[q - 1]])
    return {"op_qubit": qubit, "op_mat": mats, "op_diag": diag, "op_rate": rate}


def decode_tables() -> dict:
    b0 = code_basis().block(SubspaceTag.Q0)
    pp, mm = z_type_projectors()
    return {
        "b0h": np.ascontiguousarray(b0.conj().T),
        "pp_mask": np.abs(np.diag(pp) - 1) < 1e-12,
        "mm_mask": np.abs(np.diag(mm) - 1) < 1e-12,
    }


def logical_pair(gauge: str = "z+") -> np.ndarray:
    """Encoded logical |0> and |1> sharing one gauge state."""
    return np.stack([encode(1, 0, gauge), encode(0, 1, gauge)])


def run_statevector(seed: int, indices, n_steps: int, dt: float, bank: DetectorBank,
                    model: DecoherenceModel, monitor: MonitorArgs, rec_steps, boost: float = 1.0,
                    psi0=None, weights=None, stop_on_alarm: bool = True, purpose: int = 0) -> dict:
    """Pure-state trajectories of the full register.

    By default both encoded basis states are propagated with common random
    numbers and sampled from their equal mixture, so ``units`` holds
    unbiased estimates of the decoded images of |0><0|, |1><1| and |0><1|
    (shape (n, n_rec, 3, 2, 2)) and ``norms`` the traces of the undecoded
    images, from which the survival of any input follows.
    """
    if np.any(bank.residual_dephasing > 1e-12):
        raise ValueError("the state-vector engine requires ideal detectors")
    check_time_step(bank, dt)
    if psi0 is None:
        psi0 = logical_pair()
    psi0 = np.ascontiguousarray(np.atleast_2d(np.asarray(psi0, dtype=complex)))
    if weights is None:
        weights = np.full(len(psi0), 1.0 / len(psi0))
    weights = np.asarray(weights, dtype=float)
    indices = np.atleast_1d(np.asarray(indices, dtype=np.int64))
    rec_steps = np.asarray(rec_steps, dtype=np.int64)
    det = detector_args(bank, dt)
    ops = _statevector_ops(model)
    dec = decode_tables()
    n, n_rec = len(indices), len(rec_steps)
    out = {
        "alarm_step": np.full(n, -1, dtype=np.int64),
        "alarm_pair": np.full(n, -1, dtype=np.int64),
        "n_jumps": np.zeros(n, dtype=np.int64),
        "alive": np.zeros((n, n_rec), dtype=np.bool_),
        "weight": np.zeros((n, n_rec)),
        "units": np.zeros((n, n_rec, 3, 2, 2), dtype=complex),
        "norms": np.zeros((n, n_rec, 3), dtype=complex),
    }
    for t, idx in enumerate(indices):
        rng = trajectory_rng(seed, idx, purpose)
        res = _kernels.run_statevector_trajectory(
            rng, psi0, weights, int(n_steps), float(dt), det["tau"], det["K"], det["eps"],
            ops["op_qubit"], ops["op_mat"], ops["op_diag"], ops["op_rate"], float(boost),
            dec["b0h"], dec["pp_mask"], dec["mm_mask"], *monitor.as_tuple(), monitor.c_init, monitor.thr,
            monitor.arm_step, bool(stop_on_alarm), rec_steps, out["alive"][t], out["weight"][t],
            out["units"][t], out["norms"][t])
        out["alarm_step"][t], out["alarm_pair"][t], out["n_jumps"][t] = res
    return out


def run_density(seed: int, indices, n_steps: int, dt: float, bank: DetectorBank, model: DecoherenceModel,
                correlator, rec_steps, armed: bool = True, stop_on_alarm: bool = True,
                purpose: int = 0) -> dict:
    """Density-matrix trajectories with decoherence averaged in the state.

    The images of |0><0|, |1><1| and |0><1| of one gauge-aligned logical
    pair are propagated linearly; readouts are drawn from their equal
    mixture and all images share its normalization, as in
    :func:`run_statevector`.  Handles any detector bank and decoherence
    model; decoherence acts through the exact one-frame propagator.
    ``correlator`` is a CorrelatorConfig or None.
    """
    from .decoherence import lindblad_propagator
    from .monitor import CorrelatorState, correlator_update
    from .pauli import decode_logical
    from .trajectory import kraus_update, sample_readout

    check_time_step(bank, dt)
    indices = np.atleast_1d(np.asarray(indices, dtype=np.int64))
    rec_steps = np.asarray(rec_steps, dtype=np.int64)
    n, n_rec = len(indices), len(rec_steps)
    prop = lindblad_propagator(model, dt) if model.kind != "none" else None
    psi = logical_pair()
    units0 = np.stack([np.outer(psi[a], psi[b].conj()) for a, b in ((0, 0), (1, 1), (0, 1))])
    out = {
        "alarm_step": np.full(n, -1, dtype=np.int64),
        "alarm_pair": np.full(n, -1, dtype=np.int64),
        "n_jumps": np.zeros(n, dtype=np.int64),
        "alive": np.zeros((n, n_rec), dtype=np.bool_),
        "weight": np.ones((n, n_rec)),
        "units": np.zeros((n, n_rec, 3, 2, 2), dtype=complex),
        "norms": np.zeros((n, n_rec, 3), dtype=complex),
    }
    for t, idx in enumerate(indices):
        rng = trajectory_rng(seed, idx, purpose)
        u = units0.copy()
        state = CorrelatorState(correlator, dt) if correlator is not None else None
        alive, ri = True, 0
        for step in range(n_steps):
            frame = np.empty(4)
            for k in range(4):
                ref = 0.5 * (u[0] + u[1])
                frame[k] = sample_readout(ref, k, bank, dt, rng)
                u = kraus_update(u, k, frame[k], bank, dt)
                u /= np.real(np.trace(0.5 * (u[0] + u[1])))
            if prop is not None:
                u = (u.reshape(3, -1) @ prop.T).reshape(u.shape)
                u /= np.real(np.trace(0.5 * (u[0] + u[1])))
            if state is not None:
                correlator_update(state, frame)
                if alive and armed and step >= state.args.arm_step:
                    low = np.flatnonzero(state.value < state.args.thr)
                    if len(low):
                        alive = False
                        out["alarm_step"][t] = step
                        out["alarm_pair"][t] = low[0]
            while ri < n_rec and rec_steps[ri] == step + 1:
                out["alive"][t, ri] = alive
                if alive:
                    out["units"][t, ri] = decode_logical(u)
                    out["norms"][t, ri] = np.trace(u, axis1=-2, axis2=-1)
                ri += 1
            if not alive and stop_on_alarm:
                break
    return out
