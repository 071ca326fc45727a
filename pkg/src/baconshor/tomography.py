"""Logical process tomography and rate fitting."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .pauli import SINGLE_QUBIT
from .validation import check_times

PAULI_LABELS = "IXYZ"
_P = [SINGLE_QUBIT[c] for c in PAULI_LABELS]


class TomographyError(ValueError):
    """Raised when the tomography input set is not informationally complete."""


def bloch_to_rho(v) -> np.ndarray:
    x, y, z = v
    return 0.5 * (np.eye(2) + x * _P[1] + y * _P[2] + z * _P[3])


# default informationally complete inputs +z, -z, +x, +y
TOMOGRAPHY_INPUTS = np.array([[0, 0, 1], [0, 0, -1], [1, 0, 0], [0, 1, 0]], dtype=float)


def _vec(m: np.ndarray) -> np.ndarray:
    return m.reshape(m.shape[:-2] + (4,))


def superoperator(inputs: np.ndarray, outputs: np.ndarray) -> np.ndarray:
    """Linear map ``S`` with ``vec(out) = S vec(in)`` from input/output pairs.

    ``inputs`` and ``outputs`` have shape (n, 2, 2); ``outputs`` may carry a
    leading batch axis, giving (..., n, 2, 2).
    """
    inputs = np.asarray(inputs, dtype=complex)
    outputs = np.asarray(outputs, dtype=complex)
    a = _vec(inputs).T  # (4, n)
    if np.linalg.matrix_rank(a, tol=1e-9) < 4:
        raise TomographyError("input states are not informationally complete")
    b = np.swapaxes(_vec(outputs), -1, -2)  # (..., 4, n)
    return b @ np.linalg.pinv(a)


def chi_from_superoperator(S: np.ndarray) -> np.ndarray:
    """Process matrix over (I, X, Y, Z) with ``E(rho) = sum chi_mn P_m rho P_n``."""
    S = np.asarray(S, dtype=complex)
    choi = np.zeros(S.shape[:-2] + (4, 4), dtype=complex)
    for i in range(2):
        for j in range(2):
            unit = np.zeros((2, 2), dtype=complex)
            unit[i, j] = 1
            out = (S @ _vec(unit)).reshape(S.shape[:-2] + (2, 2))
            choi += np.einsum("ab,...cd->...acbd", unit, out).reshape(S.shape[:-2] + (4, 4))
    omega = np.eye(2).reshape(4)
    v = np.stack([np.kron(np.eye(2), p) @ omega for p in _P])  # (4 paulis, 4)
    return np.einsum("mi,...ij,nj->...mn", v.conj(), choi, v) / 4


def chi_from_units(e00, e11, e01) -> np.ndarray:
    """Process matrix from the images of |0><0|, |1><1| and |0><1|."""
    e00, e11, e01 = (np.asarray(x, dtype=complex) for x in (e00, e11, e01))
    e10 = np.swapaxes(e01, -1, -2).conj()
    cols = [e00, e10, e01, e11]  # vec order: (0,0), (0,1), (1,0), (1,1) of inputs
    S = np.stack([_vec(c) for c in cols], axis=-1)
    # column for input unit |i><j| sits at index 2 i + j
    S = S[..., [0, 2, 1, 3]]
    return chi_from_superoperator(S)


def process_chi(outputs: np.ndarray, inputs_bloch: np.ndarray = TOMOGRAPHY_INPUTS) -> np.ndarray:
    """Unnormalized process matrix from logical outputs of the tomography inputs."""
    inputs = np.stack([bloch_to_rho(v) for v in np.asarray(inputs_bloch, dtype=float)])
    return chi_from_superoperator(superoperator(inputs, outputs))


@dataclass(frozen=True)
class ChiMatrix:
    """4x4 logical process matrix over the Pauli basis I, X, Y, Z."""

    values: np.ndarray
    normalized: bool = False

    def __getitem__(self, key: str) -> complex:
        m, n = (PAULI_LABELS.index(c) for c in key)
        return complex(self.values[m, n])

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.values)))

    def normalize(self) -> "ChiMatrix":
        if self.trace <= 0:
            raise TomographyError("process matrix has vanishing trace")
        return ChiMatrix(self.values / self.trace, True)

    def is_hermitian(self, atol: float = 1e-10) -> bool:
        return bool(np.allclose(self.values, self.values.conj().T, atol=atol))


def normalize_chi(chi: np.ndarray) -> np.ndarray:
    """Divide each process matrix in a stack by its trace."""
    chi = np.asarray(chi, dtype=complex)
    tr = np.real(np.einsum("...ii->...", chi))
    if np.any(tr <= 0):
        raise TomographyError("process matrix has vanishing trace")
    return chi / tr[..., None, None]


def _tail(times: np.ndarray, discard: float) -> np.ndarray:
    n = len(times)
    start = int(np.floor(discard * n))
    return np.arange(start, n)


@dataclass(frozen=True)
class TerminationFit:
    rate: float
    stderr: float
    upper_bound: float | None = None


def fit_termination(times, survival, n_traj: float | None = None, stderr=None,
                    discard: float = 0.0) -> TerminationFit:
    """Termination rate from survival fractions, ``P(T) = A exp(-gamma T)``.

    Weighted least squares on ``log P`` with weights from binomial counts
    (``n_traj``) or explicit standard errors of ``P``.  If nothing decays the
    rate is 0 and a one-sided 95% bound is reported.
    """
    t = check_times(times)
    p = np.asarray(survival, dtype=float)
    if p.shape != t.shape:
        raise ValueError("times and survival must have the same length")
    idx = _tail(t, discard)
    if len(idx) < 2:
        raise ValueError("need at least two time points after the discarded window")
    if np.any(p[idx] <= 0) or np.any(p[idx] > 1 + 1e-12):
        raise ValueError("survival fractions must lie in (0, 1]")
    t, p = t[idx], p[idx]
    if np.all(p >= 1):
        bound = None
        if n_traj:
            bound = float(-np.log(0.05) / (n_traj * t[-1]))
        return TerminationFit(0.0, 0.0, bound)
    if stderr is not None:
        se = np.asarray(stderr, dtype=float)[idx]
        sig = np.maximum(se / p, 1e-300)
    elif n_traj:
        sig = np.sqrt(np.maximum(1 - p, 1 / n_traj) / (n_traj * p))
    else:
        sig = np.ones_like(p)
    w = 1 / sig**2
    X = np.column_stack([np.ones_like(t), t])
    y = np.log(p)
    cov = np.linalg.inv(X.T @ (w[:, None] * X))
    beta = cov @ X.T @ (w * y)
    if n_traj is None and stderr is None:
        resid = y - X @ beta
        dof = max(len(t) - 2, 1)
        cov = cov * float(resid @ resid) / dof
    return TerminationFit(float(-beta[1]), float(np.sqrt(cov[1, 1])))


def fit_slope(times, values, discard: float = 0.1) -> tuple[float, float, float]:
    """OLS slope, intercept and slope standard error after dropping the first
    ``discard`` fraction of points."""
    t = check_times(times)
    v = np.asarray(values, dtype=float)
    idx = _tail(t, discard)
    t, v = t[idx], v[idx]
    X = np.column_stack([np.ones_like(t), t])
    beta, res, *_ = np.linalg.lstsq(X, v, rcond=None)
    resid = v - X @ beta
    dof = max(len(t) - 2, 1)
    cov = np.linalg.inv(X.T @ X) * float(resid @ resid) / dof
    return float(beta[1]), float(beta[0]), float(np.sqrt(cov[1, 1]))


class ChiSlopeEstimator(BaseEstimator):
    """Fit linear growth of process-matrix elements in time.

    ``fit(times, chi)`` takes trace-normalized matrices of shape (n, 4, 4) and
    stores complex slopes and intercepts of every element.
    """

    def __init__(self, discard: float = 0.1):
        self.discard = discard

    def fit(self, times, chi):
        t = check_times(times)
        chi = np.asarray(chi, dtype=complex)
        if chi.shape != (len(t), 4, 4):
            raise ValueError("chi must have shape (n_times, 4, 4)")
        slopes = np.zeros((4, 4), dtype=complex)
        icpt = np.zeros((4, 4), dtype=complex)
        err = np.zeros((4, 4), dtype=complex)
        for m in range(4):
            for n in range(4):
                sr, ir, er = fit_slope(t, chi[:, m, n].real, self.discard)
                si, ii, ei = fit_slope(t, chi[:, m, n].imag, self.discard)
                slopes[m, n] = sr + 1j * si
                icpt[m, n] = ir + 1j * ii
                err[m, n] = er + 1j * ei
        self.slopes_ = slopes
        self.intercepts_ = icpt
        self.slope_stderr_ = err
        return self

    def rates(self) -> dict[str, float]:
        """Logical error rates from the diagonal slopes."""
        return {f"gamma_{c}": float(self.slopes_[i, i].real) for i, c in enumerate(PAULI_LABELS) if c != "I"}


class TerminationRateEstimator(BaseEstimator):
    """Estimator wrapper around :func:`fit_termination`."""

    def __init__(self, n_traj: float | None = None, discard: float = 0.0):
        self.n_traj = n_traj
        self.discard = discard

    def fit(self, times, survival, stderr=None):
        res = fit_termination(times, survival, self.n_traj, stderr, self.discard)
        if res.rate == 0 and res.upper_bound is None and self.n_traj is None:
            warnings.warn("no decay observed; rate reported as 0", stacklevel=2)
        self.rate_ = res.rate
        self.stderr_ = res.stderr
        self.upper_bound_ = res.upper_bound
        return self
