"""Input validation helpers shared by the estimators and runners."""
from __future__ import annotations

import numpy as np
from sklearn.utils import check_array

from .pauli import DIM


def check_signals(X, n_channels: int = 4) -> np.ndarray:
    """Detector records as a float array of shape (n_frames, n_channels)."""
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if X.shape[1] != n_channels:
        raise ValueError(f"expected {n_channels} detector channels, got {X.shape[1]}")
    return X


def check_times(t) -> np.ndarray:
    t = check_array(t, dtype=np.float64, ensure_2d=False)
    if t.ndim != 1:
        raise ValueError("times must be one-dimensional")
    if len(t) > 1 and np.any(np.diff(t) <= 0):
        raise ValueError("times must be strictly increasing")
    return t


def check_density_matrix(rho, atol: float = 1e-9, normalized: bool = True) -> np.ndarray:
    """16x16 Hermitian positive semidefinite matrix (unit trace if ``normalized``)."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (DIM, DIM):
        raise ValueError(f"density matrix must be {DIM}x{DIM}")
    if not np.allclose(rho, rho.conj().T, atol=atol):
        raise ValueError("density matrix must be Hermitian")
    if np.linalg.eigvalsh(rho).min() < -atol:
        raise ValueError("density matrix must be positive semidefinite")
    tr = np.real(np.trace(rho))
    if normalized and abs(tr - 1) > atol:
        raise ValueError("density matrix must have unit trace")
    if tr > 1 + atol:
        raise ValueError("trace exceeds one")
    return rho


def check_positive(name: str, value: float) -> float:
    v = float(value)
    if not np.isfinite(v) or v <= 0:
        raise ValueError(f"{name} must be positive, got {value!r}")
    return v
