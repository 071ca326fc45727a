"""Parameters of the four continuous gauge-operator detectors."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DetectorError(ValueError):
    """Raised when detector parameters violate the quantum efficiency bound."""


@dataclass(frozen=True)
class DetectorBank:
    """Measurement times ``tau``, ensemble dephasing ``gamma``, phase back-action
    ``K`` and frequency shift ``eps`` for the detectors of G1..G4.

    Physical consistency requires ``gamma >= 1/(2 tau) + K**2 tau / 2``.
    """

    tau: np.ndarray
    gamma: np.ndarray
    K: np.ndarray
    eps: np.ndarray

    def __post_init__(self):
        arrs = {}
        for name in ("tau", "gamma", "K", "eps"):
            a = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (4,)).copy()
            if not np.all(np.isfinite(a)):
                raise DetectorError(f"{name} must be finite")
            a.setflags(write=False)
            arrs[name] = a
            object.__setattr__(self, name, a)
        if np.any(arrs["tau"] <= 0):
            raise DetectorError("measurement times must be positive")
        floor = 1 / (2 * arrs["tau"]) + arrs["K"] ** 2 * arrs["tau"] / 2
        if np.any(arrs["gamma"] < floor * (1 - 1e-12)):
            raise DetectorError("ensemble dephasing below the quantum limit 1/(2 tau) + K^2 tau/2")

    @classmethod
    def uniform(cls, tau_m: float = 1.0, eta: float = 1.0, K: float = 0.0, eps: float = 0.0) -> "DetectorBank":
        """Identical detectors with quantum efficiency ``eta = 1/(2 gamma tau)``."""
        if not 0 < eta <= 1:
            raise DetectorError("efficiency must lie in (0, 1]")
        gamma = 1 / (2 * eta * tau_m)
        return cls(tau_m, gamma, K, eps)

    @property
    def efficiency(self) -> np.ndarray:
        """eta_k = 1/(2 Gamma_k tau_k)."""
        return 1 / (2 * self.gamma * self.tau)

    @property
    def ideality(self) -> np.ndarray:
        """(1 + K^2 tau^2)/(2 Gamma tau); equal to 1 for a pure-state preserving detector."""
        return (1 + self.K**2 * self.tau**2) / (2 * self.gamma * self.tau)

    @property
    def residual_dephasing(self) -> np.ndarray:
        """Dephasing not accounted for by information gain or phase back-action."""
        return np.maximum(self.gamma - 1 / (2 * self.tau) - self.K**2 * self.tau / 2, 0.0)

    @property
    def gamma_m(self) -> float:
        """Mean ensemble dephasing rate, used to set the correlator time scales."""
        return float(np.mean(self.gamma))

    @property
    def tau_m(self) -> float:
        return float(np.mean(self.tau))

    def is_uniform(self) -> bool:
        return all(np.all(a == a[0]) for a in (self.tau, self.gamma, self.K, self.eps))

    def as_arrays(self) -> np.ndarray:
        """(4, 4) array with rows tau, gamma, K, eps."""
        return np.stack([self.tau, self.gamma, self.K, self.eps])
