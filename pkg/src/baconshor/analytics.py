"""Closed-form predictions: correlator statistics, false alarms, logical rates.

Time is measured in the same unit as ``tau_m`` throughout.  Rate formulas
use plain arithmetic on their inputs, so exact types such as
``fractions.Fraction`` pass through unchanged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from scipy.optimize import brentq

from .decoherence import DecoherenceModel

KERNELS = ("exponential", "rectangular")

# third-cumulant coefficients of the averaged correlator, kappa_3 = c / (Gamma_m T_c)^2,
# obtained numerically at eta = 1 and the optimal tau_c
KAPPA3_COEFF = {"exponential": 0.34, "rectangular": 1.05}


@dataclass(frozen=True)
class CorrelatorStats:
    """Mean and white-noise intensity of the symmetrized gauge-pair correlator."""

    tau_c: float
    gamma_m: float
    tau_m: float
    mean: float
    noise_power: float

    @property
    def amplitude(self) -> float:
        """A, with A^2 the low-frequency spectral density."""
        return math.sqrt(self.noise_power)

    @property
    def snr(self) -> float:
        """<C>^2 / A^2, in units of inverse time."""
        return self.mean**2 / self.noise_power

    @property
    def decay_rate(self) -> float:
        """Decay rate of the correlator autocorrelation, 2 Gamma_m + 1/tau_c."""
        return 2 * self.gamma_m + 1 / self.tau_c


def correlator_stats(tau_c: float, gamma_m: float, tau_m: float = 1.0) -> CorrelatorStats:
    """Statistics of the correlator in Q0 for inner time constant ``tau_c``."""
    if tau_c <= 0 or gamma_m <= 0 or tau_m <= 0:
        raise ValueError("tau_c, gamma_m and tau_m must be positive")
    s = 2 * gamma_m * tau_c
    mean = 1 / (1 + s)
    a2 = (tau_m**2 / (4 * tau_c) + 2 * tau_m * (1 + gamma_m * tau_c) / (1 + s) ** 2
          + 4 * gamma_m * tau_c**2 / (1 + s) ** 3)
    return CorrelatorStats(tau_c, gamma_m, tau_m, mean, a2)


def _optimality(s: float, eta: float) -> float:
    return 8 * eta * s**3 * (s + 2) + 4 * s**2 * (1 + s) ** 2 + (s**4 + 2 * s**3 - 2 * s - 1) / eta


def optimal_tau_c(eta: float, tau_m: float = 1.0) -> tuple[float, CorrelatorStats]:
    """Inner time constant maximizing <C>^2/A^2 for efficiency ``eta``.

    Solves for ``s = 2 Gamma_m tau_c`` with ``Gamma_m = 1/(2 eta tau_m)``.
    """
    if not 0 < eta <= 1:
        raise ValueError("efficiency must lie in (0, 1]")
    s = brentq(_optimality, 1e-9, 10.0, args=(eta,), xtol=1e-15)
    gamma_m = 1 / (2 * eta * tau_m)
    tau_c = s / (2 * gamma_m)
    return tau_c, correlator_stats(tau_c, gamma_m, tau_m)


def _check_kernel(kernel: str) -> None:
    if kernel not in KERNELS:
        raise ValueError(f"kernel must be one of {KERNELS}, got {kernel!r}")


def response_time(kernel: str, T_c: float, theta: float = 1.0) -> float:
    """Noiseless delay between an error and the alarm at threshold ``theta``."""
    _check_kernel(kernel)
    if not 0 < theta < 2:
        raise ValueError("threshold must lie in (0, 2)")
    if kernel == "rectangular":
        return theta * T_c / 2
    return T_c * math.log(2 / (2 - theta))


def averaging_time(kernel: str, T_R: float, theta: float = 1.0) -> float:
    """Outer averaging time giving response time ``T_R``."""
    return T_R / response_time(kernel, 1.0, theta)


def _log_false_alarm_rate(kernel: str, T_c: float, theta: float, stats: CorrelatorStats,
                          correction: float) -> float:
    _check_kernel(kernel)
    ca = stats.mean / stats.amplitude
    if kernel == "exponential":
        pref = theta * ca / math.sqrt(math.pi * T_c)
        expo = theta**2 * stats.snr * T_c
    else:
        pref = theta * ca / math.sqrt(2 * math.pi * T_c)
        expo = theta**2 * stats.snr * T_c / 2
    return math.log(pref) - expo * correction


def false_alarm_rate(kernel: str, T_c: float, theta: float, stats: CorrelatorStats,
                     correction: float = 1.0) -> float:
    """Rate of false alarms per gauge pair in the Gaussian rare-crossing limit.

    ``correction`` multiplies the exponent; use :func:`non_gaussian_factor`
    to include the skewness of the averaged correlator.
    """
    return math.exp(_log_false_alarm_rate(kernel, T_c, theta, stats, correction))


def optimal_threshold() -> float:
    """Threshold minimizing the false-alarm exponent at fixed response time
    for the exponential kernel, ignoring the prefactor."""
    return brentq(lambda th: math.log(2 / (2 - th)) - th / (2 * (2 - th)), 0.5, 1.99, xtol=1e-14)


def _log_rate_at_response(T_R, stats, kernel, policy, theta, correction) -> float:
    if policy == "fixed":
        return _log_false_alarm_rate(kernel, averaging_time(kernel, T_R, theta), theta, stats, correction)
    if policy == "optimal":
        th = optimal_threshold()
        return _log_false_alarm_rate("exponential", averaging_time("exponential", T_R, th), th, stats,
                                     correction)
    if policy == "shifted":
        ca = stats.mean / stats.amplitude
        expo = 2 * ca**2 * T_R - 2 * ca * math.sqrt(T_R) + 1
        return math.log(math.sqrt(2) * ca / math.sqrt(math.pi * T_R)) - expo * correction
    raise ValueError(f"unknown threshold policy {policy!r}")


def false_alarm_rate_at_response(T_R: float, stats: CorrelatorStats, kernel: str = "exponential",
                                 policy: str = "fixed", theta: float = 1.0, correction: float = 1.0) -> float:
    """False-alarm rate for a given response time.

    ``policy`` is ``fixed`` (threshold ``theta``), ``optimal`` (exponential
    kernel at the optimal threshold) or ``shifted`` (rectangular window whose
    start is delayed by its own length, with threshold chosen so that the
    response time is ``T_R``).
    """
    return math.exp(_log_rate_at_response(T_R, stats, kernel, policy, theta, correction))


def response_time_for_rate(target: float, stats: CorrelatorStats, kernel: str = "exponential",
                           policy: str = "fixed", theta: float = 1.0, correction: float = 1.0,
                           bounds: tuple[float, float] | None = None) -> float:
    """Response time at which the false-alarm rate equals ``target``."""
    if target <= 0:
        raise ValueError("target rate must be positive")
    lo, hi = bounds or (0.5 * stats.tau_m, 1e4 * stats.tau_m)
    log_target = math.log(target)

    def f(T_R):
        return _log_rate_at_response(T_R, stats, kernel, policy, theta, correction) - log_target

    # the rate is not monotone at very short times; bracket on the decaying branch
    grid = [lo * (hi / lo) ** (i / 400) for i in range(401)]
    vals = [f(t) for t in grid]
    for i in range(len(grid) - 1, 0, -1):
        if vals[i] <= 0 < vals[i - 1]:
            return brentq(f, grid[i - 1], grid[i], xtol=1e-12)
    raise ValueError("target rate not reachable within bounds")


def non_gaussian_factor(kernel: str, stats: CorrelatorStats, kappa3_coeff: float | None = None) -> float:
    """Factor multiplying the false-alarm exponent due to the third cumulant.

    Equals ``1 + <C> kappa_3 / (3 kappa_2^2)`` with ``kappa_2 = A^2/T_c``
    (rectangular) or ``A^2/(2 T_c)`` (exponential) and
    ``kappa_3 = c/(Gamma_m T_c)^2``; ``T_c`` cancels.
    """
    _check_kernel(kernel)
    c = KAPPA3_COEFF[kernel] if kappa3_coeff is None else kappa3_coeff
    k2_num = stats.noise_power if kernel == "rectangular" else stats.noise_power / 2
    return 1 + stats.mean * c / (3 * stats.gamma_m**2 * k2_num**2)


# ------------------------------------------------------------------ logical rates

@dataclass(frozen=True)
class RatePrediction:
    """Predicted logical error rates, termination rate and coherent term.

    ``chi_IZ_rate`` is the growth rate of the off-diagonal element chi_IZ.
    """

    gamma_X: float
    gamma_Y: float
    gamma_Z: float
    gamma_term: float
    chi_IZ_rate: float = 0.0

    @property
    def gamma_L(self):
        return self.gamma_X + self.gamma_Y + self.gamma_Z


def _rate_table(kind: str, rates) -> list[list]:
    """Pauli rates per qubit as nested lists [[G^X, G^Y, G^Z], ...]."""
    if kind == "markovian":
        return [list(r) for r in rates]
    if kind == "depolarizing":
        return [[g / 3, g / 3, g / 3] for g in rates]
    if kind == "dephasing":
        return [[0, 0, g / 2] for g in rates]
    if kind == "relaxation":
        return [[m / 4, m / 4, 0] for m in rates]
    if kind == "none":
        return [[0, 0, 0] for _ in range(4)]
    raise ValueError(f"unknown decoherence kind {kind!r}")


def _unpack(model) -> tuple[str, list]:
    if isinstance(model, DecoherenceModel):
        r = model.rates.tolist()
        return model.kind, r
    kind, rates = model
    if kind != "markovian" and not isinstance(rates, (list, tuple)):
        rates = [rates] * 4
    return kind, list(rates)


def _termination_base(kind: str, rates) -> float:
    if kind == "relaxation":
        return sum(rates) / 2
    return sum(sum(row) for row in _rate_table(kind, rates))


def markovian_pair_rates(G: Sequence[Sequence[float]]) -> tuple:
    """Second-order products entering the X, Y and Z logical rates.

    Returns ``(a_X, b_X, a_Y, a_Z, b_Z)`` with
    ``a_X = (G1X+G2X)(G3X+G4X)``, ``b_X = G1Y G3Y + G2Y G4Y``,
    ``a_Y = G1Y G4Y + G2Y G3Y``, ``a_Z = (G1Z+G3Z)(G2Z+G4Z)``,
    ``b_Z = G1Y G2Y + G3Y G4Y``.
    """
    gx = [row[0] for row in G]
    gy = [row[1] for row in G]
    gz = [row[2] for row in G]
    a_x = (gx[0] + gx[1]) * (gx[2] + gx[3])
    b_x = gy[0] * gy[2] + gy[1] * gy[3]
    a_y = gy[0] * gy[3] + gy[1] * gy[2]
    a_z = (gz[0] + gz[2]) * (gz[1] + gz[3])
    b_z = gy[0] * gy[1] + gy[2] * gy[3]
    return a_x, b_x, a_y, a_z, b_z


def projective_rates(model, delta_t) -> RatePrediction:
    """Logical and termination rates of the two-step projective protocol.

    ``model`` is a :class:`DecoherenceModel` or a ``(kind, rates)`` pair;
    ``delta_t`` is the duration of each half-cycle.
    """
    kind, rates = _unpack(model)
    G = _rate_table(kind, rates)
    a_x, b_x, a_y, a_z, b_z = markovian_pair_rates(G)
    chi_iz = 0
    if kind == "relaxation":
        mu = rates
        chi_iz = 3 * (mu[0] * mu[1] + mu[2] * mu[3]) * delta_t / 16
    return RatePrediction(
        gamma_X=delta_t * (2 * a_x + b_x),
        gamma_Y=delta_t * a_y,
        gamma_Z=delta_t * (2 * a_z + b_z),
        gamma_term=_termination_base(kind, rates),
        chi_IZ_rate=chi_iz,
    )


def continuous_logical_rates(model, T_R, gamma_fal=0, gamma_m=None) -> RatePrediction:
    """Logical and termination rates under continuous monitoring.

    ``T_R`` is the response time and ``gamma_fal`` the false-alarm rate per
    gauge pair.  For relaxation, ``chi_IZ_rate`` is the coherent growth rate
    ``(mu1 mu2 + mu3 mu4)/(8 Gamma_m)`` when ``gamma_m`` is given.
    """
    kind, rates = _unpack(model)
    G = _rate_table(kind, rates)
    a_x, b_x, a_y, a_z, b_z = markovian_pair_rates(G)
    chi_iz = 0
    if kind == "relaxation" and gamma_m is not None:
        chi_iz = (rates[0] * rates[1] + rates[2] * rates[3]) / (8 * gamma_m)
    return RatePrediction(
        gamma_X=2 * T_R * (a_x + b_x),
        gamma_Y=2 * T_R * a_y,
        gamma_Z=2 * T_R * (a_z + b_z),
        gamma_term=2 * gamma_fal + _termination_base(kind, rates),
        chi_IZ_rate=chi_iz,
    )


def comparison_ratios(gamma_d: float, delta_t: float, tau_m: float, eta: float, T_c: float,
                      theta: float = 1.0) -> tuple[float, float]:
    """Continuous-to-projective ratios of logical and termination rates.

    Depolarizing noise ``gamma_d`` on every qubit, exponential kernel with
    averaging time ``T_c`` at threshold ``theta`` and optimal ``tau_c``.
    """
    T_R = response_time("exponential", T_c, theta)
    proj = projective_rates(("depolarizing", [gamma_d] * 4), delta_t)
    cont_l = continuous_logical_rates(("depolarizing", [gamma_d] * 4), T_R)
    _, stats = optimal_tau_c(eta, tau_m)
    fal = false_alarm_rate("exponential", T_c, theta, stats)
    term = (proj.gamma_term + 2 * fal) / proj.gamma_term
    return cont_l.gamma_L / proj.gamma_L, term
