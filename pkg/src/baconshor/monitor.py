"""Streaming cross-correlators of the detector signals and threshold alarms."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats as sstats
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import _kernels
from .analytics import KERNELS, response_time
from .decoherence import DecoherenceModel
from .detectors import DetectorBank
from .engines import MonitorArgs, run_gauge
from .validation import check_signals

INNER_FORMS = ("symmetrized", "filtered")


@dataclass(frozen=True)
class CorrelatorConfig:
    """Inner filter time ``tau_c``, outer averaging time ``T_c`` and threshold.

    ``mean_reference`` is the Q0 mean of the inner correlator; when omitted
    it is computed from ``gamma_m`` as ``1/(1 + 2 gamma_m tau_c)``.  With
    ``init="mean"`` the accumulators start at that mean and are armed at
    once; ``init="zero"`` starts them at zero and arms after ``5 T_c``.
    """

    tau_c: float
    T_c: float
    kernel: str = "exponential"
    inner: str = "symmetrized"
    theta: float = 1.0
    gamma_m: float = 0.5
    mean_reference: float | None = None
    init: str = "mean"

    def __post_init__(self):
        if not self.tau_c > 0:
            raise ValueError("tau_c must be positive")
        if self.kernel not in KERNELS:
            raise ValueError(f"kernel must be one of {KERNELS}")
        if self.inner not in INNER_FORMS:
            raise ValueError(f"inner form must be one of {INNER_FORMS}")
        if not 0 < self.theta < 2:
            raise ValueError("theta must lie in (0, 2)")
        if self.init not in ("mean", "zero"):
            raise ValueError("init must be 'mean' or 'zero'")
        if self.T_c < 5 * self.tau_c:
            raise ValueError("T_c must be at least 5 tau_c")
        if self.T_c < 20 * self.tau_c:
            warnings.warn("T_c is shorter than 20 tau_c; correlator statistics become non-Gaussian",
                          stacklevel=2)

    @property
    def mean(self) -> float:
        if self.mean_reference is not None:
            return float(self.mean_reference)
        return 1.0 / (1.0 + 2.0 * self.gamma_m * self.tau_c)

    @property
    def threshold(self) -> float:
        return (1.0 - self.theta) * self.mean

    @property
    def response_time(self) -> float:
        """Noiseless alarm delay after an error."""
        return response_time(self.kernel, self.T_c, self.theta)

    def kernel_args(self, dt: float, armed: bool = True) -> MonitorArgs:
        """Discretized parameters for the compiled correlator update."""
        ratio = self.T_c / dt
        nwin = max(int(math.ceil(ratio - 1e-9)), 1)
        wlast = ratio - (nwin - 1)
        c_init = self.mean if self.init == "mean" else 0.0
        arm = 0 if self.init == "mean" else int(math.ceil(5 * self.T_c / dt))
        thr = self.threshold if armed else -np.inf
        return MonitorArgs(
            inner=INNER_FORMS.index(self.inner),
            kernel=KERNELS.index(self.kernel),
            a_in=math.exp(-dt / self.tau_c),
            a_out=math.exp(-dt / self.T_c),
            nwin=nwin if self.kernel == "rectangular" else 1,
            wlast=wlast if self.kernel == "rectangular" else 1.0,
            tdt=ratio,
            c_init=c_init,
            thr=thr,
            arm_step=arm if armed else np.iinfo(np.int64).max,
        )


@dataclass
class CorrelatorState:
    """Running filters and outer averages for the pairs (1, 2) and (3, 4)."""

    config: CorrelatorConfig
    dt: float
    filtered: np.ndarray = field(init=False)
    value: np.ndarray = field(init=False)
    ring: np.ndarray = field(init=False)
    ring_sum: np.ndarray = field(init=False)
    pos: int = 0
    step: int = 0
    first_crossing: list = field(default_factory=lambda: [None, None])

    def __post_init__(self):
        self.args = self.config.kernel_args(self.dt)
        self.filtered = np.zeros(4)
        self.value = np.zeros(2)
        self.ring = np.zeros((2, self.args.nwin))
        self.ring_sum = np.zeros(2)
        _kernels._init_corr(self.ring, self.ring_sum, self.value, self.filtered, self.args.c_init,
                            self.args.nwin, self.args.wlast, self.args.tdt)

    @property
    def armed(self) -> bool:
        return self.step > self.args.arm_step

    @property
    def time(self) -> float:
        return self.step * self.dt


def correlator_update(state: CorrelatorState, frame) -> CorrelatorState:
    """Feed one frame of four detector outputs into ``state`` (in place)."""
    I = np.asarray(frame, dtype=float)
    if I.shape != (4,):
        raise ValueError("a frame holds four detector outputs")
    a = state.args
    state.pos = _kernels.correlator_step(I, state.filtered, state.value, state.ring, state.ring_sum,
                                         state.pos, a.a_in, a.inner, a.kernel, a.a_out, a.nwin,
                                         a.wlast, a.tdt, state.step)
    state.step += 1
    return state


def inner_correlator(X, tau_c: float, dt: float, inner: str = "symmetrized") -> np.ndarray:
    """Inner correlators C~ of the pairs (1, 2) and (3, 4) before outer averaging.

    Filters start at zero, so the first few ``tau_c`` are a transient.
    """
    X = check_signals(X)
    if inner not in INNER_FORMS:
        raise ValueError(f"inner form must be one of {INNER_FORMS}")
    filt = np.zeros(4)
    out = np.zeros(2)
    ring = np.zeros((2, 1))
    rsum = np.zeros(2)
    # a one-sample rectangular window passes C~ through unchanged
    res, _ = _kernels.correlator_trace(np.ascontiguousarray(X), filt, out, ring, rsum, 0,
                                       math.exp(-dt / tau_c), INNER_FORMS.index(inner), 1, 0.0, 1, 1.0, 1.0)
    return res


@dataclass(frozen=True)
class Alarm:
    time: float
    pair: int  # 0 for (1, 2), 1 for (3, 4)


def threshold_monitor(state: CorrelatorState) -> Alarm | None:
    """Alarm if either pair correlator is below the threshold after arming.

    First crossings are remembered per pair on the state.
    """
    if state.step - 1 < state.args.arm_step:
        return None
    alarm = None
    for p in range(2):
        if state.value[p] < state.config.threshold:
            if state.first_crossing[p] is None:
                state.first_crossing[p] = state.time
            if alarm is None:
                alarm = Alarm(state.time, p)
    return alarm


class CorrelatorMonitor(TransformerMixin, BaseEstimator):
    """Correlator-based syndrome detector over four-channel detector records.

    ``transform`` maps frames (n, 4) to the monitored correlators (n, 2);
    ``predict`` flags frames at which either correlator is below threshold.
    The threshold reference is analytic, so ``fit`` only validates and stores
    the derived constants.
    """

    def __init__(self, tau_c=0.342, T_c=10.0, kernel="exponential", inner="symmetrized", theta=1.0,
                 dt=0.01, gamma_m=0.5, init="mean"):
        self.tau_c = tau_c
        self.T_c = T_c
        self.kernel = kernel
        self.inner = inner
        self.theta = theta
        self.dt = dt
        self.gamma_m = gamma_m
        self.init = init

    def _config(self) -> CorrelatorConfig:
        return CorrelatorConfig(self.tau_c, self.T_c, self.kernel, self.inner, self.theta,
                                self.gamma_m, None, self.init)

    def fit(self, X=None, y=None):
        cfg = self._config()
        if X is not None:
            check_signals(X)
        self.config_ = cfg
        self.mean_reference_ = cfg.mean
        self.threshold_ = cfg.threshold
        self.response_time_ = cfg.response_time
        return self

    def transform(self, X):
        check_is_fitted(self, "config_")
        X = check_signals(X)
        a = self.config_.kernel_args(self.dt)
        filt = np.zeros(4)
        out = np.zeros(2)
        ring = np.zeros((2, a.nwin))
        rsum = np.zeros(2)
        _kernels._init_corr(ring, rsum, out, filt, a.c_init, a.nwin, a.wlast, a.tdt)
        res, _ = _kernels.correlator_trace(np.ascontiguousarray(X), filt, out, ring, rsum, 0,
                                           a.a_in, a.inner, a.kernel, a.a_out, a.nwin, a.wlast, a.tdt)
        return res

    def predict(self, X):
        C = self.transform(X)
        armed = np.arange(len(C)) >= self.config_.kernel_args(self.dt).arm_step
        return armed & np.any(C < self.threshold_, axis=1)

    def first_alarm(self, X) -> Alarm | None:
        flags = self.predict(X)
        if not flags.any():
            return None
        i = int(np.argmax(flags))
        C = self.transform(X)[i]
        pair = int(np.argmax(C < self.threshold_))
        return Alarm((i + 1) * self.dt, pair)


@dataclass(frozen=True)
class FalseAlarmResult:
    """False-alarm rate per gauge pair with a two-sided 95% interval."""

    rate: float
    ci_low: float
    ci_high: float
    n_alarms: int
    exposure: float

    @property
    def stderr(self) -> float:
        return self.rate / math.sqrt(self.n_alarms) if self.n_alarms else float("nan")


def poisson_rate(n_events: int, exposure: float, n_pairs: int = 2, level: float = 0.95) -> FalseAlarmResult:
    """Censored-exponential MLE ``n/exposure`` with the exact Poisson interval."""
    if exposure <= 0:
        raise ValueError("exposure must be positive")
    alpha = 1 - level
    lo = sstats.chi2.ppf(alpha / 2, 2 * n_events) / 2 if n_events > 0 else 0.0
    hi = sstats.chi2.ppf(1 - alpha / 2, 2 * n_events + 2) / 2
    scale = 1.0 / (n_pairs * exposure)
    return FalseAlarmResult(n_events * scale, lo * scale, hi * scale, int(n_events), float(exposure))


def measure_false_alarm_rate(config: CorrelatorConfig, bank: DetectorBank, n_traj: int, duration: float,
                             dt: float, seed: int = 0, offset: int = 0,
                             burn_in: float | None = None) -> FalseAlarmResult:
    """Run error-free trajectories until the first alarm or ``duration``.

    Every trajectory contributes its armed time as exposure; the total alarm
    count over total exposure is the maximum-likelihood rate of the
    exponential survival curve.  The result is per gauge pair (total / 2).
    Alarms are disarmed during ``burn_in`` (default ``3 T_c``) so that the
    filters reach their stationary state before exposure is counted;
    ``duration`` excludes the burn-in.
    """
    if burn_in is None:
        burn_in = 3 * config.T_c
    args = config.kernel_args(dt)
    args = replace(args, arm_step=max(args.arm_step, int(round(burn_in / dt))))
    n_steps = args.arm_step + int(round(duration / dt))
    res = run_gauge(seed, np.arange(offset, offset + n_traj), n_steps, dt, bank, DecoherenceModel.none(),
                    args, np.zeros(0, dtype=np.int64), purpose=1)
    alarm = res["alarm_step"]
    end = np.where(alarm >= 0, alarm + 1, n_steps)
    exposure = float(np.sum(end - args.arm_step)) * dt
    n_alarms = int(np.sum(alarm >= 0))
    if n_alarms < 10:
        warnings.warn(f"only {n_alarms} false alarms observed; the interval is wide", stacklevel=2)
    return poisson_rate(n_alarms, exposure)


@dataclass(frozen=True)
class ResponseResult:
    mean: float
    stderr: float
    n_detected: int
    n_early: int
    delays: np.ndarray


def measure_response_time(config: CorrelatorConfig, bank: DetectorBank, error: str, n_traj: int,
                          dt: float, inject_time: float | None = None, horizon: float | None = None,
                          seed: int = 0) -> ResponseResult:
    """Delay between an injected single-qubit error and the first alarm.

    Trajectories that alarm before the injection are counted in ``n_early``
    and excluded from the mean.
    """
    if inject_time is None:
        inject_time = 5 * config.T_c if config.init == "zero" else 20 * config.tau_c
    if horizon is None:
        horizon = 6 * max(config.T_c, config.response_time)
    inject_step = int(round(inject_time / dt))
    n_steps = inject_step + int(round(horizon / dt))
    res = run_gauge(seed, np.arange(n_traj), n_steps, dt, bank, DecoherenceModel.none(),
                    config.kernel_args(dt), np.zeros(0, dtype=np.int64), inject_step=inject_step,
                    inject=error, purpose=2)
    alarm = res["alarm_step"]
    early = (alarm >= 0) & (alarm < inject_step)
    ok = alarm >= inject_step
    # the error acts at the end of frame inject_step; alarms are checked at frame ends
    delays = (alarm[ok] - inject_step) * dt
    if len(delays) == 0:
        return ResponseResult(float("nan"), float("nan"), 0, int(early.sum()), delays)
    se = float(np.std(delays, ddof=1) / np.sqrt(len(delays))) if len(delays) > 1 else float("nan")
    return ResponseResult(float(np.mean(delays)), se, int(ok.sum()), int(early.sum()), delays)


def default_config(eta: float = 1.0, T_R: float = 10.0, kernel: str = "exponential", theta: float = 1.0,
                   tau_m: float = 1.0, **kw) -> CorrelatorConfig:
    """Correlator at the optimal inner time constant for a target response time."""
    from .analytics import averaging_time, optimal_tau_c

    tau_c, st = optimal_tau_c(eta, tau_m)
    return CorrelatorConfig(tau_c, averaging_time(kernel, T_R, theta), kernel, theta=theta,
                            gamma_m=st.gamma_m, **kw)


__all__ = [
    "Alarm", "CorrelatorConfig", "CorrelatorMonitor", "CorrelatorState", "FalseAlarmResult",
    "ResponseResult", "correlator_update", "default_config", "inner_correlator", "measure_false_alarm_rate",
    "measure_response_time", "poisson_rate", "threshold_monitor",
]
