"""Monte Carlo campaigns: configuration, parallel execution and aggregation."""
from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from . import analytics
from .decoherence import DecoherenceModel
from .detectors import DetectorBank
from .engines import disarmed_monitor, gauge_trace, run_density, run_gauge, run_statevector, trajectory_rng
from .monitor import CorrelatorConfig, CorrelatorMonitor
from .projective import ProjectiveProtocolConfig, run_projective_protocol
from .tomography import (
    TOMOGRAPHY_INPUTS,
    ChiSlopeEstimator,
    bloch_to_rho,
    chi_from_units,
    fit_termination,
    normalize_chi,
)
from .trajectory import NumericalError

ENGINES = ("auto", "gauge", "statevector", "density")
MODES = ("continuous", "projective", "analytics")
WORKERS_ENV = "BSLAB_WORKERS"


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce a campaign.

    Times are in units of the mean measurement time.  ``n_records`` equally
    spaced record times cover ``(0, total_time]``.  ``boost`` multiplies the
    error rates while a trajectory is outside the code space (importance
    sampling; weights keep the estimates unbiased).
    """

    mode: str = "continuous"
    bank: DetectorBank = field(default_factory=DetectorBank.uniform)
    decoherence: DecoherenceModel = field(default_factory=DecoherenceModel.none)
    correlator: CorrelatorConfig | None = None
    armed: bool = True
    dt: float = 0.01
    total_time: float = 100.0
    n_records: int = 20
    n_traj: int = 1000
    seed: int = 0
    engine: str = "auto"
    boost: float = 1.0
    workers: int = 1
    chunk_size: int = 256
    inputs: tuple = tuple(map(tuple, TOMOGRAPHY_INPUTS))
    delta_t: float = 1.0
    n_cycles: int = 100
    output_dir: str | None = None
    n_traces: int = 0
    raw: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.engine not in ENGINES:
            raise ConfigError(f"engine must be one of {ENGINES}")
        for name in ("dt", "total_time", "boost", "delta_t"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("n_traj", "n_records", "n_cycles", "workers", "chunk_size"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.mode == "continuous" and self.correlator is None:
            raise ConfigError("continuous mode needs a correlator section")

    @property
    def n_steps(self) -> int:
        return int(round(self.total_time / self.dt))

    def record_steps(self) -> np.ndarray:
        steps = np.unique(np.round(np.linspace(0, self.n_steps, self.n_records + 1)[1:]).astype(np.int64))
        return steps[steps > 0]

    def resolved_engine(self) -> str:
        if self.engine != "auto":
            return self.engine
        if self.decoherence.is_pauli:
            return "gauge"
        if np.all(self.bank.residual_dephasing <= 1e-12):
            return "statevector"
        return "density"

    def resolved_workers(self) -> int:
        env = os.environ.get(WORKERS_ENV)
        if env:
            try:
                return max(int(env), 1)
            except ValueError as exc:
                raise ConfigError(f"{WORKERS_ENV} must be an integer") from exc
        return int(self.workers)

    def summary(self) -> dict:
        """Plain description for provenance in outputs."""
        out = {
            "mode": self.mode,
            "engine": self.resolved_engine() if self.mode == "continuous" else None,
            "detectors": {k: list(map(float, v)) for k, v in
                          zip(("tau", "gamma", "K", "eps"), self.bank.as_arrays())},
            "decoherence": {"kind": self.decoherence.kind, "rates": np.asarray(self.decoherence.rates).tolist()},
            "dt": self.dt, "total_time": self.total_time, "n_records": self.n_records,
            "n_traj": self.n_traj, "seed": self.seed, "boost": self.boost, "armed": self.armed,
            "inputs": [list(v) for v in self.inputs], "delta_t": self.delta_t, "n_cycles": self.n_cycles,
        }
        if self.correlator is not None:
            out["correlator"] = asdict(self.correlator)
            out["correlator"]["response_time"] = self.correlator.response_time
        if self.raw:
            out["source"] = self.raw
        return out


@dataclass
class CampaignResult:
    config: ExperimentConfig
    engine: str
    times: np.ndarray
    survival: np.ndarray
    survival_err: np.ndarray
    chi: np.ndarray  # trace-normalized, (n_records, 4, 4)
    chi_err: np.ndarray
    records: dict  # per-trajectory arrays
    survival_by_input: np.ndarray | None = None
    fits: dict = field(default_factory=dict)
    predictions: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "config": self.config.summary(),
            "engine": self.engine,
            "times": self.times.tolist(),
            "survival": self.survival.tolist(),
            "survival_err": self.survival_err.tolist(),
            "survival_by_input": None if self.survival_by_input is None else self.survival_by_input.tolist(),
            "chi_real": self.chi.real.tolist(),
            "chi_imag": self.chi.imag.tolist(),
            "chi_err_real": self.chi_err.real.tolist(),
            "chi_err_imag": self.chi_err.imag.tolist(),
            "fits": self.fits,
            "predictions": self.predictions,
        }


def _chunks(n: int, size: int) -> list[np.ndarray]:
    return [np.arange(i, min(i + size, n)) for i in range(0, n, size)]


def _merge(parts: list[dict]) -> dict:
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


def _monitor_args(config: ExperimentConfig):
    if config.correlator is None or not config.armed:
        if config.correlator is None:
            return disarmed_monitor()
        return config.correlator.kernel_args(config.dt, armed=False)
    return config.correlator.kernel_args(config.dt)


def _gauge_chunk(config: ExperimentConfig, idx: np.ndarray) -> dict:
    return run_gauge(config.seed, idx, config.n_steps, config.dt, config.bank, config.decoherence,
                     _monitor_args(config), config.record_steps(), boost=config.boost)


def _statevector_chunk(config: ExperimentConfig, idx: np.ndarray) -> dict:
    return run_statevector(config.seed, idx, config.n_steps, config.dt, config.bank, config.decoherence,
                           _monitor_args(config), config.record_steps(), boost=config.boost)


def _density_chunk(config: ExperimentConfig, idx: np.ndarray) -> dict:
    return run_density(config.seed, idx, config.n_steps, config.dt, config.bank, config.decoherence,
                       config.correlator, config.record_steps(), armed=config.armed)


_RUNNERS = {"gauge": _gauge_chunk, "statevector": _statevector_chunk, "density": _density_chunk}


def _execute(config: ExperimentConfig, engine: str) -> dict:
    chunks = _chunks(config.n_traj, config.chunk_size)
    runner = _RUNNERS[engine]
    workers = min(config.resolved_workers(), len(chunks))
    if workers > 1:
        parts = Parallel(n_jobs=workers, backend="loky")(delayed(runner)(config, c) for c in chunks)
    else:
        parts = [runner(config, c) for c in chunks]
    return _merge(parts)


def jackknife(values: np.ndarray, stat, n_blocks: int = 20, return_reps: bool = False):
    """Statistic over all samples and its delete-one-block jackknife error.

    ``values`` has trajectories on axis 0; ``stat`` maps such an array to a
    numpy array.  Blocks are contiguous in trajectory order, so the result
    does not depend on scheduling.  With ``return_reps`` the delete-one-block
    replicates are returned as a third element (``None`` below two blocks).
    """
    n = len(values)
    full = stat(values)
    b = min(n_blocks, n)
    if b < 2:
        out = (full, np.full_like(full, np.nan))
        return out + (None,) if return_reps else out
    edges = np.linspace(0, n, b + 1).astype(int)
    reps = np.stack([stat(np.concatenate([values[:edges[i]], values[edges[i + 1]:]])) for i in range(b)])
    err = jackknife_error(reps)
    return (full, err, reps) if return_reps else (full, err)


def jackknife_error(reps: np.ndarray) -> np.ndarray:
    """Jackknife standard error from delete-one-block replicates on axis 0.

    Complex replicates give the real and imaginary errors as one complex array.
    """
    b = len(reps)
    diff = reps - reps.mean(axis=0)
    err = np.sqrt((b - 1) / b * np.sum(diff.real**2, axis=0))
    if np.iscomplexobj(reps):
        err = err + 1j * np.sqrt((b - 1) / b * np.sum(diff.imag**2, axis=0))
    return err


def _pauli_chi_samples(rec: dict) -> np.ndarray:
    """Per-trajectory unnormalized diagonal process matrices (n, n_rec, 4)."""
    good = rec["alive"] & (rec["subspace"] == 0)
    w = np.where(good, rec["weight"], 0.0)
    onehot = np.eye(4)[rec["frame"]]  # (n, n_rec, 4)
    return onehot * w[..., None]


def _aggregate_gauge(config: ExperimentConfig, rec: dict):
    surv_samples = np.where(rec["alive"], rec["weight"], 0.0)
    surv, surv_err = jackknife(surv_samples, lambda v: v.mean(axis=0))
    diag_samples = _pauli_chi_samples(rec)

    def chi_stat(v):
        d = v.mean(axis=0)
        tr = d.sum(axis=1, keepdims=True)
        return np.where(tr > 0, d / np.where(tr > 0, tr, 1.0), np.nan)

    diag, diag_err, diag_reps = jackknife(diag_samples, chi_stat, return_reps=True)
    n_rec = diag.shape[0]
    chi = np.zeros((n_rec, 4, 4), dtype=complex)
    chi_err = np.zeros((n_rec, 4, 4), dtype=complex)
    idx = np.arange(4)
    chi[:, idx, idx] = diag
    chi_err[:, idx, idx] = diag_err
    chi_reps = None
    if diag_reps is not None:
        chi_reps = np.zeros(diag_reps.shape[:2] + (4, 4), dtype=complex)
        chi_reps[:, :, idx, idx] = diag_reps
    by_input = np.repeat(surv[:, None], len(config.inputs), axis=1)
    return surv, surv_err, chi, chi_err, by_input, chi_reps


def _aggregate_statevector(config: ExperimentConfig, rec: dict):
    w = np.where(rec["alive"], rec["weight"], 0.0)
    units = rec["units"] * w[..., None, None, None]
    norms = rec["norms"] * w[..., None]
    inputs = np.stack([bloch_to_rho(v) for v in np.asarray(config.inputs, dtype=float)])

    def surv_inputs(nv):
        m = nv.mean(axis=0)  # (n_rec, 3)
        # survival of rho = rho00 T00 + rho11 T11 + 2 Re(rho10 T01)
        return np.real(inputs[None, :, 0, 0] * m[:, None, 0] + inputs[None, :, 1, 1] * m[:, None, 1]
                       + 2 * np.real(inputs[None, :, 1, 0] * m[:, None, 2]))

    by_input, _ = jackknife(norms, surv_inputs)
    mixed = norms[..., 0].real * 0.5 + norms[..., 1].real * 0.5
    surv, surv_err = jackknife(mixed, lambda v: v.mean(axis=0))

    def chi_stat(u):
        m = u.mean(axis=0)
        return normalize_chi(chi_from_units(m[:, 0], m[:, 1], m[:, 2]))

    chi, chi_err, chi_reps = jackknife(units, chi_stat, return_reps=True)
    return surv, surv_err, chi, chi_err, by_input, chi_reps


def predictions(config: ExperimentConfig) -> dict:
    """Closed-form expectations matching the campaign parameters."""
    out = {}
    model = config.decoherence
    if config.mode == "projective":
        p = analytics.projective_rates(model, config.delta_t)
        return {"gamma_term": p.gamma_term, "gamma_X": p.gamma_X, "gamma_Y": p.gamma_Y,
                "gamma_Z": p.gamma_Z, "gamma_L": p.gamma_L, "chi_IZ_rate": p.chi_IZ_rate}
    cfg = config.correlator
    if cfg is None:
        return out
    gm = config.bank.gamma_m
    st = analytics.correlator_stats(cfg.tau_c, gm, config.bank.tau_m)
    T_R = cfg.response_time
    fa = analytics.false_alarm_rate(cfg.kernel, cfg.T_c, cfg.theta, st)
    fac = analytics.non_gaussian_factor(cfg.kernel, st)
    fa_c = analytics.false_alarm_rate(cfg.kernel, cfg.T_c, cfg.theta, st, correction=fac)
    rates = analytics.continuous_logical_rates(model, T_R, fa if config.armed else 0.0, gamma_m=gm)
    out.update({
        "response_time": T_R, "gamma_false_alarm": fa, "gamma_false_alarm_corrected": fa_c,
        "correction_factor": fac, "gamma_X": rates.gamma_X, "gamma_Y": rates.gamma_Y,
        "gamma_Z": rates.gamma_Z, "gamma_L": rates.gamma_L, "gamma_term": rates.gamma_term,
        "chi_IZ_rate": rates.chi_IZ_rate,
    })
    return out


def fit_campaign(times, survival, survival_err, chi, discard: float = 0.1) -> dict:
    """Termination rate and slopes of all process-matrix elements."""
    fits = {}
    survival = np.asarray(survival, dtype=float)
    survival_err = np.asarray(survival_err, dtype=float)
    # importance weights can push a survival estimate above 1 by sampling noise
    excess = survival - 1.0
    tol = 3 * np.where(np.isfinite(survival_err), survival_err, 0.0) + 1e-12
    if np.any(excess > tol):
        raise NumericalError("survival estimate exceeds 1 beyond its statistical error")
    survival = np.minimum(survival, 1.0)
    ok = survival > 0
    if ok.sum() >= 2:
        se = np.where(np.isfinite(survival_err) & (survival_err > 0), survival_err, None)
        stderr = None if any(s is None for s in se[ok]) else survival_err[ok]
        tf = fit_termination(times[ok], survival[ok], stderr=stderr, discard=0.0)
        fits["gamma_term"] = tf.rate
        fits["gamma_term_err"] = tf.stderr
    good = np.all(np.isfinite(chi.real), axis=(1, 2))
    if good.sum() >= 3:
        est = ChiSlopeEstimator(discard=discard).fit(times[good], chi[good])
        for i, a in enumerate("IXYZ"):
            for j, b in enumerate("IXYZ"):
                fits[f"slope_{a}{b}"] = [float(est.slopes_[i, j].real), float(est.slopes_[i, j].imag)]
                fits[f"slope_{a}{b}_err"] = [float(est.slope_stderr_[i, j].real),
                                             float(est.slope_stderr_[i, j].imag)]
        fits.update(est.rates())
        fits["gamma_L"] = fits["gamma_X"] + fits["gamma_Y"] + fits["gamma_Z"]
    return fits


def _slope_jackknife(times, chi, chi_reps, discard: float = 0.1) -> dict:
    """Slope errors from refitting every jackknife replicate.

    Process matrices at successive record times share trajectories, so their
    residuals are correlated and the least-squares slope error is too small.
    """
    if chi_reps is None:
        return {}
    good = np.all(np.isfinite(chi.real), axis=(1, 2)) & np.all(np.isfinite(chi_reps.real), axis=(0, 2, 3))
    if good.sum() < 3:
        return {}
    slopes = np.stack([ChiSlopeEstimator(discard=discard).fit(times[good], r[good]).slopes_ for r in chi_reps])
    err = jackknife_error(slopes)
    out = {"slope_err_method": "jackknife"}
    for i, a in enumerate("IXYZ"):
        for j, b in enumerate("IXYZ"):
            out[f"slope_{a}{b}_err"] = [float(err[i, j].real), float(err[i, j].imag)]
    return out


def run_campaign(config: ExperimentConfig) -> CampaignResult:
    """Run all trajectories of ``config`` and aggregate survival and process matrices."""
    if config.mode == "analytics":
        raise ConfigError("analytics-only configs are evaluated by the analytics command")
    if config.mode == "projective":
        pr = run_projective_protocol(ProjectiveProtocolConfig(config.delta_t, config.n_cycles,
                                                              config.decoherence), np.asarray(config.inputs))
        fits = pr.fit()
        zeros = np.zeros_like(pr.survival)
        res = CampaignResult(config, "projective", pr.times, pr.survival, zeros, pr.chi,
                             np.zeros_like(pr.chi), {"survival_spread": pr.survival_spread},
                             None, fits, predictions(config))
        _write(res)
        return res
    engine = config.resolved_engine()
    rec = _execute(config, engine)
    if engine == "gauge":
        agg = _aggregate_gauge(config, rec)
    else:
        agg = _aggregate_statevector(config, rec)
    surv, surv_err, chi, chi_err, by_input, chi_reps = agg
    times = config.record_steps() * config.dt
    if not np.all(np.isfinite(surv)):
        raise NumericalError("non-finite survival estimate")
    res = CampaignResult(config, engine, times, surv, surv_err, chi, chi_err, rec, by_input)
    res.fits = fit_campaign(times, surv, surv_err, chi)
    res.fits.update(_slope_jackknife(times, chi, chi_reps))
    n_alarms = int(np.sum(rec["alarm_step"] >= 0))
    res.fits["n_alarms"] = n_alarms
    res.predictions = predictions(config)
    _write(res)
    return res


def _records_rows(res: CampaignResult):
    rec = res.records
    dt = res.config.dt
    n = len(rec.get("alarm_step", []))
    for i in range(n):
        a = int(rec["alarm_step"][i])
        row = {
            "trajectory": i,
            "survived": a < 0,
            "alarm_time": "" if a < 0 else repr((a + 1) * dt),
            "alarm_pair": "" if a < 0 else int(rec["alarm_pair"][i]) + 1,
            "n_jumps": int(rec["n_jumps"][i]) if "n_jumps" in rec else "",
        }
        if "weight" in rec:
            row["weight"] = repr(float(rec["weight"][i, -1]))
        if "subspace" in rec:
            row["subspace"] = int(rec["subspace"][i, -1])
            row["logical_frame"] = "IXYZ"[int(rec["frame"][i, -1])]
        if "input" in rec:
            row["input"] = int(rec["input"][i])
        if "units" in rec and rec["alive"][i, -1]:
            u = rec["units"][i, -1] * rec["weight"][i, -1]
            rho = 0.5 * (u[0] + u[1])
            row["final_logical_trace"] = repr(float(np.real(rho[0, 0] + rho[1, 1])))
        yield row


def _write(res: CampaignResult) -> None:
    out = res.config.output_dir
    if not out:
        return
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "campaign.json", "w") as fh:
        json.dump(res.to_json(), fh, indent=1)
    write_aggregates(res, d / "aggregates.csv")
    rows = list(_records_rows(res))
    if rows:
        with open(d / "trajectories.csv", "w", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            wr.writeheader()
            wr.writerows(rows)
    if res.config.n_traces and res.engine == "gauge":
        write_traces(res.config, d / "traces")


def aggregate_rows(res: CampaignResult):
    """Tidy rows (time, metric, value, stderr) of the aggregate estimates."""
    for i, t in enumerate(res.times):
        yield {"time": repr(float(t)), "metric": "survival", "value": repr(float(res.survival[i])),
               "stderr": repr(float(res.survival_err[i]))}
        for m, a in enumerate("IXYZ"):
            for n, b in enumerate("IXYZ"):
                v, e = res.chi[i, m, n], res.chi_err[i, m, n]
                for part, fv, fe in (("re", v.real, e.real), ("im", v.imag, e.imag)):
                    yield {"time": repr(float(t)), "metric": f"chi_{a}{b}_{part}", "value": repr(float(fv)),
                           "stderr": repr(float(fe))}


def write_aggregates(res: CampaignResult, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=["time", "metric", "value", "stderr"])
        wr.writeheader()
        wr.writerows(aggregate_rows(res))


def write_traces(config: ExperimentConfig, directory: Path) -> None:
    """Signal and correlator dumps for the first ``n_traces`` trajectories.

    Traces replay each trajectory's random stream without importance
    sampling, so they coincide with the campaign trajectories when
    ``boost == 1``.
    """
    directory.mkdir(parents=True, exist_ok=True)
    mon = None
    if config.correlator is not None:
        c = config.correlator
        mon = CorrelatorMonitor(c.tau_c, c.T_c, c.kernel, c.inner, c.theta, config.dt, c.gamma_m, c.init).fit()
    for i in range(min(config.n_traces, config.n_traj)):
        tr = gauge_trace(trajectory_rng(config.seed, i), config.n_steps, config.dt, config.bank,
                         config.decoherence)
        C = mon.transform(tr["signals"]) if mon is not None else np.zeros((config.n_steps, 2))
        t = (np.arange(config.n_steps) + 1) * config.dt
        table = np.column_stack([t, tr["signals"], C, tr["subspace"], tr["frame"]])
        np.savetxt(directory / f"trajectory_{i:05d}.csv", table, delimiter=",",
                   header="t,I1,I2,I3,I4,C12,C34,subspace,frame", comments="", fmt="%.17g")


def with_updates(config: ExperimentConfig, **changes) -> ExperimentConfig:
    return replace(config, **changes)
