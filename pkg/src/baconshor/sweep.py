"""Parameter sweeps over config keys, tidy tables and plot data."""
from __future__ import annotations

import csv
import itertools
import json
import math
from pathlib import Path

import numpy as np
import yaml

from . import analytics
from .campaign import CampaignResult, ConfigError, ExperimentConfig, run_campaign
from .config import _merge, parse_config


def parse_axis(spec: str) -> tuple[tuple[str, ...], list]:
    """``"correlator.T_R=12,16,20"`` or ``"correlator.T_c=linspace(5,60,12)"``.

    Also accepts ``logspace(a,b,n)`` (base-10 exponents) and ``range(a,b,step)``.
    Values are parsed as YAML scalars, so lists like ``[1e-3,1e-3,0,0]`` work
    when separated by ``;``.
    """
    if "=" not in spec:
        raise ConfigError(f"axis {spec!r} must look like key.path=v1,v2,...")
    key, vals = spec.split("=", 1)
    path = tuple(p for p in key.strip().split(".") if p)
    if not path:
        raise ConfigError(f"axis {spec!r} has an empty key")
    vals = vals.strip()
    for name, fn in (("linspace", np.linspace), ("logspace", np.logspace), ("range", np.arange)):
        if vals.startswith(name + "(") and vals.endswith(")"):
            try:
                args = [float(a) for a in vals[len(name) + 1:-1].split(",")]
                if name != "range":
                    args[2] = int(args[2])
                return path, [float(v) for v in fn(*args)]
            except (ValueError, IndexError, TypeError) as exc:
                raise ConfigError(f"bad grid {vals!r}: {exc}") from None
    sep = ";" if ";" in vals else ","
    try:
        return path, [yaml.safe_load(v) for v in vals.split(sep) if v.strip()]
    except yaml.YAMLError as exc:
        raise ConfigError(f"bad axis values {vals!r}") from exc


def _nested(path: tuple, value) -> dict:
    out = value
    for p in reversed(path):
        out = {p: out}
    return out


def grid_points(axes: list[tuple[tuple, list]]):
    """Cartesian product of axes as (label dict, override dict) pairs."""
    for combo in itertools.product(*[vals for _, vals in axes]):
        labels, over = {}, {}
        for (path, _), v in zip(axes, combo):
            labels[".".join(path)] = v
            over = _merge(over, _nested(path, v))
        yield labels, over


def evaluate_analytics(config: ExperimentConfig) -> dict:
    """Closed-form quantities for one configuration."""
    bank = config.bank
    out = {"gamma_m": bank.gamma_m, "tau_m": bank.tau_m, "eta": float(np.mean(bank.efficiency))}
    proj = analytics.projective_rates(config.decoherence, config.delta_t)
    out.update({f"projective_{k}": getattr(proj, k) for k in
                ("gamma_X", "gamma_Y", "gamma_Z", "gamma_L", "gamma_term", "chi_IZ_rate")})
    cfg = config.correlator
    if cfg is None:
        return out
    st = analytics.correlator_stats(cfg.tau_c, bank.gamma_m, bank.tau_m)
    fac = analytics.non_gaussian_factor(cfg.kernel, st)
    fal = analytics.false_alarm_rate(cfg.kernel, cfg.T_c, cfg.theta, st)
    fal_c = analytics.false_alarm_rate(cfg.kernel, cfg.T_c, cfg.theta, st, correction=fac)
    cont = analytics.continuous_logical_rates(config.decoherence, cfg.response_time,
                                              fal if config.armed else 0.0, gamma_m=bank.gamma_m)
    out.update({
        "tau_c": cfg.tau_c, "T_c": cfg.T_c, "T_R": cfg.response_time, "theta": cfg.theta,
        "correlator_mean": st.mean, "amplitude_sq": st.amplitude**2, "snr": st.snr,
        "gamma_false_alarm": fal, "gamma_false_alarm_corrected": fal_c, "correction_factor": fac,
    })
    out.update({f"continuous_{k}": getattr(cont, k) for k in
                ("gamma_X", "gamma_Y", "gamma_Z", "gamma_L", "gamma_term", "chi_IZ_rate")})
    if proj.gamma_L > 0:
        out["logical_ratio"] = cont.gamma_L / proj.gamma_L
    if proj.gamma_term > 0:
        out["termination_ratio"] = cont.gamma_term / proj.gamma_term
    return out


def _campaign_metrics(res: CampaignResult) -> list[tuple[str, float, float]]:
    rows = []
    for k, v in res.fits.items():
        if k.endswith("_err") or isinstance(v, (list, str)):
            continue
        err = res.fits.get(k + "_err", float("nan"))
        if k.startswith("gamma_") and k != "gamma_term":
            base = {"gamma_X": "XX", "gamma_Y": "YY", "gamma_Z": "ZZ"}.get(k)
            if base:
                err = res.fits.get(f"slope_{base}_err", [float("nan")])[0]
        rows.append((k, float(v), float(err) if err is not None else float("nan")))
    for k, v in res.predictions.items():
        rows.append((f"predicted_{k}", float(v), float("nan")))
    return rows


def run_sweep(text: str, axes: list[str], source: str = "<string>", output_dir: str | None = None):
    """Evaluate a config template over the grid spanned by ``axes``.

    Returns tidy rows ``{point, <axis>..., metric, value, stderr}``.  In
    analytics mode only closed forms are evaluated; otherwise one campaign
    runs per grid point.
    """
    parsed = [parse_axis(a) for a in axes]
    rows = []
    for i, (labels, over) in enumerate(grid_points(parsed)):
        if output_dir:
            over = _merge(over, {"output": {"dir": str(Path(output_dir) / f"point_{i:03d}")}})
        cfg = parse_config(text, source, over)
        if cfg.mode == "analytics":
            metrics = [(k, float(v), float("nan")) for k, v in evaluate_analytics(cfg).items()]
        else:
            metrics = _campaign_metrics(run_campaign(cfg))
        for name, val, err in metrics:
            rows.append({"point": i, **labels, "metric": name, "value": val, "stderr": err})
    if output_dir:
        write_table(rows, Path(output_dir) / "sweep.csv")
        write_json(plotdata_from_rows(rows, [".".join(p) for p, _ in parsed]),
                   Path(output_dir) / "plotdata.json")
    return rows


def write_table(rows: list[dict], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fields = list(rows[0].keys()) if rows else ["point", "metric", "value", "stderr"]
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=fields)
        wr.writeheader()
        for r in rows:
            wr.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def _clean(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def write_json(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, default=float)


def plotdata_from_rows(rows: list[dict], axis_names: list[str]) -> dict:
    """One series per metric and combination of the non-leading axes."""
    if not axis_names:
        return {"series": []}
    x_name, rest = axis_names[0], axis_names[1:]
    groups: dict = {}
    for r in rows:
        key = (r["metric"],) + tuple(json.dumps(r[a]) for a in rest)
        g = groups.setdefault(key, {"x": [], "y": [], "yerr": []})
        g["x"].append(r[x_name])
        g["y"].append(_clean(r["value"]))
        g["yerr"].append(_clean(r["stderr"]))
    series = []
    for key, g in groups.items():
        fixed = {a: json.loads(v) for a, v in zip(rest, key[1:])}
        series.append({"metric": key[0], "x_label": x_name, "y_label": key[0], "fixed": fixed, **g})
    return {"x_axis": x_name, "series": series}


def plotdata_from_campaign(summary: dict) -> dict:
    """Survival and process-matrix series of one campaign with analytic lines."""
    t = summary["times"]
    pred = summary.get("predictions", {})
    chi_re = np.asarray(summary["chi_real"])
    chi_im = np.asarray(summary["chi_imag"])
    err_re = np.asarray(summary["chi_err_real"])
    err_im = np.asarray(summary["chi_err_imag"])
    series = [{"metric": "survival", "x_label": "time", "y_label": "success probability", "x": t,
               "y": summary["survival"], "yerr": summary["survival_err"]}]
    if "gamma_term" in pred:
        series.append({"metric": "survival_predicted", "x_label": "time", "y_label": "success probability",
                       "x": t, "y": [math.exp(-pred["gamma_term"] * x) for x in t]})
    labels = "IXYZ"
    for (m, n), part in (((1, 1), "re"), ((2, 2), "re"), ((3, 3), "re"), ((0, 3), "re"), ((1, 2), "im")):
        name = f"chi_{labels[m]}{labels[n]}"
        arr, err = (chi_re, err_re) if part == "re" else (chi_im, err_im)
        series.append({"metric": f"{name}_{part}", "x_label": "time", "y_label": name, "x": t,
                       "y": [_clean(float(v)) for v in arr[:, m, n]],
                       "yerr": [_clean(float(v)) for v in err[:, m, n]]})
        key, sign = {"XX": ("gamma_X", 1), "YY": ("gamma_Y", 1), "ZZ": ("gamma_Z", 1),
                     "IZ": ("chi_IZ_rate", 1), "XY": ("chi_IZ_rate", -1)}[name[4:]]
        if key in pred:
            series.append({"metric": f"{name}_{part}_predicted", "x_label": "time", "y_label": name, "x": t,
                           "y": [sign * pred[key] * x for x in t]})
    return {"x_axis": "time", "series": series, "config": summary.get("config")}
