"""YAML experiment configuration with line-level diagnostics.

Example::

    version: 1
    mode: continuous
    detectors: {tau_m: 1.0, eta: 1.0}
    decoherence: {kind: dephasing, rates: [1.0e-3, 1.0e-3, 0, 0], unit: gamma_m}
    correlator: {kernel: exponential, T_R: 12, tau_c: optimal}
    simulation: {n_traj: 10000, total_time: 500, seed: 1}
    output: {dir: runs/dephasing}
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import yaml

from .analytics import averaging_time, correlator_stats, optimal_tau_c
from .campaign import ConfigError, ExperimentConfig
from .decoherence import KINDS, DecoherenceModel
from .detectors import DetectorBank, DetectorError
from .monitor import CorrelatorConfig

SCHEMA_VERSION = 1

SECTIONS = {
    "version": None,
    "mode": None,
    "detectors": {"tau_m", "eta", "K", "eps", "tau", "gamma"},
    "decoherence": {"kind", "rates", "unit"},
    "correlator": {"kernel", "inner", "T_R", "T_c", "tau_c", "theta", "init", "armed"},
    "simulation": {"dt", "total_time", "n_records", "n_traj", "seed", "engine", "boost", "workers",
                   "chunk_size"},
    "projective": {"delta_t", "n_cycles"},
    "inputs": None,
    "output": {"dir", "traces"},
    "sweep": None,
}


class _Located:
    """Maps key paths of the parsed document to source lines."""

    def __init__(self, node, source: str):
        self.source = source
        self.lines: dict[tuple, int] = {}
        if node is not None:
            self._walk(node, ())

    def _walk(self, node, path):
        self.lines[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                key = path + (k.value,)
                self.lines[key] = k.start_mark.line + 1
                self._walk(v, key)
                self.lines[key] = k.start_mark.line + 1
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                self._walk(v, path + (i,))

    def error(self, path: tuple, msg: str) -> ConfigError:
        p = path
        while p and p not in self.lines:
            p = p[:-1]
        line = self.lines.get(p, 1)
        where = ".".join(str(x) for x in path) or "<root>"
        return ConfigError(f"{self.source}:{line}: {where}: {msg}")


def _num(loc, path, value, positive=False, integer=False):
    try:
        if isinstance(value, bool):
            raise TypeError
        v = int(value) if integer else float(value)
        if integer and float(value) != v:
            raise ValueError
    except (TypeError, ValueError):
        raise loc.error(path, f"expected {'an integer' if integer else 'a number'}, got {value!r}") from None
    if not math.isfinite(v):
        raise loc.error(path, "must be finite")
    if positive and v <= 0:
        raise loc.error(path, "must be positive")
    return v


def _section(loc, doc, name) -> dict:
    sec = doc.get(name) or {}
    if not isinstance(sec, dict):
        raise loc.error((name,), "expected a mapping")
    allowed = SECTIONS[name]
    for k in sec:
        if allowed is not None and k not in allowed:
            raise loc.error((name, k), f"unknown key; allowed: {', '.join(sorted(allowed))}")
    return sec


def _bank(loc, sec) -> DetectorBank:
    try:
        if "tau" in sec or "gamma" in sec:
            tau = np.asarray(sec.get("tau", sec.get("tau_m", 1.0)), dtype=float)
            gamma = np.asarray(sec.get("gamma", 1 / (2 * tau)), dtype=float)
            return DetectorBank(tau, gamma, sec.get("K", 0.0), sec.get("eps", 0.0))
        return DetectorBank.uniform(_num(loc, ("detectors", "tau_m"), sec.get("tau_m", 1.0), positive=True),
                                    _num(loc, ("detectors", "eta"), sec.get("eta", 1.0), positive=True),
                                    _num(loc, ("detectors", "K"), sec.get("K", 0.0)),
                                    _num(loc, ("detectors", "eps"), sec.get("eps", 0.0)))
    except (DetectorError, ValueError) as exc:
        raise loc.error(("detectors",), str(exc)) from None


def _decoherence(loc, sec, bank: DetectorBank) -> DecoherenceModel:
    kind = sec.get("kind", "none")
    if kind not in KINDS:
        raise loc.error(("decoherence", "kind"), f"must be one of {KINDS}")
    unit = sec.get("unit", "gamma_m")
    if unit not in ("gamma_m", "tau_m", "absolute"):
        raise loc.error(("decoherence", "unit"), "must be gamma_m, tau_m or absolute")
    scale = {"gamma_m": bank.gamma_m, "tau_m": 1 / bank.tau_m, "absolute": 1.0}[unit]
    rates = sec.get("rates", 0.0)
    try:
        r = np.asarray(rates, dtype=float) * scale
        return DecoherenceModel(kind, r)
    except (TypeError, ValueError) as exc:
        raise loc.error(("decoherence", "rates"), str(exc)) from None


def _correlator(loc, sec, bank: DetectorBank):
    if not sec:
        return None, True
    kernel = sec.get("kernel", "exponential")
    theta = _num(loc, ("correlator", "theta"), sec.get("theta", 1.0), positive=True)
    tau_c = sec.get("tau_c", "optimal")
    eta = float(np.mean(bank.efficiency))
    if tau_c == "optimal":
        tau_c, _ = optimal_tau_c(eta, bank.tau_m)
    else:
        tau_c = _num(loc, ("correlator", "tau_c"), tau_c, positive=True)
    if ("T_R" in sec) == ("T_c" in sec):
        raise loc.error(("correlator",), "give exactly one of T_R or T_c")
    try:
        if "T_R" in sec:
            T_c = averaging_time(kernel, _num(loc, ("correlator", "T_R"), sec["T_R"], positive=True), theta)
        else:
            T_c = _num(loc, ("correlator", "T_c"), sec["T_c"], positive=True)
        cfg = CorrelatorConfig(tau_c, T_c, kernel, sec.get("inner", "symmetrized"), theta, bank.gamma_m,
                               correlator_stats(tau_c, bank.gamma_m, bank.tau_m).mean,
                               sec.get("init", "mean"))
    except ValueError as exc:
        raise loc.error(("correlator",), str(exc)) from None
    armed = sec.get("armed", True)
    if not isinstance(armed, bool):
        raise loc.error(("correlator", "armed"), "expected true or false")
    return cfg, armed


def parse_config(text: str, source: str = "<string>", overrides: dict | None = None) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from YAML text.

    Rates are in units of ``Gamma_m`` unless ``decoherence.unit`` says
    otherwise; times are in the same units as ``detectors.tau_m``.
    """
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        doc = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else 1
        raise ConfigError(f"{source}:{line}: invalid YAML: {getattr(exc, 'problem', exc)}") from None
    loc = _Located(node, source)
    if not isinstance(doc, dict):
        raise loc.error((), "top level must be a mapping")
    if overrides:
        doc = _merge(doc, overrides)
    for k in doc:
        if k not in SECTIONS:
            raise loc.error((k,), f"unknown section; allowed: {', '.join(SECTIONS)}")
    if "version" not in doc:
        raise loc.error((), "missing 'version' key")
    if doc["version"] != SCHEMA_VERSION:
        raise loc.error(("version",), f"unsupported schema version {doc['version']!r}")
    mode = doc.get("mode", "continuous")
    mode = "analytics" if mode == "analytics-only" else mode
    bank = _bank(loc, _section(loc, doc, "detectors"))
    model = _decoherence(loc, _section(loc, doc, "decoherence"), bank)
    cor, armed = _correlator(loc, _section(loc, doc, "correlator"), bank)
    sim = _section(loc, doc, "simulation")
    proj = _section(loc, doc, "projective")
    out = _section(loc, doc, "output")
    kw = {}
    p = ("simulation",)
    kw["dt"] = _num(loc, p + ("dt",), sim.get("dt", 5e-3 / bank.gamma_m), positive=True)
    for key, integer in (("total_time", False), ("boost", False), ("n_records", True), ("n_traj", True),
                         ("workers", True), ("chunk_size", True)):
        if key in sim:
            kw[key] = _num(loc, p + (key,), sim[key], positive=True, integer=integer)
    if "seed" in sim:
        kw["seed"] = _num(loc, p + ("seed",), sim["seed"], integer=True)
    if "engine" in sim:
        kw["engine"] = sim["engine"]
    if "delta_t" in proj:
        kw["delta_t"] = _num(loc, ("projective", "delta_t"), proj["delta_t"], positive=True)
    if "n_cycles" in proj:
        kw["n_cycles"] = _num(loc, ("projective", "n_cycles"), proj["n_cycles"], positive=True, integer=True)
    if "inputs" in doc:
        inp = np.asarray(doc["inputs"], dtype=float)
        if inp.ndim != 2 or inp.shape[1] != 3 or np.any(np.abs(np.linalg.norm(inp, axis=1) - 1) > 1e-9):
            raise loc.error(("inputs",), "expected a list of unit Bloch vectors [x, y, z]")
        kw["inputs"] = tuple(map(tuple, inp.tolist()))
    if out.get("dir") is not None:
        kw["output_dir"] = str(out["dir"])
    if "traces" in out:
        kw["n_traces"] = _num(loc, ("output", "traces"), out["traces"], integer=True)
    try:
        return ExperimentConfig(mode=mode, bank=bank, decoherence=model, correlator=cor, armed=armed,
                                raw=doc, **kw)
    except ConfigError as exc:
        raise loc.error((), str(exc)) from None


def _merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    return parse_config(text, str(path), overrides)


def raw_document(path) -> dict:
    """Parsed YAML of a config file, for sweeps that rewrite single keys."""
    return yaml.safe_load(Path(path).read_text()) or {}
