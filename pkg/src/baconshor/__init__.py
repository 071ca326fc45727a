"""Continuous error detection on the four-qubit Bacon-Shor code.

Simulates continuously monitored gauge operators, correlator-based error
detection and the equivalent projective protocol, and compares logical
error and termination rates with closed-form predictions.
"""
from .analytics import (
    continuous_logical_rates,
    correlator_stats,
    false_alarm_rate,
    optimal_tau_c,
    projective_rates,
)
from .decoherence import DecoherenceModel
from .detectors import DetectorBank
from .monitor import CorrelatorConfig, CorrelatorMonitor, default_config
from .pauli import PauliString, decode, encode, pauli
from .projective import ProjectiveProtocolConfig, run_projective_protocol
from .tomography import ChiMatrix, ChiSlopeEstimator, TerminationRateEstimator
from .trajectory import NumericalError

__version__ = "0.1.0"

__all__ = [
    "ChiMatrix", "ChiSlopeEstimator", "CorrelatorConfig", "CorrelatorMonitor", "DecoherenceModel",
    "DetectorBank", "NumericalError", "PauliString", "ProjectiveProtocolConfig",
    "TerminationRateEstimator", "continuous_logical_rates", "correlator_stats", "decode",
    "default_config", "encode", "false_alarm_rate", "optimal_tau_c", "pauli", "projective_rates",
    "run_projective_protocol",
]
