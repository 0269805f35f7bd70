"""Dwell-time stability certificates for switched linear systems.

Piecewise-quadratic Lyapunov functions (one per mode) are synthesized by LMI
feasibility, a path-following heuristic for the bilinear conditions, and
bisection on the dwell time.
"""
from .certifier import (CertifierConfig, EscalationReport, bisect_tau, check_tau_feasible,
                        dwell_lower_bound, escalate_m, solve_m1)
from .lmi import Certificate, ScalarMultipliers, verify_certificate
from .lyapunov import LyapunovFamily, PiecewiseQuadratic
from .simulator import monitor_lyapunov, periodic_schedule, simulate
from .system import SwitchedSystem, benchmark_system

__version__ = "0.1.0"

__all__ = [
    "Certificate", "CertifierConfig", "EscalationReport", "LyapunovFamily", "PiecewiseQuadratic",
    "ScalarMultipliers", "SwitchedSystem", "benchmark_system", "bisect_tau", "check_tau_feasible",
    "dwell_lower_bound", "escalate_m", "monitor_lyapunov", "periodic_schedule", "simulate",
    "solve_m1", "verify_certificate",
]
