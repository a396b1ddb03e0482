"""Optomechanical quantum state conversion between two optical cavities."""

from .core import (Pulse, SteadyState, SystemConfig, calibrate_drive, resonant_drive,
                   solve_steady_state, swap_pulse_duration, thermal_occupation)
from .errors import *  # noqa: F401,F403
from .protocol import (OrderingRecord, ProtocolPlan, ProtocolReport, build_plan,
                       compare_F_vs_F1, ideal_swap_reference, run_protocol)
from .states import InitialStateSpec, parse_state

__all__ = [
    "Pulse", "SteadyState", "SystemConfig", "calibrate_drive", "resonant_drive",
    "solve_steady_state", "swap_pulse_duration", "thermal_occupation",
    "OrderingRecord", "ProtocolPlan", "ProtocolReport", "build_plan", "compare_F_vs_F1",
    "ideal_swap_reference", "run_protocol", "InitialStateSpec", "parse_state",
]
