"""Continuous-time corner-flip dynamics: moves, clocks, censoring, engines."""

from .censoring import (CensoringSchedule, EMPTY_SCHEDULE, contact_sites,
                        contact_window_schedule, full_schedule)
from .clocks import ClockRealization, ClockSite, derive_seed, stream_key, theta_sites
from .engine import (BracketSummary, ChainSpec, CoalescenceSample, CouplingResult,
                     coalescence_time, grand_coupling, simulate, simulate_superposed,
                     site_bounds)
from .moves import ChainState, apply_clock_event, apply_ring, flip, rate, total_exit_rate

__all__ = [
    "BracketSummary", "CensoringSchedule", "ChainSpec", "ChainState",
    "ClockRealization", "ClockSite", "CoalescenceSample", "CouplingResult",
    "EMPTY_SCHEDULE", "apply_clock_event", "apply_ring", "coalescence_time",
    "contact_sites", "contact_window_schedule", "derive_seed", "flip",
    "full_schedule", "grand_coupling", "rate", "simulate",
    "simulate_superposed", "site_bounds", "stream_key", "theta_sites",
    "total_exit_rate",
]
