"""Censoring schedules: piecewise-constant maps from time to canceled sites.

A censored ring is consumed but performs no update.  For monotone starts
the Peres-Winkler inequality says censoring can only slow mixing, which
the exact module verifies on small instances.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class CensoringSchedule:
    """Right-continuous schedule: censored_sets[i] applies on [breakpoints[i], next).

    The empty schedule (no breakpoints beyond 0, empty set) is the
    uncensored dynamics.
    """

    breakpoints: tuple = (0.0,)
    censored_sets: tuple = (frozenset(),)

    def __post_init__(self):
        bp = tuple(float(t) for t in self.breakpoints)
        if len(bp) != len(self.censored_sets):
            raise ValueError("breakpoints and censored_sets must have equal length")
        if bp[0] != 0.0 or any(bp[i] >= bp[i + 1] for i in range(len(bp) - 1)):
            raise ValueError("breakpoints must start at 0 and increase strictly")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "censored_sets",
                           tuple(frozenset(tuple(s) for s in cs) for cs in self.censored_sets))

    def censored_at(self, t: float) -> frozenset:
        i = int(np.searchsorted(self.breakpoints, t, side="right")) - 1
        return self.censored_sets[max(i, 0)]

    def masks(self, L: int, n_z: int, z_floor: int):
        """Dense per-interval site masks indexed by x * n_z + (z - z_floor)."""
        bp = np.array(self.breakpoints, dtype=np.float64)
        masks = np.zeros((len(bp), (L + 1) * n_z), dtype=np.bool_)
        for i, cs in enumerate(self.censored_sets):
            for (x, z) in cs:
                if 0 <= x <= L and 0 <= z - z_floor < n_z:
                    masks[i, x * n_z + (z - z_floor)] = True
        return bp, masks


EMPTY_SCHEDULE = CensoringSchedule()


def contact_sites(L: int) -> frozenset:
    """The level-1 sites whose updates change the contact count:
    {(x, 1) : x even, 2 <= x <= L-2}."""
    return frozenset((x, 1) for x in range(2, L - 1, 2))


def contact_window_schedule(L: int, t_window: float) -> CensoringSchedule:
    """Censor all contact-changing updates on [0, t_window), nothing after."""
    return CensoringSchedule((0.0, t_window), (contact_sites(L), frozenset()))


def full_schedule(L: int, m: int = 0, wide_x: bool = False) -> CensoringSchedule:
    """Censor every site forever; the dynamics freezes."""
    from .clocks import theta_sites
    return CensoringSchedule((0.0,), (frozenset(theta_sites(L, m, wide_x)),))
