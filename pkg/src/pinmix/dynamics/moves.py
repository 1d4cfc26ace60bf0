"""Single corner-flip moves, their rates, and the clock-event update rule.

These are the reference (pure Python) definitions of the transition
mechanics; the event engines reimplement them in jitted code and are
tested against these bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..statespace import ModelParams, as_heights
from .clocks import ClockSite, _DIR_CODE


def flip(path, x: int) -> np.ndarray:
    """The corner flip at column x: reflect xi_x through its neighbors' level.

    Identity when x holds no local extremum or when both neighbors sit on
    the wall (the flipped path would leave the state space).
    """
    h = as_heights(path)
    L = len(h) - 1
    if not (1 <= x <= L - 1):
        raise ValueError(f"x must be in [1, {L - 1}], got {x}")
    if h[x - 1] != h[x + 1] or h[x - 1] == 0:
        return h
    out = h.copy()
    out[x] = h[x - 1] + h[x + 1] - h[x]
    return out


def rate(path, x: int, params: ModelParams) -> float:
    """Jump rate of the move path -> flip(path, x).

    1/2 for corners away from the wall, lambda/(1+lambda) for the pinning
    move (1,2,1) -> (1,0,1), 1/(1+lambda) for the unpinning move, and 0
    when no corner exists or both neighbors touch the wall.  These choices
    make the chain reversible for the Gibbs measure.
    """
    h = as_heights(path)
    L = len(h) - 1
    if not (1 <= x <= L - 1):
        raise ValueError(f"x must be in [1, {L - 1}], got {x}")
    nb = h[x - 1]
    if h[x + 1] != nb or nb == 0:
        return 0.0
    if nb == 1:
        if h[x] == 2:
            return params.lam / (1.0 + params.lam)
        return 1.0 / (1.0 + params.lam)
    return 0.5


def total_exit_rate(path, params: ModelParams) -> float:
    h = as_heights(path)
    return sum(rate(h, x, params) for x in range(1, len(h) - 1))


@dataclass(frozen=True)
class ChainState:
    """A chain trajectory point: current path, time, and parameters."""

    heights: np.ndarray
    time: float
    params: ModelParams


def apply_ring(heights: np.ndarray, x: int, z: int, direction, coin: float,
               lam: float, wall: bool = True) -> np.ndarray:
    """Apply one clock ring of site (x, z, direction) to a height profile.

    An up ring acts only if xi_x = z - 1 and both neighbors sit at z; the
    flip to z + 1 is accepted when the coin is at most 1/2 (z >= 2) or
    1/(1+lambda) (z = 1, leaving the wall).  A down ring acts only if
    xi_x = z + 1 with neighbors at z; thresholds 1/2, or lambda/(1+lambda)
    when the move lands on the wall.  ``wall=False`` (the no-wall
    comparison system) uses the plain 1/2 threshold at every level.
    Returns the input array unchanged when the ring does nothing.
    """
    d = _DIR_CODE[direction]
    if heights[x - 1] != z or heights[x + 1] != z:
        return heights
    if d == 0:
        if heights[x] != z - 1:
            return heights
        thr = (1.0 / (1.0 + lam)) if (wall and z == 1) else 0.5
        new = z + 1
    else:
        if heights[x] != z + 1:
            return heights
        if wall and z < 1:
            return heights
        thr = (lam / (1.0 + lam)) if (wall and z == 1) else 0.5
        new = z - 1
    if coin <= thr:
        out = heights.copy()
        out[x] = new
        return out
    return heights


def apply_clock_event(state: ChainState, site: ClockSite, coin: float) -> ChainState:
    """Spec-level wrapper of :func:`apply_ring` on a ChainState."""
    new_h = apply_ring(state.heights, site.x, site.z, site.direction, coin,
                       state.params.lam)
    return ChainState(new_h, state.time, state.params)
