"""Counter-based deterministic clock and coin streams.

Each site (x, z, direction) of the graphical construction owns an
independent rate-1 Poisson stream of ring times and an i.i.d. sequence of
uniform coins.  Both are pure functions of (master_seed, x, z, direction,
ring index): the stream is realized on unit time leaves, leaf ell holding
a Poisson(1) number of rings at sorted uniform positions, all derived
from a splitmix-style counter hash.  Purity gives O(1) random access (any
engine can jump to "first ring after t" without replaying history), which
is what makes the grand coupling exact rather than approximate: every
chain polling the same site at the same ring sees identical times and
coins, regardless of when or how often it polls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

U64 = np.uint64
_GOLD = U64(0x9E3779B97F4A7C15)
_MULT1 = U64(0xBF58476D1CE4E5B9)
_MULT2 = U64(0x94D049BB133111EB)
_MIX_X = U64(0xC2B2AE3D27D4EB4F)
_MIX_Z = U64(0x165667B19E3779F9)
_MIX_D = U64(0x27D4EB2F165667C5)

_INV53 = 1.0 / 9007199254740992.0  # 2**-53

# CDF of Poisson(1), enough terms that the float64 tail is exactly 1.0
_PCDF = np.cumsum(np.exp(-1.0) / np.array([math.factorial(k) for k in range(24)],
                                          dtype=np.float64))

MAX_LEAF_RINGS = 24


@njit(cache=True, inline="always")
def _mix64(z):
    z = U64(z)
    z ^= z >> U64(30)
    z *= _MULT1
    z ^= z >> U64(27)
    z *= _MULT2
    z ^= z >> U64(31)
    return z


@njit(cache=True)
def stream_key(master_seed, x, z, direction):
    """64-bit key of the (x, z, direction) stream under ``master_seed``."""
    k = _mix64(U64(master_seed) + _GOLD)
    k = _mix64(k ^ (U64(np.int64(x)) * _MIX_X))
    k = _mix64(k ^ (U64(np.int64(z)) * _MIX_Z))
    k = _mix64(k ^ (U64(np.int64(direction)) * _MIX_D))
    return k


@njit(cache=True, inline="always")
def _draw(key, leaf, j):
    # (leaf, j) -> u64 counter; leaf < 2**32 and j < 2**32 keep it injective
    off = (U64(np.int64(leaf)) << U64(32)) + U64(np.int64(j))
    return _mix64(U64(key) + off * _GOLD)


@njit(cache=True, inline="always")
def _u01(v):
    # uniform on (0, 1]; the open lower end makes zero-rate coin tests exact
    return (np.float64(v >> U64(11)) + 1.0) * _INV53


@njit(cache=True, inline="always")
def _u01h(v):
    # uniform on [0, 1); used for within-leaf ring positions
    return np.float64(v >> U64(11)) * _INV53


@njit(cache=True, inline="always")
def leaf_times(key, leaf, pcdf, pos):
    """Realize the ring positions of one leaf: count and sorted offsets in [0, 1)."""
    u = _u01(_draw(key, leaf, 0))
    n = 0
    while n < pcdf.shape[0] and u > pcdf[n]:
        n += 1
    for j in range(n):
        p = _u01h(_draw(key, leaf, 1 + j))
        i = j
        while i > 0 and pos[i - 1] > p:
            pos[i] = pos[i - 1]
            i -= 1
        pos[i] = p
    return n


@njit(cache=True, inline="always")
def ring_coin(key, leaf, n, rank):
    """Coin of the rank-th ring (by sorted position) of a leaf holding n rings."""
    return _u01(_draw(key, leaf, 1 + n + rank))


@njit(cache=True)
def leaf_fill(key, leaf, pcdf, pos, coin):
    """Realize leaf ``leaf`` of a stream: ring count, sorted positions, coins.

    Positions are offsets in [0, 1) within the leaf; coin r belongs to the
    ring of sorted rank r.  Returns the ring count.
    """
    n = leaf_times(key, leaf, pcdf, pos)
    for r in range(n):
        coin[r] = ring_coin(key, leaf, n, r)
    return n


@njit(cache=True, inline="always")
def first_ring_after(key, t_from, horizon, pcdf, pos):
    """Earliest ring of the stream with time strictly greater than t_from.

    Returns (leaf, rank, time); time = inf when no ring exists by
    ``horizon``.  Cost is O(1) expected, independent of t_from.
    """
    leaf = np.int64(t_from) if t_from > 0.0 else np.int64(0)
    while np.float64(leaf) <= horizon:
        n = leaf_times(key, leaf, pcdf, pos)
        for r in range(n):
            t = np.float64(leaf) + pos[r]
            if t > t_from:
                if t <= horizon:
                    return leaf, np.int64(r), t
                return np.int64(-1), np.int64(-1), np.inf
        leaf += 1
    return np.int64(-1), np.int64(-1), np.inf


@njit(cache=True, inline="always")
def ring_after(key, leaf, rank, n, horizon, pcdf, pos):
    """The ring following ring (leaf, rank); ``n``, ``pos`` describe that leaf."""
    if rank + 1 < n:
        t = np.float64(leaf) + pos[rank + 1]
        if t <= horizon:
            return leaf, rank + 1, t
        return np.int64(-1), np.int64(-1), np.inf
    lf = leaf + 1
    while np.float64(lf) <= horizon:
        n2 = leaf_times(key, lf, pcdf, pos)
        if n2 > 0:
            t = np.float64(lf) + pos[0]
            if t <= horizon:
                return lf, np.int64(0), t
            return np.int64(-1), np.int64(-1), np.inf
        lf += 1
    return np.int64(-1), np.int64(-1), np.inf


# ---------------------------------------------------------------------------
# Python-facing wrappers
# ---------------------------------------------------------------------------

_DIR_CODE = {"up": 0, "down": 1, 0: 0, 1: 1}


@dataclass(frozen=True)
class ClockSite:
    """One Poisson stream index: column x, level z, direction 'up' or 'down'."""

    x: int
    z: int
    direction: str

    def __post_init__(self):
        if self.direction not in ("up", "down"):
            raise ValueError(f"direction must be 'up' or 'down', got {self.direction}")


def theta_sites(L: int, m: int = 0, wide_x: bool = False):
    """The clock-site set: plaquette centers available to the dynamics.

    For the wall model this is x in [2, L-2], z in [1, L/2-1-|x-L/2|] with
    x + z odd.  ``m`` raises the level cap by m (lifted systems pinned at
    height m), and ``wide_x`` widens the column range to [1, L-1], which
    the lifted systems need because their boundary columns can flip.
    """
    x_lo, x_hi = (1, L - 1) if wide_x else (2, L - 2)
    out = []
    for x in range(x_lo, x_hi + 1):
        cap = m + L // 2 - 1 - abs(x - L // 2)
        for z in range(1, cap + 1):
            if (x + z) % 2 == 1:
                out.append((x, z))
    return out


@dataclass(frozen=True)
class ClockRealization:
    """All clock/coin streams determined by one 64-bit master seed.

    The k-th ring time and k-th coin of any site are pure functions of
    (master_seed, x, z, direction, k); the heavy lifting lives in the
    jitted helpers above, shared bit-for-bit by every engine.
    """

    master_seed: int

    def key(self, x: int, z: int, direction) -> int:
        return int(stream_key(U64(self.master_seed), x, z, _DIR_CODE[direction]))

    def rings_upto(self, x: int, z: int, direction, horizon: float):
        """All (times, coins) of the stream with time <= horizon, in order."""
        key = U64(self.key(x, z, direction))
        pos = np.empty(MAX_LEAF_RINGS, dtype=np.float64)
        coin = np.empty(MAX_LEAF_RINGS, dtype=np.float64)
        times, coins = [], []
        leaf = 0
        while leaf <= horizon:
            n = leaf_fill(key, leaf, _PCDF, pos, coin)
            for r in range(n):
                t = leaf + pos[r]
                if t <= horizon:
                    times.append(t)
                    coins.append(coin[r])
            leaf += 1
        return np.array(times), np.array(coins)

    def ring_times(self, x: int, z: int, direction, count: int) -> np.ndarray:
        """The first ``count`` ring times of the stream."""
        key = U64(self.key(x, z, direction))
        pos = np.empty(MAX_LEAF_RINGS, dtype=np.float64)
        coin = np.empty(MAX_LEAF_RINGS, dtype=np.float64)
        out = np.empty(count)
        got, leaf = 0, 0
        while got < count:
            n = leaf_fill(key, leaf, _PCDF, pos, coin)
            for r in range(min(n, count - got)):
                out[got] = leaf + pos[r]
                got += 1
            leaf += 1
        return out

    def coins(self, x: int, z: int, direction, count: int) -> np.ndarray:
        key = U64(self.key(x, z, direction))
        pos = np.empty(MAX_LEAF_RINGS, dtype=np.float64)
        coin = np.empty(MAX_LEAF_RINGS, dtype=np.float64)
        out = np.empty(count)
        got, leaf = 0, 0
        while got < count:
            n = leaf_fill(key, leaf, _PCDF, pos, coin)
            for r in range(min(n, count - got)):
                out[got] = coin[r]
                got += 1
            leaf += 1
        return out


def derive_seed(master_seed: int, stream_id: int) -> int:
    """Child seed for replica/auxiliary streams; pure in (seed, id)."""
    mixed = (int(master_seed) ^ (int(stream_id) * 0x9E3779B97F4A7C15)
             ^ 0xA5A5A5A55A5A5A5A) % (1 << 64)
    return int(_mix64(U64(mixed)))
