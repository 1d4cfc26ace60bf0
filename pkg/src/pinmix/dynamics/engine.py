"""Event-driven engines for the corner-flip dynamics.

Two engines share the elementary update rule:

* ``_run_coupling``: the lazy stream engine.  Every chain in a grand
  coupling consumes the same counter-based clock realization, so order
  preservation is a property of the realized trajectories, not of
  distributions.  Only streams that currently hold a flippable corner of
  at least one chain are scheduled (a ring anywhere else provably does
  nothing); scheduling uses a binary heap keyed by (time, site id), with
  stale entries dropped lazily.  Because ring times and coins are pure
  functions of counters, a stream that re-enters relevance jumps straight
  to its first ring after the current time at O(1) cost.  Trajectories
  are bit-identical to a brute-force replay of every ring of every site
  in time order (the exact module checks this).

* ``_run_single_superposed``: a faster single-chain engine that samples
  the superposed next event at rate = number of flippable corners and
  attributes it uniformly, justified by Poisson superposition/thinning
  plus memorylessness when corners enter or leave the set.  Identical in
  law to the stream engine, not pathwise coupled to it; used for long
  single-chain protocol runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ..statespace import ModelParams, as_heights, maximal_path, minimal_path, sample_equilibrium
from .censoring import EMPTY_SCHEDULE, CensoringSchedule
from .clocks import (_GOLD, _PCDF, _mix64, _u01, _u01h, MAX_LEAF_RINGS, U64,
                     ClockRealization, derive_seed, first_ring_after, leaf_times,
                     ring_after, ring_coin, stream_key)

OBS_N, OBS_PHI, OBS_PHIBAR, OBS_H, OBS_Q = 0, 1, 2, 3, 4
N_OBS = 5

# heap entry meta layout: sid (25 bits) | leaf (33 bits) | rank (5 bits)
_M33 = np.int64((1 << 33) - 1)
_M5 = np.int64(31)


# ---------------------------------------------------------------------------
# Site-set geometry
# ---------------------------------------------------------------------------

def site_bounds(L: int, m: int = 0, wide_x: bool = False, free_floor: bool = False):
    """Per-column clock-site bounds (zmin, zmax) plus flat-index geometry.

    Standard wall model: x in [2, L-2], z in [1, L/2-1-|x-L/2|].  Lifted
    systems (endpoints at height m) raise the cap by m and widen x to
    [1, L-1]; ``free_floor`` lowers zmin to the mirrored envelope so that
    no-wall chains can flip below level 1.
    """
    x_lo, x_hi = (1, L - 1) if wide_x else (2, L - 2)
    zmin = np.ones(L + 1, dtype=np.int64)
    zmax = np.full(L + 1, -1, dtype=np.int64)
    for x in range(x_lo, x_hi + 1):
        cap = L // 2 - 1 - abs(x - L // 2)
        zmax[x] = m + cap
        zmin[x] = (m - cap) if free_floor else 1
    if x_hi < x_lo or int(zmax.max()) < int(zmin[x_lo:x_hi + 1].min()):
        # L = 2 without a lift: no clock site exists, the chain is frozen
        return x_lo, x_hi, zmin, zmax, 1, 1
    z_floor = int(zmin[x_lo:x_hi + 1].min())
    n_z = int(zmax.max()) - z_floor + 1
    return x_lo, x_hi, zmin, zmax, z_floor, n_z


# ---------------------------------------------------------------------------
# Jitted helpers
# ---------------------------------------------------------------------------

@njit(cache=True, inline="always")
def _chain_stream(heights, c, y, x_lo, x_hi, zmin, zmax, z_floor, n_z, is_wall):
    """Flat stream id of chain c's flippable corner at column y, or -1."""
    if y < x_lo or y > x_hi:
        return np.int64(-1)
    nb = heights[c, y - 1]
    if heights[c, y + 1] != nb:
        return np.int64(-1)
    if nb < zmin[y] or nb > zmax[y]:
        return np.int64(-1)
    if heights[c, y] == nb - 1:
        d = np.int64(0)
    else:
        if is_wall and nb < 1:
            return np.int64(-1)
        d = np.int64(1)
    return (y * n_z + (nb - z_floor)) * 2 + d


@njit(cache=True, inline="always")
def _schedule_ring(hp_t, hp_m, hp_n, tok, hpk, sid, leaf, rank, t):
    """Schedule ring (leaf, rank) of stream sid; revalidates an entry already
    in the heap for the same ring instead of pushing a duplicate.  The caller
    guarantees spare capacity."""
    meta = (sid << 38) | (leaf << 5) | rank
    tok[sid] = meta
    if hpk[sid] == meta:
        return hp_n
    hpk[sid] = meta
    i = hp_n
    hp_t[i] = t
    hp_m[i] = meta
    while i > 0:
        p = (i - 1) >> 1
        if hp_t[i] < hp_t[p] or (hp_t[i] == hp_t[p] and hp_m[i] < hp_m[p]):
            hp_t[i], hp_t[p] = hp_t[p], hp_t[i]
            hp_m[i], hp_m[p] = hp_m[p], hp_m[i]
            i = p
        else:
            break
    return hp_n + 1


@njit(cache=True, inline="always")
def _sift_root(hp_t, hp_m, n):
    i = 0
    while True:
        l = 2 * i + 1
        if l >= n:
            break
        sm = l
        r = l + 1
        if r < n and (hp_t[r] < hp_t[l] or (hp_t[r] == hp_t[l] and hp_m[r] < hp_m[l])):
            sm = r
        if hp_t[sm] < hp_t[i] or (hp_t[sm] == hp_t[i] and hp_m[sm] < hp_m[i]):
            hp_t[i], hp_t[sm] = hp_t[sm], hp_t[i]
            hp_m[i], hp_m[sm] = hp_m[sm], hp_m[i]
            i = sm
        else:
            break


@njit(cache=True, inline="always")
def _pop_root(hp_t, hp_m, hp_n):
    n = hp_n - 1
    if n > 0:
        hp_t[0] = hp_t[n]
        hp_m[0] = hp_m[n]
        _sift_root(hp_t, hp_m, n)
    return n


@njit(cache=True, inline="always")
def _get_key(keys, keys_ok, seed, sid, n_z, z_floor):
    if not keys_ok[sid]:
        x = sid // (2 * n_z)
        z = (sid >> 1) % n_z + z_floor
        keys[sid] = stream_key(seed, x, z, sid & 1)
        keys_ok[sid] = True
    return keys[sid]


@njit(cache=True)
def _snapshot_obs(heights, c, w_sin, w_cos, out, si):
    L = heights.shape[1] - 1
    ncont = 0
    phi = 0.0
    phibar = 0.0
    hmax = heights[c, 0]
    q = 1
    best_q = 1
    prev = heights[c, 1] - heights[c, 0]
    for x in range(1, L + 1):
        h = heights[c, x]
        if h > hmax:
            hmax = h
        if x < L:
            if h == 0:
                ncont += 1
            phi += h * w_sin[x]
            phibar += h * w_cos[x]
        if x >= 2:
            s = h - heights[c, x - 1]
            if s == prev:
                q += 1
                if q > best_q:
                    best_q = q
            else:
                q = 1
                prev = s
    out[si, c, OBS_N] = ncont
    out[si, c, OBS_PHI] = phi
    out[si, c, OBS_PHIBAR] = phibar
    out[si, c, OBS_H] = hmax
    out[si, c, OBS_Q] = best_q


@njit(cache=True)
def _q_monotone(heights, c):
    L = heights.shape[1] - 1
    q = 1
    best = 1
    prev = heights[c, 1] - heights[c, 0]
    for x in range(2, L + 1):
        s = heights[c, x] - heights[c, x - 1]
        if s == prev:
            q += 1
            if q > best:
                best = q
        else:
            q = 1
            prev = s
    return best


@njit(cache=True)
def _height_max(heights, c):
    m = heights[c, 0]
    for x in range(1, heights.shape[1]):
        if heights[c, x] > m:
            m = heights[c, x]
    return m


@njit(cache=True)
def _run_coupling(seed, horizon,
                  x_lo, x_hi, zmin, zmax, z_floor, n_z,
                  heights, wall, lam,
                  cen_bp, cen_mask,
                  snap_t, want_heights, w_sin, w_cos,
                  pairs, order_pairs,
                  diag_on, diag_top, diag_ref, delta_min, thresholds, t_floor,
                  collect_events, max_events, stop_when_coalesced):
    C = heights.shape[0]
    L = heights.shape[1] - 1
    S = snap_t.shape[0]
    P = pairs.shape[0]
    Q = order_pairs.shape[0]
    K = thresholds.shape[0]
    NS = (L + 1) * n_z * 2

    pcdf = _PCDF
    pos_buf = np.empty(MAX_LEAF_RINGS, dtype=np.float64)

    refcnt = np.zeros(NS, dtype=np.int64)
    tok = np.full(NS, -1, dtype=np.int64)
    hpk = np.full(NS, -1, dtype=np.int64)
    keys = np.zeros(NS, dtype=np.uint64)
    keys_ok = np.zeros(NS, dtype=np.bool_)

    cap = max(1024, 4 * (x_hi - x_lo + 1) * C)
    hp_t = np.empty(cap, dtype=np.float64)
    hp_m = np.empty(cap, dtype=np.int64)
    hp_n = 0

    # outputs
    snap_obs = np.zeros((S, C, N_OBS), dtype=np.float64)
    n_sh = S if want_heights else 0
    snap_heights = np.zeros((n_sh, C, L + 1), dtype=np.int64)
    taus = np.full(P, np.inf)
    diffs = np.zeros(P, dtype=np.int64)
    n_viol = 0
    first_viol = np.full(4, -1.0)
    ev_cap = max_events if collect_events else 0
    ev_t = np.empty(ev_cap, dtype=np.float64)
    ev_meta = np.empty((ev_cap, 6), dtype=np.int64)  # chain, x, z, dir, accepted, new_h
    n_ev = 0
    ev_overflow = False
    cross_t = np.full(K, np.inf)
    cross_ratio = np.full(K, np.nan)
    qv = 0.0
    min_jump = np.inf
    n_jumps = 0

    for p in range(P):
        a, b = pairs[p, 0], pairs[p, 1]
        dcnt = 0
        for x in range(L + 1):
            if heights[a, x] != heights[b, x]:
                dcnt += 1
        diffs[p] = dcnt
        if dcnt == 0:
            taus[p] = 0.0

    phibar_run = np.zeros(C, dtype=np.float64)
    a_val = 0.0
    diag_pair = -1
    if diag_on:
        for c in range(C):
            acc = 0.0
            for x in range(1, L):
                acc += heights[c, x] * w_cos[x]
            phibar_run[c] = acc
        a_val = (phibar_run[diag_top] - phibar_run[diag_ref]) / delta_min
        for p in range(P):
            if (pairs[p, 0] == diag_top and pairs[p, 1] == diag_ref) or \
               (pairs[p, 0] == diag_ref and pairs[p, 1] == diag_top):
                diag_pair = p
    cross_i = 0
    floor_done = False

    # schedule every stream holding at least one flippable corner
    for c in range(C):
        for y in range(x_lo, x_hi + 1):
            sid = _chain_stream(heights, c, y, x_lo, x_hi, zmin, zmax, z_floor, n_z, wall[c])
            if sid >= 0:
                refcnt[sid] += 1
    for sid in range(NS):
        if refcnt[sid] > 0:
            key = _get_key(keys, keys_ok, seed, np.int64(sid), n_z, z_floor)
            lf, rk, t0 = first_ring_after(key, 0.0, horizon, pcdf, pos_buf)
            if lf >= 0:
                if hp_n + 1 > hp_t.shape[0]:
                    cap2 = 2 * hp_t.shape[0]
                    t2 = np.empty(cap2, dtype=np.float64)
                    m2 = np.empty(cap2, dtype=np.int64)
                    t2[:hp_n] = hp_t[:hp_n]
                    m2[:hp_n] = hp_m[:hp_n]
                    hp_t, hp_m = t2, m2
                hp_n = _schedule_ring(hp_t, hp_m, hp_n, tok, hpk,
                                      np.int64(sid), lf, rk, t0)

    snap_i = 0
    cen_i = 0
    B = cen_bp.shape[0]
    t_now = 0.0
    n_pops = 0
    n_flips = 0

    while hp_n > 0:
        # one growth check covers every push this iteration can make
        if hp_n + 1 + 2 * C > hp_t.shape[0]:
            cap2 = 2 * hp_t.shape[0]
            t2 = np.empty(cap2, dtype=np.float64)
            m2 = np.empty(cap2, dtype=np.int64)
            t2[:hp_n] = hp_t[:hp_n]
            m2[:hp_n] = hp_m[:hp_n]
            hp_t, hp_m = t2, m2
        t = hp_t[0]
        meta = hp_m[0]
        sid = meta >> 38
        if tok[sid] != meta:
            # stale entry: the stream was unscheduled after this ring was pushed
            if hpk[sid] == meta:
                hpk[sid] = -1
            hp_n = _pop_root(hp_t, hp_m, hp_n)
            continue
        n_pops += 1
        t_now = t
        leaf = (meta >> 5) & _M33
        rank = meta & _M5

        while snap_i < S and snap_t[snap_i] < t:
            for c in range(C):
                _snapshot_obs(heights, c, w_sin, w_cos, snap_obs, snap_i)
            if want_heights:
                snap_heights[snap_i] = heights
            snap_i += 1

        while cen_i + 1 < B and t >= cen_bp[cen_i + 1]:
            cen_i += 1

        x = sid // (2 * n_z)
        z = (sid >> 1) % n_z + z_floor
        d = sid & 1
        key = keys[sid]
        n_in_leaf = leaf_times(key, leaf, pcdf, pos_buf)
        coin = ring_coin(key, leaf, n_in_leaf, rank)
        # the stream's following ring, read off now because pos_buf is
        # scratch shared with the scheduling calls made during flips
        nx_lf, nx_rk, nx_tt = ring_after(key, leaf, rank, n_in_leaf, horizon, pcdf, pos_buf)

        # first event at or past the diagnostics floor: thresholds may
        # already be crossed at the floor itself (A is constant in between)
        if diag_on and (not floor_done) and t >= t_floor:
            floor_done = True
            while cross_i < K and a_val <= thresholds[cross_i]:
                cross_t[cross_i] = t_floor
                hh = float(_height_max(heights, diag_top))
                qq = float(_q_monotone(heights, diag_ref))
                lm = lam[diag_ref]
                cross_ratio[cross_i] = lm * delta_min * a_val / (3.0 * (1.0 + lm) * hh * qq)
                cross_i += 1

        if not cen_mask[cen_i, sid >> 1]:
            any_flip = False
            da_ring = 0.0
            pair_sep = diag_pair < 0 or diffs[diag_pair] > 0
            for c in range(C):
                if heights[c, x - 1] != z or heights[c, x + 1] != z:
                    continue
                hx = heights[c, x]
                if d == 0:
                    if hx != z - 1:
                        continue
                    thr = 1.0 / (1.0 + lam[c]) if (wall[c] and z == 1) else 0.5
                    new_h = z + 1
                else:
                    if hx != z + 1:
                        continue
                    if wall[c] and z < 1:
                        continue
                    thr = lam[c] / (1.0 + lam[c]) if (wall[c] and z == 1) else 0.5
                    new_h = z - 1
                acc = coin <= thr
                if collect_events:
                    if n_ev < max_events:
                        ev_t[n_ev] = t
                        ev_meta[n_ev, 0] = c
                        ev_meta[n_ev, 1] = x
                        ev_meta[n_ev, 2] = z
                        ev_meta[n_ev, 3] = d
                        ev_meta[n_ev, 4] = 1 if acc else 0
                        ev_meta[n_ev, 5] = new_h if acc else hx
                        n_ev += 1
                    else:
                        ev_overflow = True
                if not acc:
                    continue

                # ---- apply the flip for chain c ----
                n_flips += 1
                any_flip = True
                old0 = _chain_stream(heights, c, x - 1, x_lo, x_hi, zmin, zmax, z_floor, n_z, wall[c])
                old1 = _chain_stream(heights, c, x, x_lo, x_hi, zmin, zmax, z_floor, n_z, wall[c])
                old2 = _chain_stream(heights, c, x + 1, x_lo, x_hi, zmin, zmax, z_floor, n_z, wall[c])
                heights[c, x] = new_h
                for k3 in range(3):
                    y = x - 1 + k3
                    old_sid = old0 if k3 == 0 else (old1 if k3 == 1 else old2)
                    new_sid = _chain_stream(heights, c, y, x_lo, x_hi, zmin, zmax, z_floor, n_z, wall[c])
                    if new_sid == old_sid:
                        continue
                    if old_sid >= 0:
                        refcnt[old_sid] -= 1
                        if refcnt[old_sid] == 0:
                            tok[old_sid] = -1
                    if new_sid >= 0:
                        refcnt[new_sid] += 1
                        if refcnt[new_sid] == 1:
                            nkey = _get_key(keys, keys_ok, seed, new_sid, n_z, z_floor)
                            lf, rk, tt = first_ring_after(nkey, t, horizon, pcdf, pos_buf)
                            if lf >= 0:
                                hp_n = _schedule_ring(hp_t, hp_m, hp_n, tok, hpk,
                                                      new_sid, lf, rk, tt)

                # pair difference counts and coalescence times
                for p in range(P):
                    a, b = pairs[p, 0], pairs[p, 1]
                    if a != c and b != c:
                        continue
                    o = b if a == c else a
                    was = 1 if hx != heights[o, x] else 0
                    now = 1 if new_h != heights[o, x] else 0
                    diffs[p] += now - was
                    if diffs[p] == 0 and taus[p] == np.inf:
                        taus[p] = t

                # bracket diagnostics accumulate the net A-jump of the ring
                if diag_on and (c == diag_top or c == diag_ref):
                    da = (new_h - hx) * w_cos[x] / delta_min
                    if c == diag_ref:
                        da = -da
                    phibar_run[c] += (new_h - hx) * w_cos[x]
                    da_ring += da

            # the ring's several sub-updates share one event time: order and
            # the area process are observed once per ring, after all of them
            if any_flip:
                for q2 in range(Q):
                    a, b = order_pairs[q2, 0], order_pairs[q2, 1]
                    if heights[a, x] > heights[b, x]:
                        n_viol += 1
                        if first_viol[0] < 0:
                            first_viol[0] = t
                            first_viol[1] = x
                            first_viol[2] = a
                            first_viol[3] = b
                if diag_on:
                    a_val += da_ring
                    if da_ring != 0.0 and pair_sep:
                        qv += da_ring * da_ring
                        ada = abs(da_ring)
                        if ada < min_jump:
                            min_jump = ada
                        n_jumps += 1
                    if floor_done:
                        while cross_i < K and a_val <= thresholds[cross_i]:
                            cross_t[cross_i] = t
                            hh = float(_height_max(heights, diag_top))
                            qq = float(_q_monotone(heights, diag_ref))
                            lm = lam[diag_ref]
                            cross_ratio[cross_i] = lm * delta_min * a_val / (3.0 * (1.0 + lm) * hh * qq)
                            cross_i += 1

        # advance the stream past the consumed ring: when it stays
        # scheduled, replace the root in place (one sift instead of a
        # pop/push pair); new entries pushed during the flips all carry
        # later times, so the root could not have been displaced
        if refcnt[sid] > 0 and nx_lf >= 0:
            meta2 = (sid << 38) | (nx_lf << 5) | nx_rk
            tok[sid] = meta2
            hpk[sid] = meta2
            hp_t[0] = nx_tt
            hp_m[0] = meta2
            _sift_root(hp_t, hp_m, hp_n)
        else:
            tok[sid] = -1
            if hpk[sid] == meta:
                hpk[sid] = -1
            hp_n = _pop_root(hp_t, hp_m, hp_n)

        if stop_when_coalesced and snap_i >= S:
            done = True
            for p in range(P):
                if taus[p] == np.inf:
                    done = False
                    break
            if done:
                break

    # state is constant from the last event to the horizon
    while snap_i < S:
        for c in range(C):
            _snapshot_obs(heights, c, w_sin, w_cos, snap_obs, snap_i)
        if want_heights:
            snap_heights[snap_i] = heights
        snap_i += 1

    return (snap_obs, snap_heights, taus, n_viol, first_viol,
            ev_t[:n_ev], ev_meta[:n_ev], ev_overflow,
            qv, min_jump, n_jumps, cross_t, cross_ratio,
            t_now, n_pops, n_flips)


@njit(cache=True)
def _run_single_superposed(seed, horizon, x_lo, x_hi, heights, is_wall, lam,
                           snap_t, want_heights, w_sin, w_cos):
    """Single-chain kinetic Monte Carlo via superposition over corners."""
    L = heights.shape[1] - 1
    S = snap_t.shape[0]
    arr = np.empty(L + 1, dtype=np.int64)
    pos = np.full(L + 1, -1, dtype=np.int64)
    n_c = 0
    for y in range(x_lo, x_hi + 1):
        nb = heights[0, y - 1]
        if heights[0, y + 1] == nb and (not is_wall or nb >= 1):
            arr[n_c] = y
            pos[y] = n_c
            n_c += 1

    snap_obs = np.zeros((S, 1, N_OBS), dtype=np.float64)
    n_sh = S if want_heights else 0
    snap_heights = np.zeros((n_sh, 1, L + 1), dtype=np.int64)

    base = _mix64(U64(seed) ^ U64(0x5175706572706F73))
    k = U64(0)
    inv32 = 1.0 / 4294967296.0
    t = 0.0
    snap_i = 0
    n_events = 0
    n_flips = 0

    while True:
        if n_c == 0:
            break
        u = _u01(_mix64(base + k * _GOLD))
        k += U64(1)
        t_next = t + (-math.log(u)) / n_c
        while snap_i < S and snap_t[snap_i] < t_next:
            _snapshot_obs(heights, 0, w_sin, w_cos, snap_obs, snap_i)
            if want_heights:
                snap_heights[snap_i] = heights
            snap_i += 1
        if t_next > horizon:
            t = horizon
            break
        t = t_next
        n_events += 1
        v = _mix64(base + k * _GOLD)
        k += U64(1)
        pick = np.int64(((v >> U64(32)) * U64(n_c)) >> U64(32))
        coin = (np.float64(v & U64(0xFFFFFFFF)) + 1.0) * inv32
        y = arr[pick]
        nb = heights[0, y - 1]
        if is_wall and nb == 1:
            thr = lam / (1.0 + lam) if heights[0, y] == 2 else 1.0 / (1.0 + lam)
        else:
            thr = 0.5
        if coin > thr:
            continue
        heights[0, y] = 2 * nb - heights[0, y]
        n_flips += 1
        for yy in range(y - 1, y + 2):
            if yy < x_lo or yy > x_hi:
                continue
            nb2 = heights[0, yy - 1]
            can = heights[0, yy + 1] == nb2 and (not is_wall or nb2 >= 1)
            have = pos[yy] >= 0
            if can and not have:
                arr[n_c] = yy
                pos[yy] = n_c
                n_c += 1
            elif have and not can:
                i = pos[yy]
                last = arr[n_c - 1]
                arr[i] = last
                pos[last] = i
                pos[yy] = -1
                n_c -= 1

    while snap_i < S:
        _snapshot_obs(heights, 0, w_sin, w_cos, snap_obs, snap_i)
        if want_heights:
            snap_heights[snap_i] = heights
        snap_i += 1

    return snap_obs, snap_heights, t, n_events, n_flips


# ---------------------------------------------------------------------------
# Python wrappers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChainSpec:
    """One chain of a coupling: initial heights, pinning strength, wall flag."""

    heights: np.ndarray
    lam: float
    wall: bool = True
    label: str = ""


@dataclass
class BracketSummary:
    """Aggregates of the coupled-pair area process recorded per jump."""

    delta_min: float
    eta: float
    thresholds: np.ndarray
    quadratic_variation_proxy: float
    min_abs_jump: float
    n_jumps: int
    crossing_times: np.ndarray
    crossing_ratios: np.ndarray


@dataclass
class CouplingResult:
    snapshot_times: np.ndarray
    obs: np.ndarray                 # (S, C, 5): N, Phi, PhiBar, H, Q
    snapshot_heights: np.ndarray | None
    taus: dict
    violations: int
    first_violation: tuple | None
    events: np.ndarray | None       # structured: t, chain, x, z, dir, accepted, new_height
    events_truncated: bool
    diagnostics: BracketSummary | None
    final_heights: np.ndarray
    final_time: float
    n_pops: int
    n_flips: int

    def heights_of(self, chain: int) -> np.ndarray:
        return self.final_heights[chain]


_EVENT_DTYPE = np.dtype([("t", np.float64), ("chain", np.int64), ("x", np.int64),
                         ("z", np.int64), ("dir", np.int64), ("accepted", np.int64),
                         ("new_height", np.int64)])


def grand_coupling(chains, horizon, master_seed=None, clocks=None,
                   schedule: CensoringSchedule = EMPTY_SCHEDULE,
                   snapshot_times=(), pairs=(), order_pairs=(),
                   diagnostics=None, collect_events=False, max_events=1_000_000,
                   want_heights=False, stop_when_coalesced=False,
                   m: int = 0, wide_x: bool = False, free_floor: bool = False):
    """Run several chains on one shared clock realization.

    ``chains`` is a list of ChainSpec sharing one L.  ``pairs`` are chain
    index pairs whose first coalescence times to report; ``order_pairs``
    (a, b) are assertions sigma_a <= sigma_b checked at every event time.
    ``diagnostics`` is an optional dict with keys top, ref, w_cos,
    delta_min, thresholds, t_floor, eta.  Deterministic in
    (master_seed/clocks, chains, schedule) regardless of thread count.
    """
    if clocks is None:
        if master_seed is None:
            raise ValueError("pass either master_seed or clocks")
        clocks = ClockRealization(int(master_seed))
    hs = [as_heights(c.heights) for c in chains]
    L = len(hs[0]) - 1
    if any(len(h) - 1 != L for h in hs):
        raise ValueError("all chains must share the same L")
    heights = np.stack(hs).astype(np.int64)
    wall = np.array([c.wall for c in chains], dtype=np.bool_)
    lam = np.array([c.lam for c in chains], dtype=np.float64)
    if np.any(lam < 0):
        raise ValueError("lambda must be >= 0")
    need_free = bool(np.any(~wall))
    lifted = int(heights[:, 0].max())
    x_lo, x_hi, zmin, zmax, z_floor, n_z = site_bounds(
        L, m=m if m else lifted, wide_x=wide_x or lifted > 0,
        free_floor=free_floor or need_free)

    cen_bp, cen_mask = schedule.masks(L, n_z, z_floor)
    snap_t = np.asarray(sorted(snapshot_times), dtype=np.float64)
    if snap_t.size and snap_t[-1] > horizon:
        raise ValueError("snapshot times must lie within the horizon")
    pairs_a = np.array(list(pairs), dtype=np.int64).reshape(-1, 2)
    order_a = np.array(list(order_pairs), dtype=np.int64).reshape(-1, 2)

    x = np.arange(L + 1)
    w_sin = np.sin(np.pi * x / L)
    if diagnostics is not None:
        diag_on = True
        w_cos = np.asarray(diagnostics["w_cos"], dtype=np.float64)
        diag_top = int(diagnostics["top"])
        diag_ref = int(diagnostics["ref"])
        delta_min = float(diagnostics["delta_min"])
        thresholds = np.asarray(diagnostics["thresholds"], dtype=np.float64)
        t_floor = float(diagnostics.get("t_floor", 0.0))
        eta = float(diagnostics.get("eta", np.nan))
    else:
        diag_on = False
        w_cos = np.zeros(L + 1)
        diag_top = diag_ref = 0
        delta_min = 1.0
        thresholds = np.empty(0, dtype=np.float64)
        t_floor = 0.0
        eta = np.nan

    out = _run_coupling(U64(clocks.master_seed), float(horizon),
                        np.int64(x_lo), np.int64(x_hi), zmin, zmax,
                        np.int64(z_floor), np.int64(n_z),
                        heights, wall, lam, cen_bp, cen_mask,
                        snap_t, want_heights, w_sin, w_cos,
                        pairs_a, order_a,
                        diag_on, np.int64(diag_top), np.int64(diag_ref),
                        delta_min, thresholds, t_floor,
                        collect_events, np.int64(max_events), stop_when_coalesced)
    (snap_obs, snap_heights, taus, n_viol, first_viol,
     ev_t, ev_meta, ev_overflow, qv, min_jump, n_jumps,
     cross_t, cross_ratio, t_end, n_pops, n_flips) = out

    events = None
    if collect_events:
        events = np.empty(len(ev_t), dtype=_EVENT_DTYPE)
        events["t"] = ev_t
        for i, name in enumerate(("chain", "x", "z", "dir", "accepted", "new_height")):
            events[name] = ev_meta[:, i]
    diag = None
    if diag_on:
        diag = BracketSummary(delta_min, eta, thresholds, float(qv),
                              float(min_jump), int(n_jumps), cross_t, cross_ratio)
    fv = None
    if n_viol > 0:
        fv = (float(first_viol[0]), int(first_viol[1]), int(first_viol[2]), int(first_viol[3]))
    tau_map = {(int(pairs_a[p, 0]), int(pairs_a[p, 1])): float(taus[p])
               for p in range(pairs_a.shape[0])}
    return CouplingResult(snap_t, snap_obs, snap_heights if want_heights else None,
                          tau_map, int(n_viol), fv, events, bool(ev_overflow),
                          diag, heights, float(t_end), int(n_pops), int(n_flips))


def simulate(initial, params: ModelParams, horizon, clocks=None, master_seed=None,
             schedule: CensoringSchedule = EMPTY_SCHEDULE, snapshot_times=(),
             collect_events=False, max_events=1_000_000, want_heights=True):
    """Single-chain simulation on a clock realization (spec operation).

    Observers are realized as snapshot grids plus the optional per-ring
    decision log; both come back in the CouplingResult.
    """
    spec = ChainSpec(as_heights(initial), params.lam, True)
    return grand_coupling([spec], horizon, master_seed=master_seed, clocks=clocks,
                          schedule=schedule, snapshot_times=snapshot_times,
                          collect_events=collect_events, max_events=max_events,
                          want_heights=want_heights)


def simulate_superposed(initial, lam, horizon, seed, snapshot_times=(),
                        wall=True, want_heights=False, x_lo=None, x_hi=None):
    """Fast single-chain run; equal in law to :func:`simulate`, not pathwise."""
    h = as_heights(initial).copy().reshape(1, -1)
    L = h.shape[1] - 1
    if x_lo is None:
        x_lo = 2 if (wall and h[0, 0] == 0) else 1
    if x_hi is None:
        x_hi = L - 2 if (wall and h[0, 0] == 0) else L - 1
    snap_t = np.asarray(sorted(snapshot_times), dtype=np.float64)
    if snap_t.size and snap_t[-1] > horizon:
        raise ValueError("snapshot times must lie within the horizon")
    x = np.arange(L + 1)
    w_sin = np.sin(np.pi * x / L)
    w_cos = np.zeros(L + 1)
    snap_obs, snap_heights, t_end, n_events, n_flips = _run_single_superposed(
        U64(seed), float(horizon), np.int64(x_lo), np.int64(x_hi), h,
        bool(wall), float(lam), snap_t, bool(want_heights), w_sin, w_cos)
    return CouplingResult(snap_t, snap_obs, snap_heights if want_heights else None,
                          {}, 0, None, None, False, None, h, float(t_end),
                          int(n_events), int(n_flips))


@dataclass(frozen=True)
class CoalescenceSample:
    tau: float
    tau1: float
    tau2: float
    censored: bool


def coalescence_time(master_seed: int, params: ModelParams, horizon: float,
                     schedule: CensoringSchedule = EMPTY_SCHEDULE) -> CoalescenceSample:
    """Coalescence times of {top, bottom, equilibrium} under one realization.

    tau1 = first meeting of the top and equilibrium chains, tau2 of the
    bottom and equilibrium chains, tau of top and bottom; tau equals
    max(tau1, tau2) whenever all three are finite.  Non-coalescence by the
    horizon is reported through the censored flag, never an error.
    """
    rng = np.random.default_rng(derive_seed(master_seed, 0x6D75))
    mu0 = sample_equilibrium(params, rng)
    chains = [ChainSpec(maximal_path(params.L), params.lam, True, "top"),
              ChainSpec(minimal_path(params.L), params.lam, True, "bottom"),
              ChainSpec(mu0, params.lam, True, "mu")]
    res = grand_coupling(chains, horizon, master_seed=master_seed, schedule=schedule,
                         pairs=[(0, 1), (0, 2), (1, 2)], stop_when_coalesced=True)
    tau = res.taus[(0, 1)]
    tau1 = res.taus[(0, 2)]
    tau2 = res.taus[(1, 2)]
    censored = not (np.isfinite(tau) and np.isfinite(tau1) and np.isfinite(tau2))
    return CoalescenceSample(tau, tau1, tau2, censored)
