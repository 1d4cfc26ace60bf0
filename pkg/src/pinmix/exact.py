"""Brute-force and linear-algebra oracles at small L.

Explicit state enumeration, the sparse generator, detailed balance and
stationarity checks, the spectral gap against its closed-form lower bound
1 - cos(pi/L), exact distributions by uniformization (with piecewise
censored generators), exact total-variation curves, the chi-square
contraction bound, and a replay engine that materializes every clock
stream to certify the lazy event engine ring for ring.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .statespace import (ModelParams, as_heights, contacts, encode_path,
                         log_gibbs_weight, maximal_path)
from .dynamics.censoring import CensoringSchedule, EMPTY_SCHEDULE
from .dynamics.clocks import ClockRealization
from .dynamics.engine import ChainSpec, grand_coupling, site_bounds
from .dynamics.moves import apply_ring, flip, rate

ENUMERATION_CAP = 24
DENSE_GAP_CAP = 16
UNIFORMIZATION_TOL = 1e-12


def catalan(n: int) -> int:
    return math.comb(2 * n, n) // (n + 1)


@dataclass
class StateSpaceIndex:
    """All paths of one length in canonical order with an inverse lookup.

    Canonical order is lexicographic in the step sequence with an up step
    sorting before a down step; ``index`` maps the packed step encoding of
    a path to its position.
    """

    L: int
    states: np.ndarray                  # (n_states, L+1) int64
    index: dict = field(repr=False)
    n_contacts: np.ndarray = field(repr=False, default=None)

    @property
    def size(self) -> int:
        return self.states.shape[0]

    def position(self, path) -> int:
        return self.index[encode_path(path)]

    def equilibrium(self, params: ModelParams) -> np.ndarray:
        """The Gibbs probability vector over the enumerated states."""
        if params.lam > 0:
            w = params.lam ** self.n_contacts.astype(np.float64)
        else:
            w = (self.n_contacts == 0).astype(np.float64)
        return w / w.sum()


def enumerate_states(L: int, cap: int = ENUMERATION_CAP) -> StateSpaceIndex:
    """Explicit enumeration of the state space; errors above the cap."""
    if L % 2 != 0 or L < 2:
        raise ValueError("L must be even and >= 2")
    if L > cap:
        est = catalan(L // 2) * (L + 1) * 8 / 1e9
        raise ValueError(
            f"L={L} exceeds the enumeration cap {cap} "
            f"(~{catalan(L // 2):,} states, ~{est:.1f} GB of paths)")
    states = []
    h = np.zeros(L + 1, dtype=np.int64)

    def rec(x):
        if x == L:
            states.append(h.copy())
            return
        # up first: lexicographic step order with +1 < -1
        remaining = L - x - 1
        if h[x] + 1 <= remaining:
            h[x + 1] = h[x] + 1
            rec(x + 1)
        if h[x] - 1 >= 0 and h[x] - 1 <= remaining:
            h[x + 1] = h[x] - 1
            rec(x + 1)

    rec(0)
    arr = np.array(states, dtype=np.int64)
    expected = catalan(L // 2)
    if arr.shape[0] != expected:
        raise AssertionError(f"enumeration produced {arr.shape[0]} states, "
                             f"expected Catalan({L // 2}) = {expected}")
    idx = {encode_path(s): i for i, s in enumerate(arr)}
    ncont = np.array([contacts(s) for s in arr], dtype=np.int64)
    return StateSpaceIndex(L, arr, idx, ncont)


@dataclass
class SparseGenerator:
    """The generator as a CSR matrix over a StateSpaceIndex ordering."""

    params: ModelParams
    index: StateSpaceIndex
    matrix: sp.csr_matrix
    censored: frozenset = frozenset()

    @property
    def max_exit_rate(self) -> float:
        return float(-self.matrix.diagonal().min())


def _move_center(h: np.ndarray, x: int) -> int:
    # plaquette level of the flip at column x: midpoint of old and new height
    return int(h[x - 1])


def build_generator(index: StateSpaceIndex, params: ModelParams,
                    censored_sites=frozenset()) -> SparseGenerator:
    """Assemble the (optionally censored) generator from the jump rates.

    Censoring removes every transition whose plaquette center (x, z) lies
    in ``censored_sites``; identity flips contribute nothing.
    """
    censored = frozenset(tuple(s) for s in censored_sites)
    L = index.L
    rows, cols, vals = [], [], []
    for i in range(index.size):
        h = index.states[i]
        out = 0.0
        for x in range(1, L):
            r = rate(h, x, params)
            if r <= 0.0:
                continue
            if censored and (x, _move_center(h, x)) in censored:
                continue
            j = index.index[encode_path(flip(h, x))]
            rows.append(i)
            cols.append(j)
            vals.append(r)
            out += r
        rows.append(i)
        cols.append(i)
        vals.append(-out)
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(index.size, index.size))
    return SparseGenerator(params, index, mat, censored)


def detailed_balance_errors(gen: SparseGenerator) -> float:
    """max |mu_i q_ij - mu_j q_ji| over all off-diagonal pairs."""
    mu = gen.index.equilibrium(gen.params)
    q = gen.matrix.tocoo()
    err = 0.0
    m = gen.matrix
    for i, j, v in zip(q.row, q.col, q.data):
        if i == j:
            continue
        err = max(err, abs(mu[i] * v - mu[j] * m[j, i]))
    return err


def stationarity_error(gen: SparseGenerator) -> float:
    """max |mu^T L| entry; zero at stationarity."""
    mu = gen.index.equilibrium(gen.params)
    return float(np.max(np.abs(mu @ gen.matrix)))


def spectral_gap(gen: SparseGenerator, dense_cap: int = DENSE_GAP_CAP) -> float:
    """Smallest nonzero eigenvalue of -L on the mu-symmetrized matrix.

    Symmetrizing with D^{1/2} L D^{-1/2}, D = diag(mu), keeps the spectrum
    real; dense solve below the cap, Lanczos above.  Raises if the result
    undercuts the closed-form bound 1 - cos(pi/L).
    """
    mu = gen.index.equilibrium(gen.params)
    d = np.sqrt(mu)
    n = gen.index.size
    if n == 1:
        return math.inf
    sym = sp.diags(d) @ gen.matrix @ sp.diags(1.0 / d)
    if gen.index.L <= dense_cap:
        w = np.linalg.eigvalsh(0.5 * (sym.toarray() + sym.toarray().T))
        gap = float(-w[-2])
    else:
        sym = 0.5 * (sym + sym.T)
        w = spla.eigsh(sym, k=2, which="LA", return_eigenvectors=False,
                       maxiter=50_000, tol=0)
        gap = float(-np.sort(w)[0])
    kappa = gen.params.kappa
    if gap < kappa - 1e-9:
        raise AssertionError(
            f"spectral gap {gap!r} below its lower bound kappa={kappa!r} "
            f"at L={gen.index.L}, lambda={gen.params.lam}")
    return gap


def _uniformized_step(gen: SparseGenerator, v: np.ndarray, t: float,
                      tol: float) -> np.ndarray:
    """v^T exp(tL) by uniformization with a truncated Poisson mixture."""
    if t == 0.0:
        return v.copy()
    lam_u = gen.max_exit_rate + 1.0
    p_mat = (sp.identity(gen.index.size, format="csr") + gen.matrix / lam_u).T.tocsr()
    a = lam_u * t
    # Poisson weights accumulated in a numerically safe forward recursion
    out = np.zeros_like(v)
    term = v.copy()
    log_w = -a
    w = math.exp(log_w) if log_w > -700 else 0.0
    acc = w
    out += w * term
    k = 0
    kmax = int(a + 60.0 * math.sqrt(a + 1.0) + 60.0)
    while acc < 1.0 - tol and k < kmax:
        k += 1
        term = p_mat @ term
        if w > 0.0:
            w *= a / k
        else:
            log_w += math.log(a / k)
            if log_w > -700:
                w = math.exp(log_w)
        acc += w
        if w > 0.0:
            out += w * term
    out += (1.0 - acc) * term
    return out


def exact_distribution(initial, t: float, gen: SparseGenerator,
                       schedule: CensoringSchedule | None = None,
                       tol: float = UNIFORMIZATION_TOL,
                       censored_gens: dict | None = None) -> np.ndarray:
    """Distribution at time t from a path or a distribution vector.

    With a censoring schedule the piecewise-constant generators are
    applied in order; ``censored_gens`` may carry prebuilt generators
    keyed by censored set to avoid rebuilding per call.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if isinstance(initial, np.ndarray) and initial.ndim == 1 and \
            initial.shape[0] == gen.index.size and initial.dtype != np.int64:
        v = initial.astype(np.float64).copy()
    else:
        v = np.zeros(gen.index.size)
        v[gen.index.position(as_heights(initial))] = 1.0
    if schedule is None:
        return _uniformized_step(gen, v, t, tol)
    bps = list(schedule.breakpoints) + [math.inf]
    for i, cs in enumerate(schedule.censored_sets):
        lo, hi = bps[i], min(bps[i + 1], t)
        if hi <= lo:
            continue
        if cs:
            if censored_gens is not None and cs in censored_gens:
                g = censored_gens[cs]
            else:
                g = build_generator(gen.index, gen.params, cs)
                if censored_gens is not None:
                    censored_gens[cs] = g
        else:
            g = gen
        v = _uniformized_step(g, v, hi - lo, tol)
        if hi >= t:
            break
    return v


def tv_distance(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(p - q).sum())


def exact_tv_curve(initial, times, gen: SparseGenerator,
                   schedule: CensoringSchedule | None = None,
                   tol: float = UNIFORMIZATION_TOL) -> np.ndarray:
    """d(t) = TV(P_t^initial, mu) on a sorted time grid.

    Evolves incrementally between grid points (uncensored case) or from
    scratch per point when a schedule is present.
    """
    times = np.asarray(sorted(times), dtype=np.float64)
    mu = gen.index.equilibrium(gen.params)
    out = np.empty(len(times))
    if schedule is None or all(len(cs) == 0 for cs in schedule.censored_sets):
        v = None
        t_prev = 0.0
        for i, t in enumerate(times):
            if v is None:
                v = exact_distribution(initial, t, gen, tol=tol)
            else:
                v = _uniformized_step(gen, v, t - t_prev, tol)
            t_prev = t
            out[i] = tv_distance(v, mu)
        return out
    cache: dict = {}
    for i, t in enumerate(times):
        v = exact_distribution(initial, t, gen, schedule, tol, censored_gens=cache)
        out[i] = tv_distance(v, mu)
    return out


def worst_initial_tv(t: float, gen: SparseGenerator) -> tuple:
    """max over initial states of TV(P_t, mu) and the attaining state index."""
    mu = gen.index.equilibrium(gen.params)
    best, arg = -1.0, -1
    for i in range(gen.index.size):
        v = np.zeros(gen.index.size)
        v[i] = 1.0
        d = tv_distance(_uniformized_step(gen, v, t, UNIFORMIZATION_TOL), mu)
        if d > best:
            best, arg = d, i
    return best, arg


def chi_square_bound(nu: np.ndarray, t: float, gen: SparseGenerator,
                     gap: float | None = None) -> float:
    """Contraction bound: TV(nu P_t, mu) <= (1/2) e^{-t gap} sqrt(Var_mu(rho)).

    ``nu`` is a probability vector on the enumerated states; rho = dnu/dmu.
    Raises when nu puts mass where mu has none (rho undefined).
    """
    mu = gen.index.equilibrium(gen.params)
    nu = np.asarray(nu, dtype=np.float64)
    if nu.shape != mu.shape or abs(nu.sum() - 1.0) > 1e-9 or np.any(nu < -1e-15):
        raise ValueError("nu must be a probability vector on the state space")
    if np.any((mu == 0.0) & (nu > 0.0)):
        raise ValueError("nu is not absolutely continuous with respect to mu")
    if gap is None:
        gap = spectral_gap(gen)
    rho = np.divide(nu, mu, out=np.zeros_like(nu), where=mu > 0)
    var = float(mu @ rho ** 2 - 1.0)
    return 0.5 * math.exp(-t * gap) * math.sqrt(max(var, 0.0))


def lifted_flat_distribution(index: StateSpaceIndex) -> np.ndarray:
    """The lambda = 0 equilibrium (uniform on the contact-free sector)."""
    w = (index.n_contacts == 0).astype(np.float64)
    return w / w.sum()


# ---------------------------------------------------------------------------
# Dual-engine certification
# ---------------------------------------------------------------------------

def brute_force_replay(chains, horizon: float, master_seed: int,
                       schedule: CensoringSchedule = EMPTY_SCHEDULE):
    """Materialize every clock stream and replay all rings in time order.

    Returns the accepted transitions [(t, chain, x, new_height), ...] and
    the final heights.  Uses the same counter-based stream functions as
    the event engine, so agreement is expected bit for bit.
    """
    hs = [as_heights(c.heights).copy() for c in chains]
    L = len(hs[0]) - 1
    lifted = max(int(h[0]) for h in hs)
    need_free = any(not c.wall for c in chains)
    x_lo, x_hi, zmin, zmax, z_floor, n_z = site_bounds(
        L, m=lifted, wide_x=lifted > 0, free_floor=need_free)
    clocks = ClockRealization(master_seed)
    rings = []
    for x in range(x_lo, x_hi + 1):
        for z in range(int(zmin[x]), int(zmax[x]) + 1):
            if (x + z) % 2 != 1:
                continue
            for d in (0, 1):
                ts, cs = clocks.rings_upto(x, z, d, horizon)
                sid = (x * n_z + (z - z_floor)) * 2 + d
                for t, cn in zip(ts, cs):
                    rings.append((float(t), sid, x, z, d, float(cn)))
    rings.sort(key=lambda r: (r[0], r[1]))
    accepted = []
    for (t, sid, x, z, d, cn) in rings:
        if (x, z) in schedule.censored_at(t):
            continue
        for ci, spec in enumerate(chains):
            h2 = apply_ring(hs[ci], x, z, d, cn, spec.lam, wall=spec.wall)
            if h2 is not hs[ci]:
                hs[ci] = h2
                accepted.append((t, ci, x, int(h2[x])))
    return accepted, hs


def brute_force_coupling_check(master_seed: int, params: ModelParams,
                               horizon: float,
                               schedule: CensoringSchedule = EMPTY_SCHEDULE,
                               chains=None) -> dict:
    """Certify the lazy engine against the materialized-stream replay.

    Compares the accepted transition sequences and final states bit for
    bit; any divergence comes back in the report (a test failure upstream,
    not a runtime error here).
    """
    from .statespace import minimal_path
    if chains is None:
        chains = [ChainSpec(maximal_path(params.L), params.lam, True),
                  ChainSpec(as_heights(minimal_path(params.L)), params.lam, True)]
    ref_events, ref_final = brute_force_replay(chains, horizon, master_seed, schedule)
    res = grand_coupling(chains, horizon, master_seed=master_seed, schedule=schedule,
                         collect_events=True, max_events=20_000_000)
    acc = res.events[res.events["accepted"] == 1]
    report = {"identical": True, "n_events": len(ref_events),
              "first_divergence": None}
    if res.events_truncated:
        report["identical"] = False
        report["first_divergence"] = "event log truncated"
        return report
    if len(acc) != len(ref_events):
        report["identical"] = False
        report["first_divergence"] = (f"event count {len(acc)} (lazy) vs "
                                      f"{len(ref_events)} (brute force)")
        return report
    for i, (t, ci, x, nh) in enumerate(ref_events):
        if (acc["t"][i] != t or acc["chain"][i] != ci or acc["x"][i] != x
                or acc["new_height"][i] != nh):
            report["identical"] = False
            report["first_divergence"] = {
                "i": i, "brute": (t, ci, x, nh),
                "lazy": (float(acc["t"][i]), int(acc["chain"][i]),
                         int(acc["x"][i]), int(acc["new_height"][i]))}
            return report
    for ci in range(len(chains)):
        if not np.array_equal(ref_final[ci], res.final_heights[ci]):
            report["identical"] = False
            report["first_divergence"] = f"final state of chain {ci} differs"
            return report
    return report


def exact_report(L: int, lam: float, times=None, censor: bool = False,
                 window: float | None = None, cap: int = ENUMERATION_CAP) -> dict:
    """The machine-readable small-instance report (gap, kappa, TV curves)."""
    from .dynamics.censoring import contact_window_schedule
    params = ModelParams(L, lam)
    index = enumerate_states(L, cap)
    gen = build_generator(index, params)
    gap = spectral_gap(gen)
    if times is None:
        scale = L * L * math.log(max(L, 3)) / math.pi ** 2
        times = np.linspace(0.0, 1.5 * scale, 20)
    times = np.asarray(sorted(times), dtype=np.float64)
    top = maximal_path(L)
    tv = exact_tv_curve(top, times, gen)
    report = {
        "L": L, "lambda": lam, "gap": gap, "kappa": params.kappa,
        "n_states": index.size,
        "tv_curve": [(float(t), float(d)) for t, d in zip(times, tv)],
    }
    nu0 = lifted_flat_distribution(index)
    if lam > 0:
        bound = [float(chi_square_bound(nu0, t, gen, gap)) for t in times]
        report["chi2_bound_curve"] = list(zip(map(float, times), bound))
    if censor:
        if window is None:
            window = 0.75 * float(times[-1])
        sched = contact_window_schedule(L, window)
        tv_c = exact_tv_curve(top, times, gen, sched)
        report["censored_tv_curve"] = [(float(t), float(d)) for t, d in zip(times, tv_c)]
        report["censoring_inequality_ok"] = bool(np.all(tv_c >= tv - 1e-10))
        report["censor_window"] = float(window)
    return report
