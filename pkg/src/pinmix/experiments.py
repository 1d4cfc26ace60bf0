"""Desk-scale mixing experiments: coalescence farms, TV bounds, cutoff sweeps,
censoring protocols, and the no-wall comparison runs.

All randomness derives from (master_seed, replica_id), so every experiment
is a pure function of its config regardless of scheduling; replicas run
on a worker pool when threads > 1.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict, replace

import numpy as np

from . import sep
from .dynamics.censoring import contact_window_schedule
from .dynamics.clocks import derive_seed
from .dynamics.engine import (ChainSpec, CoalescenceSample, coalescence_time,
                              grand_coupling, simulate_superposed)
from .observables import default_beta, default_eta, sine_weights
from .statespace import (EquilibriumSampler, ModelParams, maximal_path,
                         minimal_path, sample_equilibrium)

RESULT_COLUMNS = {
    "tau_samples.csv": ["L", "lambda", "replica", "tau", "tau1", "tau2", "censored_flag"],
    "mixing_curve.csv": ["L", "lambda", "t", "d_upper", "d_upper_ci", "d_lower", "d_lower_ci"],
    "cutoff_table.csv": ["L", "lambda", "eps", "t_hat_upper", "t_hat_lower",
                         "normalized_location", "cutoff_ratio"],
}


def mixing_scale(L: int) -> float:
    """The cutoff location scale L^2 log L / pi^2."""
    return L * L * math.log(L) / math.pi ** 2


def t_delta(L: int, delta: float) -> float:
    """(1 + delta) L^2 log L / pi^2."""
    return (1.0 + delta) * mixing_scale(L)


def resolve_threads(threads: int = 0) -> int:
    if threads > 0:
        return threads
    env = os.environ.get("PINMIX_THREADS", "")
    if env.strip():
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class ExperimentConfig:
    """Sweep parameters; every field has a reproducible default."""

    L_values: tuple = (32,)
    lambdas: tuple = (1.0,)
    replicas: int = 100
    master_seed: int = 1
    horizon: float = 0.0            # absolute horizon; 0 means use the multiple
    horizon_multiple: float = 2.0   # x t_delta(delta=1)
    grid_points: int = 20
    grid_max_multiple: float = 1.5  # grid spans (0, this] x mixing_scale
    epsilon: float = 0.25
    delta: float = 0.1
    beta: float = 0.0               # 0 means default_beta(delta)
    eta: float = 0.0                # 0 means default_eta(delta)
    M: int = 16
    s0_factor: float = 10.0
    n_eq_samples: int = 4000
    n_thresholds: int = 64
    threads: int = 0
    out_dir: str = "."

    def __post_init__(self):
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")
        if not (0.0 < self.epsilon < 1.0):
            raise ValueError("epsilon must lie in (0, 1)")
        if any(L % 2 or L < 2 for L in self.L_values):
            raise ValueError("every L must be even and >= 2")

    def horizon_for(self, L: int) -> float:
        if self.horizon > 0:
            return self.horizon
        return self.horizon_multiple * t_delta(L, 1.0)

    def grid_for(self, L: int) -> np.ndarray:
        u = mixing_scale(L)
        return np.linspace(u * self.grid_max_multiple / self.grid_points,
                           u * self.grid_max_multiple, self.grid_points)

    def beta_value(self) -> float:
        return self.beta if self.beta > 0 else default_beta(self.delta)

    def eta_value(self) -> float:
        return self.eta if self.eta > 0 else default_eta(self.delta)


_CONFIG_FIELDS = {f: t for f, t in [
    ("L_values", "int_list"), ("lambdas", "float_list"), ("replicas", "int"),
    ("master_seed", "int"), ("horizon", "float"), ("horizon_multiple", "float"),
    ("grid_points", "int"), ("grid_max_multiple", "float"), ("epsilon", "float"),
    ("delta", "float"), ("beta", "float"), ("eta", "float"), ("M", "int"),
    ("s0_factor", "float"), ("n_eq_samples", "int"), ("n_thresholds", "int"),
    ("threads", "int"), ("out_dir", "str"),
]}
_CONFIG_ALIASES = {"L": "L_values", "lambda": "lambdas", "seed": "master_seed"}


class ConfigError(ValueError):
    pass


def parse_config(text: str) -> ExperimentConfig:
    """Parse the flat key = value sweep format (lists are comma-separated).

    Unknown keys, bad types, or malformed lines raise ConfigError with the
    offending line number and field.
    """
    values = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        key = _CONFIG_ALIASES.get(key, key)
        val = val.strip()
        if key not in _CONFIG_FIELDS:
            raise ConfigError(f"line {ln}: unknown field {key!r}")
        kind = _CONFIG_FIELDS[key]
        try:
            if kind == "int":
                values[key] = int(val)
            elif kind == "float":
                values[key] = float(val)
            elif kind == "int_list":
                values[key] = tuple(int(v) for v in val.split(",") if v.strip())
            elif kind == "float_list":
                values[key] = tuple(float(v) for v in val.split(",") if v.strip())
            else:
                values[key] = val
        except ValueError as exc:
            raise ConfigError(f"line {ln}: field {key!r}: {exc}") from None
    try:
        return ExperimentConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())


# ---------------------------------------------------------------------------
# Replica farm
# ---------------------------------------------------------------------------

def _tau_replica(args):
    L, lam, horizon, seed = args
    s = coalescence_time(seed, ModelParams(L, lam), horizon)
    return s.tau, s.tau1, s.tau2, s.censored


def _phi_replica(args):
    L, lam, seed, grid = args
    res = simulate_superposed(maximal_path(L), lam, float(grid[-1]), seed,
                              snapshot_times=grid)
    return res.obs[:, 0, 1]  # Phi at each grid time


def _vee_replica(args):
    L, lam, s0, seed = args
    res = simulate_superposed(minimal_path(L), lam, s0, seed, want_heights=False)
    return res.final_heights[0]


def farm(fn, jobs, threads: int):
    """Ordered map over replica jobs; a process pool when threads > 1."""
    if threads <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * threads))))


@dataclass
class TauSamples:
    L: int
    lam: float
    horizon: float
    tau: np.ndarray
    tau1: np.ndarray
    tau2: np.ndarray
    censored: np.ndarray

    @property
    def n(self) -> int:
        return len(self.tau)

    def quantile(self, q) -> float:
        return float(np.quantile(np.where(self.censored, np.inf, self.tau), q))

    def fraction_below(self, t: float) -> float:
        return float(np.mean(~self.censored & (self.tau <= t)))


def estimate_tau_distribution(L: int, lam: float, replicas: int, master_seed: int,
                              horizon: float | None = None, delta: float = 0.1,
                              threads: int = 1) -> TauSamples:
    """Replica farm of three-chain couplings; never drops censored replicas."""
    if horizon is None:
        horizon = 2.0 * t_delta(L, 1.0)
    jobs = [(L, lam, horizon, derive_seed(master_seed, r)) for r in range(replicas)]
    rows = farm(_tau_replica, jobs, threads)
    tau = np.array([r[0] for r in rows])
    tau1 = np.array([r[1] for r in rows])
    tau2 = np.array([r[2] for r in rows])
    cen = np.array([r[3] for r in rows], dtype=bool)
    return TauSamples(L, lam, horizon, tau, tau1, tau2, cen)


def wilson_interval(k: int, n: int, z: float = 1.959963984540054):
    """Wilson score interval for a binomial proportion."""
    if n == 0:
        return 0.0, 1.0
    p = k / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (p + z2 / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


@dataclass
class TvCurve:
    times: np.ndarray
    d: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    meta: dict = field(default_factory=dict)


def tv_upper_curve(samples: TauSamples, times) -> TvCurve:
    """Empirical survival of tau with Wilson bands: d(t) <= P[tau > t]."""
    times = np.asarray(sorted(times), dtype=np.float64)
    d = np.empty(len(times))
    lo = np.empty(len(times))
    hi = np.empty(len(times))
    eff_tau = np.where(samples.censored, np.inf, samples.tau)
    for i, t in enumerate(times):
        k = int(np.sum(eff_tau > t))
        d[i] = k / samples.n
        lo[i], hi[i] = wilson_interval(k, samples.n)
    return TvCurve(times, d, lo, hi, {"kind": "upper", "L": samples.L,
                                      "lambda": samples.lam})


def equilibrium_phi_samples(L: int, lam: float, n: int, master_seed: int) -> np.ndarray:
    """Phi evaluated on exact equilibrium draws."""
    params = ModelParams(L, lam)
    sampler = EquilibriumSampler(params)
    rng = np.random.default_rng(derive_seed(master_seed, 0xEA))
    w = sine_weights(L)
    out = np.empty(n)
    for i in range(n):
        h = sampler.sample(rng)
        out[i] = float(np.dot(h[1:L], w[1:L]))
    return out


def tv_lower_curve(L: int, lam: float, replicas: int, master_seed: int, times,
                   n_eq: int = 4000, n_thresholds: int = 64,
                   threads: int = 1, phi_top=None, phi_eq=None) -> TvCurve:
    """Distinguishing-statistic lower bound on TV from the top path.

    d_lower(t) = max over thresholds c of |P_hat(Phi(top chain at t) > c)
    - mu_hat(Phi > c)|, thresholds taken as pooled quantiles; the
    optimizing c / L^{3/2} is reported per grid time.  Because the
    statistic is a maximum over nested threshold events, its 95% band is
    the two-sample Kolmogorov band 1.358 sqrt(1/n + 1/m), which covers
    the selection effect; a pointwise binomial interval at the optimizing
    threshold would not.
    """
    times = np.asarray(sorted(times), dtype=np.float64)
    if phi_top is None:
        jobs = [(L, lam, derive_seed(master_seed, 0x70000 + r), times)
                for r in range(replicas)]
        phi_top = np.stack(farm(_phi_replica, jobs, threads))   # (R, T)
    if phi_eq is None:
        phi_eq = equilibrium_phi_samples(L, lam, n_eq, master_seed)
    n_sim = phi_top.shape[0]
    m_eq = len(phi_eq)
    half = 1.358 * math.sqrt(1.0 / n_sim + 1.0 / m_eq)
    d = np.empty(len(times))
    copt = np.empty(len(times))
    for i in range(len(times)):
        sim = phi_top[:, i]
        pooled = np.concatenate([sim, phi_eq])
        cs = np.quantile(pooled, np.linspace(0.0, 1.0, n_thresholds + 2)[1:-1])
        p = np.mean(sim[None, :] > cs[:, None], axis=1)
        q = np.mean(phi_eq[None, :] > cs[:, None], axis=1)
        gap = np.abs(p - q)
        j = int(np.argmax(gap))
        d[i] = float(gap[j])
        copt[i] = float(cs[j]) / L ** 1.5
    return TvCurve(times, d, np.maximum(d - half, 0.0), np.minimum(d + half, 1.0),
                   {"kind": "lower", "L": L, "lambda": lam, "band": half,
                    "optimizing_c_over_L32": copt})


def crossing_time(times: np.ndarray, values: np.ndarray, eps: float,
                  direction: str) -> float:
    """Grid crossing time of a monotone-in-spirit curve.

    direction='below': first grid time with value < eps (upper estimates);
    direction='above': last grid time with value > eps (lower estimates).
    Returns nan when the curve never crosses on the grid.
    """
    if direction == "below":
        idx = np.nonzero(values < eps)[0]
        return float(times[idx[0]]) if len(idx) else math.nan
    idx = np.nonzero(values > eps)[0]
    return float(times[idx[-1]]) if len(idx) else math.nan


def bootstrap_crossing_ci(samples: TauSamples, times, eps: float,
                          n_boot: int = 1000, master_seed: int = 0) -> tuple:
    """Percentile bootstrap CI (2.5%, 97.5%) for the upper crossing time."""
    rng = np.random.default_rng(derive_seed(master_seed, 0xB007))
    times = np.asarray(times)
    eff = np.where(samples.censored, np.inf, samples.tau)
    vals = []
    for _ in range(n_boot):
        res = rng.choice(eff, size=len(eff), replace=True)
        surv = np.array([np.mean(res > t) for t in times])
        vals.append(crossing_time(times, surv, eps, "below"))
    vals = np.array(vals)
    ok = ~np.isnan(vals)
    if not np.any(ok):
        return math.nan, math.nan
    return (float(np.nanquantile(vals[ok], 0.025)),
            float(np.nanquantile(vals[ok], 0.975)))


@dataclass
class CutoffRow:
    L: int
    lam: float
    eps: float
    t_hat_upper: float
    t_hat_lower: float
    normalized_location: float
    cutoff_ratio: float
    t_hat_upper_ci: tuple = (math.nan, math.nan)


def cutoff_sweep(config: ExperimentConfig, epsilons=(0.25, 0.75),
                 keep_curves: bool = False) -> dict:
    """Mixing-time point estimates and normalized locations per (L, lambda).

    For each pair: t_hat_upper(eps) = first grid time with d_upper < eps,
    t_hat_lower(eps) = last grid time with d_lower > eps, the location
    pi^2 t_hat / (L^2 log L), and the ratio t_hat(eps) / t_hat(1 - eps).
    A lambda = 0 sweep reduces to lambda = 1 at L - 2 by the contact-free
    identification, so the same machinery serves both.
    """
    threads = resolve_threads(config.threads)
    rows = []
    curves = []
    tau_tables = []
    for L in config.L_values:
        grid = config.grid_for(L)
        for lam in config.lambdas:
            sim_L, sim_lam = (L - 2, 1.0) if lam == 0.0 else (L, lam)
            samples = estimate_tau_distribution(
                sim_L, sim_lam, config.replicas, derive_seed(config.master_seed, L * 131 + 7),
                horizon=config.horizon_for(L), delta=config.delta, threads=threads)
            upper = tv_upper_curve(samples, grid)
            lower = tv_lower_curve(sim_L, sim_lam, config.replicas,
                                   derive_seed(config.master_seed, L * 131 + 8),
                                   grid, n_eq=config.n_eq_samples,
                                   n_thresholds=config.n_thresholds, threads=threads)
            tau_tables.append(samples)
            if keep_curves:
                curves.append((L, lam, upper, lower))
            for eps in epsilons:
                t_up = crossing_time(grid, upper.d, eps, "below")
                t_lo = crossing_time(grid, lower.d, eps, "above")
                t_up_hi = crossing_time(grid, upper.d, 1.0 - eps, "below")
                ratio = t_up / t_up_hi if (not math.isnan(t_up) and t_up_hi) else math.nan
                ci = bootstrap_crossing_ci(samples, grid, eps,
                                           master_seed=config.master_seed)
                rows.append(CutoffRow(L, lam, eps, t_up, t_lo,
                                      math.pi ** 2 * t_up / (L * L * math.log(L))
                                      if not math.isnan(t_up) else math.nan,
                                      ratio, ci))
    out = {"rows": rows, "tau_samples": tau_tables}
    if keep_curves:
        out["curves"] = curves
    return out


# ---------------------------------------------------------------------------
# lambda in (1, 2) protocols
# ---------------------------------------------------------------------------

def censored_wedge_protocol(L: int, lam: float, master_seed: int,
                            delta: float = 0.1, replicas: int = 20,
                            horizon: float | None = None, grid=None,
                            threads: int = 1) -> dict:
    """Top-path dynamics with all contact-changing updates censored on a window.

    Runs censored and uncensored chains on the same clock realization per
    replica, verifies the censored chain keeps its contact count frozen on
    the window (exactly, via the event log), and returns the Phi-trajectory
    summaries of both.  The exact-TV censoring comparison lives in the
    exact module; this is the sampling side.
    """
    if not (1.0 < lam < 2.0):
        raise ValueError("the protocol is defined for lambda in (1, 2)")
    window = t_delta(L, delta / 2.0)
    if horizon is None:
        horizon = t_delta(L, delta)
    if grid is None:
        grid = np.linspace(horizon / 20.0, horizon, 20)
    sched = contact_window_schedule(L, window)
    top = maximal_path(L)
    phi_c = np.empty((replicas, len(grid)))
    phi_u = np.empty((replicas, len(grid)))
    n_bad = 0
    for r in range(replicas):
        seed = derive_seed(master_seed, 0xC0 + r)
        cen = grand_coupling([ChainSpec(top, lam, True)], horizon, master_seed=seed,
                             schedule=sched, snapshot_times=grid,
                             collect_events=True, max_events=5_000_000)
        unc = grand_coupling([ChainSpec(top, lam, True)], horizon, master_seed=seed,
                             snapshot_times=grid)
        phi_c[r] = cen.obs[:, 0, 1]
        phi_u[r] = unc.obs[:, 0, 1]
        acc = cen.events[cen.events["accepted"] == 1]
        in_window = acc[acc["t"] < window]
        n_bad += int(np.sum(in_window["z"] == 1))
    return {
        "L": L, "lambda": lam, "window": float(window), "grid": np.asarray(grid),
        "g_sites": sorted(contact_window_schedule(L, window).censored_sets[0]),
        "contact_changing_events_in_window": n_bad,
        "phi_censored": phi_c, "phi_uncensored": phi_u,
    }


def vee_boundary_contact_check(L: int, lam: float, master_seed: int,
                               M: int = 16, s0_factor: float = 10.0,
                               replicas: int = 100, threads: int = 1) -> dict:
    """Bottom-path chains run to s0 = s0_factor * L^{16/9} log L.

    Reports the empirical contact profile x -> P_hat[sigma_{s0}(x) = 0]
    and, for each M' in a nested set, the fraction of replicas inside
    E_{L, M'} = {xi_x >= 1 for all x in [M', L - M']}.
    """
    if not (1.0 < lam < 2.0):
        raise ValueError("the protocol is defined for lambda in (1, 2)")
    s0 = s0_factor * L ** (16.0 / 9.0) * math.log(L)
    jobs = [(L, lam, s0, derive_seed(master_seed, 0x7EE + r)) for r in range(replicas)]
    finals = np.stack(farm(_vee_replica, jobs, threads))
    zero = finals == 0
    profile = zero.mean(axis=0)
    ms = sorted({M, max(2, M // 2), min(L // 2, 2 * M), L // 2})
    fractions = {}
    for mprime in ms:
        inside = np.all(finals[:, mprime:L - mprime + 1] >= 1, axis=1)
        k = int(inside.sum())
        lo, hi = wilson_interval(k, replicas)
        fractions[mprime] = (k / replicas, lo, hi)
    return {
        "L": L, "lambda": lam, "s0": float(s0), "M": M,
        "profile": profile, "fractions": fractions, "finals": finals,
    }


# ---------------------------------------------------------------------------
# Persistence: CSV results and the run manifest
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def write_csv(path: str, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def tau_samples_rows(tables):
    for s in tables:
        for r in range(s.n):
            yield (s.L, s.lam, r, s.tau[r], s.tau1[r], s.tau2[r],
                   int(s.censored[r]))


def mixing_curve_rows(curves):
    for (L, lam, upper, lower) in curves:
        for i, t in enumerate(upper.times):
            yield (L, lam, t, upper.d[i], upper.ci_hi[i] - upper.d[i],
                   lower.d[i], lower.d[i] - lower.ci_lo[i])


def cutoff_rows(rows):
    for r in rows:
        yield (r.L, r.lam, r.eps, r.t_hat_upper, r.t_hat_lower,
               r.normalized_location, r.cutoff_ratio)


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: str, config: ExperimentConfig, files,
                   started: float, extra=None, complete: bool = True) -> str:
    """Run manifest with config snapshot and digests, written atomically last."""
    from . import __version__
    manifest = {
        "config": asdict(config),
        "master_seed": config.master_seed,
        "artifact_version": __version__,
        "started_unix": started,
        "finished_unix": time.time(),
        "complete": complete,
        "outside_repulsive_phase": bool(any(l >= 2.0 for l in config.lambdas)),
        "outputs": [{"file": os.path.basename(f), "sha256": sha256_file(f)}
                    for f in files],
    }
    if extra:
        manifest.update(extra)
    path = os.path.join(out_dir, "manifest.json")
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    os.replace(tmp, path)
    return path


def run_mixing_experiment(config: ExperimentConfig) -> dict:
    """The full sweep behind the mix entry point: farms, curves, tables, files."""
    started = time.time()
    os.makedirs(config.out_dir, exist_ok=True)
    complete = True
    files = []
    try:
        result = cutoff_sweep(config, epsilons=(config.epsilon, 1.0 - config.epsilon),
                              keep_curves=True)
    except KeyboardInterrupt:
        complete = False
        result = {"rows": [], "tau_samples": [], "curves": []}
    tau_path = os.path.join(config.out_dir, "tau_samples.csv")
    write_csv(tau_path, RESULT_COLUMNS["tau_samples.csv"],
              tau_samples_rows(result["tau_samples"]))
    files.append(tau_path)
    mix_path = os.path.join(config.out_dir, "mixing_curve.csv")
    write_csv(mix_path, RESULT_COLUMNS["mixing_curve.csv"],
              mixing_curve_rows(result.get("curves", [])))
    files.append(mix_path)
    cut_path = os.path.join(config.out_dir, "cutoff_table.csv")
    write_csv(cut_path, RESULT_COLUMNS["cutoff_table.csv"],
              cutoff_rows(result["rows"]))
    files.append(cut_path)
    manifest = write_manifest(config.out_dir, config, files, started,
                              complete=complete)
    result["files"] = files + [manifest]
    result["complete"] = complete
    return result


# Appendix-level operations re-exported where the experiment suite lives
sep_dynamics = sep.sep_dynamics
sample_uniform_bridge = sep.sample_uniform_bridge
bridge_min_tail_exact = sep.bridge_min_tail_exact
sandwich_check = sep.sandwich_check
lift_height = sep.lift_height
