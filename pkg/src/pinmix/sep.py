"""No-wall comparison dynamics: corner flips on free bridges pinned at height m.

Every corner flips at rate 1/2 regardless of level, the uniform measure on
bridges is invariant, and the system couples monotonically with the
wall-constrained chain lifted by m.  Used to bound the height of the
pinned dynamics: the lifted chain dominates the free chain started from
the same path, which dominates the stationary free chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .statespace import maximal_path, validate_heights
from .dynamics.engine import ChainSpec, grand_coupling, simulate_superposed


def lift_height(L: int) -> int:
    """The standard lift m = 2 ceil(sqrt(L) (log L)^2 / 2); always even."""
    return 2 * math.ceil(math.sqrt(L) * math.log(L) ** 2 / 2.0)


@dataclass(frozen=True)
class SepState:
    """A free bridge: heights of length L+1 with both endpoints at m."""

    heights: np.ndarray
    m: int

    def __post_init__(self):
        h = np.asarray(self.heights, dtype=np.int64)
        h.setflags(write=False)
        object.__setattr__(self, "heights", h)
        validate_heights(h, wall=False, endpoint=self.m)


def lifted_top(L: int, m: int) -> np.ndarray:
    return maximal_path(L) + m


def sample_uniform_bridge(L: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform bridge from (0, m) to (L, m): shuffle L/2 up and L/2 down steps."""
    if L % 2 != 0 or L < 2:
        raise ValueError("L must be even and >= 2")
    steps = np.concatenate([np.ones(L // 2, dtype=np.int64),
                            -np.ones(L // 2, dtype=np.int64)])
    rng.shuffle(steps)
    h = np.empty(L + 1, dtype=np.int64)
    h[0] = m
    np.cumsum(steps, out=h[1:])
    h[1:] += m
    return h


def bridge_min_tail_exact(L: int, m: int) -> float:
    """P[min_x zeta_x <= 0] for a uniform bridge pinned at height m.

    Reflection principle: bridges from m to m that touch level 0 biject
    with paths from m to -m, so the probability is C(L, L/2 - m) / C(L, L/2);
    1 for m <= 0 and 0 for m > L/2.  Exact rational arithmetic, returned
    as a float.
    """
    if L % 2 != 0 or L < 2:
        raise ValueError("L must be even and >= 2")
    if m <= 0:
        return 1.0
    if m > L // 2:
        return 0.0
    return float(Fraction(math.comb(L, L // 2 - m), math.comb(L, L // 2)))


def sep_dynamics(L: int, horizon: float, master_seed: int, m: int | None = None,
                 initial=None, snapshot_times=(), want_heights: bool = True):
    """Trajectory of the free corner-flip chain (each corner at rate 1/2).

    Defaults: endpoints at the standard lift height and the lifted top
    path as the initial condition.
    """
    if m is None:
        m = lift_height(L)
    if initial is None:
        initial = lifted_top(L, m)
    validate_heights(initial, wall=False, endpoint=m)
    return simulate_superposed(initial, 0.0, horizon, master_seed,
                               snapshot_times=snapshot_times, wall=False,
                               want_heights=want_heights)


def sandwich_check(L: int, master_seed: int, horizon: float,
                   snapshot_times=(), m: int | None = None) -> dict:
    """One realization of the three-chain monotone sandwich.

    Couples the lifted wall chain at lambda = 0 from the lifted top path,
    the free chain from the same path, and the free chain from a uniform
    bridge, all on shared clocks; checks wall >= free-top >= free-uniform
    at every event time.
    """
    from .dynamics.clocks import derive_seed
    if m is None:
        m = lift_height(L)
    top = lifted_top(L, m)
    rng = np.random.default_rng(derive_seed(master_seed, 0x5345))
    eq = sample_uniform_bridge(L, m, rng)
    chains = [ChainSpec(top, 0.0, True, "wall_lam0"),
              ChainSpec(top, 0.0, False, "free_top"),
              ChainSpec(eq, 0.0, False, "free_uniform")]
    res = grand_coupling(chains, horizon, master_seed=master_seed,
                         snapshot_times=snapshot_times,
                         order_pairs=[(1, 0), (2, 1)], m=m, wide_x=True,
                         free_floor=True)
    return {
        "violations": res.violations,
        "first_violation": res.first_violation,
        "final_heights": res.final_heights,
        "snapshot_obs": res.obs,
        "n_pops": res.n_pops,
    }
