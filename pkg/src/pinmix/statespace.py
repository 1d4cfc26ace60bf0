"""Combinatorics and equilibrium of the wall-constrained pinning model.

State space: nonnegative nearest-neighbor bridges of even length L pinned
at height 0 on both ends.  Each path carries Gibbs weight lambda**N where
N is its number of interior contacts with the wall.  This module owns the
path representation, the partition function (log-scale dynamic program
plus an exact rational mode), the Gibbs measure, an exact equilibrium
sampler, the coordinatewise partial order, the extremal paths, and the
lift/project identification between contact-free paths of length L and
arbitrary paths of length L-2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

NEG_INF = -np.inf


# ---------------------------------------------------------------------------
# Parameters and path representation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelParams:
    """Model parameters: even path length L >= 2 and pinning strength lambda >= 0.

    ``kappa`` is the discrete-Laplacian constant 1 - cos(pi/L), the proven
    lower bound on the spectral gap of the dynamics.
    """

    L: int
    lam: float

    def __post_init__(self):
        if self.L < 2 or self.L % 2 != 0:
            raise ValueError(f"L must be even and >= 2, got {self.L}")
        if not (self.lam >= 0.0):
            raise ValueError(f"lambda must be >= 0, got {self.lam}")

    @property
    def kappa(self) -> float:
        return 1.0 - math.cos(math.pi / self.L)


def as_heights(path) -> np.ndarray:
    """Coerce a Path, sequence, or array of heights to an int64 array."""
    if isinstance(path, Path):
        return path.heights
    return np.asarray(path, dtype=np.int64)


def validate_heights(heights: np.ndarray, wall: bool = True, endpoint: int = 0):
    """Raise ValueError unless ``heights`` is a valid bridge profile.

    wall=True additionally requires nonnegative heights (the pinned model);
    wall=False accepts any integer bridge (used by the no-wall comparison
    system, whose endpoints sit at ``endpoint``).
    """
    h = np.asarray(heights)
    L = len(h) - 1
    if L < 2 or L % 2 != 0:
        raise ValueError(f"path length must be even and >= 2, got L={L}")
    if h[0] != endpoint or h[L] != endpoint:
        raise ValueError(f"endpoints must equal {endpoint}, got {h[0]}, {h[L]}")
    steps = np.diff(h)
    if np.any(np.abs(steps) != 1):
        raise ValueError("heights must change by exactly 1 per step")
    if wall and np.any(h < 0):
        raise ValueError("heights must be nonnegative")


@dataclass(frozen=True)
class Path:
    """A nonnegative nearest-neighbor bridge (xi_0, ..., xi_L), xi_0 = xi_L = 0."""

    heights: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.heights, dtype=np.int64)
        h.setflags(write=False)
        object.__setattr__(self, "heights", h)
        validate_heights(h)

    @property
    def L(self) -> int:
        return len(self.heights) - 1

    def __eq__(self, other):
        other_h = as_heights(other)
        return self.heights.shape == other_h.shape and bool(np.all(self.heights == other_h))

    def __hash__(self):
        return hash(self.heights.tobytes())


def contacts(path) -> int:
    """Number of interior contacts with the wall: #{x in [1, L-1] : xi_x = 0}."""
    h = as_heights(path)
    return int(np.count_nonzero(h[1:-1] == 0))


def maximal_path(L: int) -> np.ndarray:
    """The top path: wedge_x = min(x, L - x)."""
    x = np.arange(L + 1, dtype=np.int64)
    return np.minimum(x, L - x)


def minimal_path(L: int) -> np.ndarray:
    """The bottom path: alternating 0, 1, 0, 1, ..., 0."""
    x = np.arange(L + 1, dtype=np.int64)
    return x % 2


def leq(a, b) -> bool:
    """Coordinatewise partial order: a <= b iff a_x <= b_x for all x."""
    ha, hb = as_heights(a), as_heights(b)
    if ha.shape != hb.shape:
        raise ValueError(f"paths have different lengths: {len(ha)-1} vs {len(hb)-1}")
    return bool(np.all(ha <= hb))


def lift(path) -> np.ndarray:
    """Map a length-(L-2) path to the contact-free sector of length L.

    The image path is the input shifted right by one column and up by one
    unit, with fresh endpoints at 0; its interior never touches the wall.
    """
    h = as_heights(path)
    L = len(h) + 1
    out = np.empty(L + 1, dtype=np.int64)
    out[0] = 0
    out[L] = 0
    out[1:L] = h + 1
    return out


def project(path) -> np.ndarray:
    """Inverse of :func:`lift`; requires a contact-free path (N = 0)."""
    h = as_heights(path)
    if contacts(h) != 0:
        raise ValueError("project requires a path with no interior contacts")
    return h[1:-1] - 1


# ---------------------------------------------------------------------------
# Canonical step encoding (stable state <-> integer key)
# ---------------------------------------------------------------------------

def heights_to_steps(path) -> np.ndarray:
    return np.diff(as_heights(path))


def steps_to_heights(steps) -> np.ndarray:
    h = np.empty(len(steps) + 1, dtype=np.int64)
    h[0] = 0
    np.cumsum(steps, out=h[1:])
    return h


def encode_path(path) -> int:
    """Pack the step sequence into an integer key, bit x set iff step x is down.

    Little-endian packing; used as the canonical key of the state index.
    """
    steps = heights_to_steps(path)
    key = 0
    for x in range(len(steps)):
        if steps[x] < 0:
            key |= 1 << x
    return key


def decode_path(key: int, L: int) -> np.ndarray:
    steps = np.fromiter(((-1 if (key >> x) & 1 else 1) for x in range(L)),
                        dtype=np.int64, count=L)
    return steps_to_heights(steps)


# ---------------------------------------------------------------------------
# Partition function
# ---------------------------------------------------------------------------

def log_partition(L: int, lam: float) -> float:
    """log Z_L(lambda) = log sum over paths of lambda**N(path).

    Dynamic program over (position, height) in log scale, one column at a
    time; the multiplicative contact weight is applied on each return to
    height 0 at an interior position.  Stable for L up to several thousand.
    By the 0**0 = 1 convention, lambda = 0 restricts the sum to the
    contact-free sector.
    """
    ModelParams(L, lam)
    log_lam = math.log(lam) if lam > 0 else NEG_INF
    hmax = L // 2
    w = np.full(hmax + 2, NEG_INF)
    w[0] = 0.0
    for x in range(1, L + 1):
        w2 = np.full(hmax + 2, NEG_INF)
        w2[1:] = w[:-1]
        np.logaddexp(w2[:-1], w[1:], out=w2[:-1])
        if x < L:
            w2[0] += log_lam
        w = w2
    return float(w[0])


def partition_fraction(L: int, lam: Fraction) -> Fraction:
    """Exact rational Z_L(lambda); certifies the log-scale DP for small L."""
    if L > 64:
        raise ValueError("exact rational mode is intended for L <= 64")
    lam = Fraction(lam)
    w = {0: Fraction(1)}
    for x in range(1, L + 1):
        w2: dict[int, Fraction] = {}
        for h, v in w.items():
            for h2 in (h - 1, h + 1):
                if h2 < 0:
                    continue
                v2 = v * lam if (h2 == 0 and x < L) else v
                if v2 != 0:
                    w2[h2] = w2.get(h2, Fraction(0)) + v2
        w = w2
    return w.get(0, Fraction(0))


def log_gibbs_weight(path, lam: float) -> float:
    """log of the unnormalized weight lambda**N(path); -inf when the weight is 0."""
    n = contacts(path)
    if lam == 0.0:
        return 0.0 if n == 0 else NEG_INF
    return n * math.log(lam)


def gibbs_prob(path, params: ModelParams) -> float:
    """Equilibrium probability lambda**N(path) / Z_L(lambda).

    For lambda = 0 this is the uniform measure on the contact-free sector
    and 0 elsewhere.
    """
    h = as_heights(path)
    validate_heights(h)
    if len(h) - 1 != params.L:
        raise ValueError("path length does not match params.L")
    lw = log_gibbs_weight(h, params.lam)
    if lw == NEG_INF:
        return 0.0
    return math.exp(lw - log_partition(params.L, params.lam))


# ---------------------------------------------------------------------------
# Exact equilibrium sampler
# ---------------------------------------------------------------------------

def _suffix_log_weights(L: int, lam: float) -> np.ndarray:
    """logW[x, h] = log-weight of path suffixes from (x, h) to (L, 0).

    The contact weight multiplies every interior return to 0 strictly after
    column x, so W[0, 0] = Z_L(lambda).
    """
    log_lam = math.log(lam) if lam > 0 else NEG_INF
    hmax = L // 2
    logw = np.full((L + 1, hmax + 2), NEG_INF)
    logw[L, 0] = 0.0
    for x in range(L - 1, -1, -1):
        up = logw[x + 1, 1:]
        down = np.full(hmax + 2, NEG_INF)
        down[1:] = logw[x + 1, :-1]
        if x + 1 < L:
            down[1] += log_lam
        col = np.full(hmax + 2, NEG_INF)
        col[:-1] = np.logaddexp(up, down[:-1])
        # unreachable heights stay -inf automatically (no suffix path exists)
        logw[x] = col
    return logw


class EquilibriumSampler:
    """Exact sampler for the Gibbs measure, one O(L) draw per sample.

    Builds the suffix-weight table once; each draw walks left to right,
    choosing each step with its exact conditional probability.  For
    lambda = 0 the sampler draws from the lambda = 1 measure at length
    L - 2 and lifts the result into the contact-free sector.
    """

    def __init__(self, params: ModelParams):
        self.params = params
        if params.lam == 0.0:
            if params.L == 2:
                self._inner = None
            else:
                self._inner = EquilibriumSampler(ModelParams(params.L - 2, 1.0))
            self._logw = None
        else:
            self._inner = None
            self._logw = _suffix_log_weights(params.L, params.lam)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        L = self.params.L
        if self.params.lam == 0.0:
            if self._inner is None:
                return np.array([0, 1, 0], dtype=np.int64)
            return lift(self._inner.sample(rng))
        logw = self._logw
        log_lam = math.log(self.params.lam)
        h = np.empty(L + 1, dtype=np.int64)
        h[0] = 0
        cur = 0
        for x in range(L):
            la_up = logw[x + 1, cur + 1]
            if cur > 0:
                la_down = logw[x + 1, cur - 1]
                if cur - 1 == 0 and x + 1 < L:
                    la_down += log_lam
            else:
                la_down = NEG_INF
            if la_down == NEG_INF:
                step = 1
            elif la_up == NEG_INF:
                step = -1
            else:
                p_up = 1.0 / (1.0 + math.exp(la_down - la_up))
                step = 1 if rng.random() < p_up else -1
            cur += step
            h[x + 1] = cur
        return h


def sample_equilibrium(params: ModelParams, rng: np.random.Generator) -> np.ndarray:
    """Draw one path exactly from the Gibbs measure."""
    return EquilibriumSampler(params).sample(rng)


# ---------------------------------------------------------------------------
# Path text format: one path per line, heights space-separated
# ---------------------------------------------------------------------------

def format_path(path) -> str:
    return " ".join(str(int(v)) for v in as_heights(path))


def parse_path(line: str) -> np.ndarray:
    h = np.array([int(tok) for tok in line.split()], dtype=np.int64)
    validate_heights(h)
    return h
