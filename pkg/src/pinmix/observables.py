"""Functionals measured on configurations and coupled pairs.

Weighted areas Phi (sine weights) and PhiBar (cosine weights with opening
beta), the wall terms Psi and PsiBar, the generator identities that tie
them to the dynamics, height and monotone-segment statistics, the coupled
area process A, and the bracket diagnostics recorded along A's jumps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .statespace import ModelParams, as_heights, leq
from .dynamics.moves import flip, rate

BETA_LO = 2.0 * math.pi / 3.0
BETA_HI = math.pi


def sine_weights(L: int) -> np.ndarray:
    """w[x] = sin(pi x / L), nonnegative across the strip."""
    return np.sin(np.pi * np.arange(L + 1) / L)


def check_beta(beta: float):
    if not (BETA_LO < beta < BETA_HI):
        raise ValueError(f"beta must lie in (2*pi/3, pi), got {beta}")


def cosine_weights(L: int, beta: float) -> np.ndarray:
    """w[x] = cos(beta (x - L/2) / L); strictly positive for beta < pi."""
    check_beta(beta)
    x = np.arange(L + 1, dtype=np.float64)
    return np.cos(beta * (x - L / 2) / L)


@dataclass(frozen=True)
class AreaWeights:
    """Precomputed weight vector for an area functional."""

    kind: str                 # "sine" or "cosine_beta"
    L: int
    beta: float = math.nan
    w: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.kind == "sine":
            object.__setattr__(self, "w", sine_weights(self.L))
        elif self.kind == "cosine_beta":
            object.__setattr__(self, "w", cosine_weights(self.L, self.beta))
        else:
            raise ValueError(f"unknown kind {self.kind!r}")


def phi(path, weights: np.ndarray | None = None) -> float:
    """Sine-weighted area: sum over interior x of xi_x sin(pi x / L)."""
    h = as_heights(path)
    L = len(h) - 1
    w = sine_weights(L) if weights is None else weights
    return float(np.dot(h[1:L], w[1:L]))


def phi_bar(path, beta: float, weights: np.ndarray | None = None) -> float:
    """Cosine-weighted area; monotone for the coordinatewise order."""
    h = as_heights(path)
    L = len(h) - 1
    w = cosine_weights(L, beta) if weights is None else weights
    return float(np.dot(h[1:L], w[1:L]))


def _wall_indicators(h: np.ndarray):
    L = len(h) - 1
    x = np.arange(1, L)
    at0 = (h[x - 1] == 0) & (h[x + 1] == 0)
    at1 = (h[x - 1] == 1) & (h[x + 1] == 1)
    return x, at0, at1


def psi(path, params: ModelParams) -> float:
    """Wall term of the generator identity for Phi.

    Psi = sum sin(pi x/L) [1{xi_{x-1}=xi_{x+1}=0}
                           - ((lam-1)/(lam+1)) 1{xi_{x-1}=xi_{x+1}=1}].
    """
    h = as_heights(path)
    w = sine_weights(len(h) - 1)
    x, at0, at1 = _wall_indicators(h)
    c = (params.lam - 1.0) / (params.lam + 1.0)
    return float(np.sum(w[x] * (at0.astype(float) - c * at1.astype(float))))


def psi_bar(path, params: ModelParams) -> float:
    """Absolute-coefficient companion of Psi; dominates |Psi| pointwise."""
    h = as_heights(path)
    w = sine_weights(len(h) - 1)
    x, at0, at1 = _wall_indicators(h)
    c = abs((params.lam - 1.0) / (params.lam + 1.0))
    return float(np.sum(w[x] * (at0.astype(float) + c * at1.astype(float))))


def generator_coordinate(path, x: int, params: ModelParams,
                         rtol: float = 1e-10) -> float:
    """Action of the generator on the coordinate function xi -> xi_x.

    Evaluates both the defining sum over flips, rate * (flip(xi)_x - xi_x),
    and the closed form
        (Delta xi)_x + 1{xi_{x-1}=xi_{x+1}=0}
                     - ((lam-1)/(lam+1)) 1{xi_{x-1}=xi_{x+1}=1},
    asserts their agreement, and returns the value.
    """
    h = as_heights(path)
    L = len(h) - 1
    direct = 0.0
    for y in range(1, L):
        r = rate(h, y, params)
        if r > 0.0:
            direct += r * (flip(h, y)[x] - h[x])
    lap = 0.5 * (h[x - 1] + h[x + 1]) - h[x]
    closed = float(lap)
    if h[x - 1] == 0 and h[x + 1] == 0:
        closed += 1.0
    if h[x - 1] == 1 and h[x + 1] == 1:
        closed -= (params.lam - 1.0) / (params.lam + 1.0)
    if abs(direct - closed) > rtol * max(1.0, abs(closed)):
        raise AssertionError(
            f"coordinate generator mismatch at x={x}: sum-over-flips {direct!r} "
            f"vs closed form {closed!r}")
    return closed


def generator_phi(path, params: ModelParams, rtol: float = 1e-10) -> float:
    """Action of the generator on Phi, checked against -kappa*Phi + Psi."""
    h = as_heights(path)
    L = len(h) - 1
    w = sine_weights(L)
    direct = 0.0
    for y in range(1, L):
        r = rate(h, y, params)
        if r > 0.0:
            direct += r * (flip(h, y)[y] - h[y]) * w[y]
    closed = -params.kappa * phi(h, w) + psi(h, params)
    if abs(direct - closed) > rtol * max(1.0, abs(closed)):
        raise AssertionError(
            f"Phi generator mismatch: sum-over-flips {direct!r} vs "
            f"-kappa*Phi + Psi = {closed!r}")
    return closed


def height_max(path) -> int:
    return int(np.max(as_heights(path)))


def q_monotone(path) -> int:
    """Longest run of consecutive equal steps (+1s or -1s)."""
    steps = np.diff(as_heights(path))
    best = run = 1
    for i in range(1, len(steps)):
        run = run + 1 if steps[i] == steps[i - 1] else 1
        if run > best:
            best = run
    return int(best)


def delta_min(L: int, beta: float) -> float:
    """Lower bound on increments of PhiBar between ordered distinct paths:
    2 cos(beta (L/2 - 1) / L)."""
    check_beta(beta)
    return 2.0 * math.cos(beta * (L / 2 - 1) / L)


def area_value(top, ref, beta: float) -> float:
    """Coupled-pair area A = (PhiBar(top) - PhiBar(ref)) / delta_min.

    Requires top >= ref coordinatewise; zero iff the pair has coalesced.
    """
    if not leq(ref, top):
        raise ValueError("area process requires ref <= top coordinatewise")
    L = len(as_heights(top)) - 1
    w = cosine_weights(L, beta)
    return (phi_bar(top, beta, w) - phi_bar(ref, beta, w)) / delta_min(L, beta)


def default_beta(delta: float = 0.1) -> float:
    """Opening used by the contraction argument:
    beta = pi sqrt((1 + 9 delta/20) / (1 + delta/2))."""
    return math.pi * math.sqrt((1.0 + 0.45 * delta) / (1.0 + 0.5 * delta))


def default_eta(delta: float = 0.1) -> float:
    return min(delta / 10.0, 0.05)


def threshold_count(eta: float) -> int:
    return math.ceil(1.0 / (2.0 * eta))


def area_thresholds(L: int, eta: float) -> np.ndarray:
    """Descending thresholds L^{3/2 - i eta}, i = 2..K, K = ceil(1/(2 eta))."""
    K = threshold_count(eta)
    i = np.arange(2, K + 1, dtype=np.float64)
    return L ** (1.5 - i * eta)


@dataclass
class BracketDiagnostics:
    """Running record of the coupled area process between stopping thresholds.

    Diagnostic only: stores the pathwise sum of squared A-jumps as a proxy
    for the predictable bracket, the first-crossing times of the
    thresholds L^{3/2 - i eta}, and the logged lower-bound ratios
    lam * delta_min * A / (3 (1+lam) H Q).  No pass/fail semantics beyond
    |jump| >= 1 before coalescence.
    """

    L: int
    beta: float
    eta: float
    delta_min: float = field(init=False)
    thresholds: np.ndarray = field(init=False)
    quadratic_variation_proxy: float = 0.0
    min_abs_jump: float = math.inf
    n_jumps: int = 0
    crossing_times: list = field(default_factory=list)
    crossing_ratios: list = field(default_factory=list)
    _cross_i: int = 0
    _a: float = math.nan

    def __post_init__(self):
        self.delta_min = delta_min(self.L, self.beta)
        self.thresholds = area_thresholds(self.L, self.eta)

    @property
    def K(self) -> int:
        return threshold_count(self.eta)

    def update(self, t: float, a_new: float, pre_coalescence: bool,
               lam: float = math.nan, h: float = math.nan, q: float = math.nan):
        """Record one A-jump; thresholds are consumed in descending order."""
        if not math.isnan(self._a):
            jump = a_new - self._a
            if jump != 0.0 and pre_coalescence:
                self.quadratic_variation_proxy += jump * jump
                self.min_abs_jump = min(self.min_abs_jump, abs(jump))
                self.n_jumps += 1
        self._a = a_new
        while self._cross_i < len(self.thresholds) and a_new <= self.thresholds[self._cross_i]:
            self.crossing_times.append(t)
            ratio = math.nan
            if not (math.isnan(lam) or math.isnan(h) or math.isnan(q)) and h > 0 and q > 0:
                ratio = lam * self.delta_min * a_new / (3.0 * (1.0 + lam) * h * q)
            self.crossing_ratios.append(ratio)
            self._cross_i += 1
        return self
