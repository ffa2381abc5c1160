"""Sequential window probabilities for random walks with independent steps.

A walk S_j = e_0 + ... + e_j is pushed through a sequence of half-open
windows (lower_j, upper_j].  After each step the engine reports the mass
leaving below the window, the mass staying inside, the mass leaving above,
and the first moment of the upward-leaving mass, then carries the surviving
sub-density forward.  Gaussian steps propagate a density sampled on a
fixed-size grid clipped to SPAN standard deviations beyond the current
support; discrete steps propagate exact point masses, so substituting a
discrete step distribution turns the whole recursion into exact
enumeration.

Masses and tail moments against window edges are always computed from the
normal CDF/pdf (or exact atom sums), and the carried density is
renormalized to the CDF-exact inside mass, so below + inside + above
equals the incoming mass to within floating-point rounding regardless of
quadrature error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

SPAN = 6.0
GRID_POINTS = 257
_TINY = 1e-300
_SQRT_2PI = math.sqrt(2.0 * math.pi)


class ZeroProbabilityError(ValueError):
    """Conditioning event has zero (or numerically vanished) probability."""


def _npdf(z):
    return np.exp(-0.5 * np.square(z)) / _SQRT_2PI


@dataclass(frozen=True)
class NormalStep:
    sigma: float

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"step std must be nonnegative, got {self.sigma}")


@dataclass(frozen=True)
class DiscreteStep:
    atoms: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.atoms) != len(self.probs) or not self.atoms:
            raise ValueError("atoms and probs must be nonempty and equal length")
        if any(p < 0 for p in self.probs):
            raise ValueError("atom probabilities must be nonnegative")
        if abs(sum(self.probs) - 1.0) > 1e-12:
            raise ValueError("atom probabilities must sum to 1")


Step = NormalStep | DiscreteStep


def as_steps(step_stds) -> list[Step]:
    """Coerce a list of stds (or ready Step objects) into Step instances."""
    steps: list[Step] = []
    for s in step_stds:
        if isinstance(s, (NormalStep, DiscreteStep)):
            steps.append(s)
        else:
            sd = float(s)
            steps.append(NormalStep(sd) if sd > 0.0 else DiscreteStep((0.0,), (1.0,)))
    return steps


@dataclass(frozen=True, eq=False)
class _Atoms:
    points: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True, eq=False)
class _Grid:
    xs: np.ndarray        # uniform, GRID_POINTS entries (odd, Simpson-ready)
    density: np.ndarray


WalkState = _Atoms | _Grid | None


@dataclass(frozen=True)
class WindowResult:
    below: float
    inside: float
    above: float
    above_moment: float   # E[S; previous windows held, S > upper]
    state: WalkState      # surviving sub-density inside the window


def initial_state() -> WalkState:
    return _Atoms(np.array([0.0]), np.array([1.0]))


def _simpson_pattern(m: int) -> np.ndarray:
    if m % 2 == 0:
        raise ValueError("Simpson rule needs an odd point count")
    w = np.ones(m)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w / 3.0


_PATTERN = _simpson_pattern(GRID_POINTS)


def _quad_weights(xs: np.ndarray) -> np.ndarray:
    dx = (xs[-1] - xs[0]) / (xs.size - 1)
    pattern = _PATTERN if xs.size == GRID_POINTS else _simpson_pattern(xs.size)
    return pattern * dx


def state_mass(state: WalkState) -> float:
    if state is None:
        return 0.0
    if isinstance(state, _Atoms):
        return float(state.weights.sum())
    return float(_quad_weights(state.xs) @ state.density)


# Gaussian transition kernels reused across translation-equivalent steps.
# Keys are dimensionless and rounded, so a cache hit perturbs kernel
# arguments by at most ~1e-12 standard deviations.
_KERNEL_CACHE: dict = {}
_KERNEL_CACHE_MAX = 128


def _gauss_kernel(ys: np.ndarray, xs: np.ndarray, sigma: float) -> np.ndarray:
    dx_in = (xs[-1] - xs[0]) / (xs.size - 1)
    dx_out = (ys[-1] - ys[0]) / (ys.size - 1)
    key = (
        ys.size, xs.size,
        round((ys[0] - xs[0]) / sigma, 12),
        round(dx_out / sigma, 12),
        round(dx_in / sigma, 12),
    )
    k = _KERNEL_CACHE.get(key)
    if k is None:
        k = _npdf((ys[:, None] - xs[None, :]) / sigma)
        if len(_KERNEL_CACHE) >= _KERNEL_CACHE_MAX:
            _KERNEL_CACHE.clear()
        _KERNEL_CACHE[key] = k
    return k


def advance(state: WalkState, step: Step, lower: float, upper: float) -> WindowResult:
    """Push the walk one step and split its mass against (lower, upper]."""
    if state is None:
        return WindowResult(0.0, 0.0, 0.0, 0.0, None)

    if isinstance(step, NormalStep) and step.sigma == 0.0:
        step = DiscreteStep((0.0,), (1.0,))

    if isinstance(step, DiscreteStep):
        if not isinstance(state, _Atoms):
            # Grid states only arise from Gaussian steps; no engine here
            # mixes a discrete step in afterwards.
            raise NotImplementedError("discrete step after a Gaussian step is not supported")
        pts = (state.points[:, None] + np.asarray(step.atoms)[None, :]).ravel()
        wts = (state.weights[:, None] * np.asarray(step.probs)[None, :]).ravel()
        pts, inv = np.unique(pts, return_inverse=True)
        wts = np.bincount(inv, weights=wts)
        below_mask = pts <= lower
        above_mask = pts > upper
        inside_mask = ~below_mask & ~above_mask
        below = float(wts[below_mask].sum())
        above = float(wts[above_mask].sum())
        inside = float(wts[inside_mask].sum())
        moment = float((wts * pts)[above_mask].sum())
        nxt = _Atoms(pts[inside_mask], wts[inside_mask]) if inside > _TINY else None
        return WindowResult(below, inside, above, moment, nxt)

    sigma = step.sigma
    if isinstance(state, _Atoms):
        pts, wts = state.points, state.weights
    else:
        pts = state.xs
        wts = _quad_weights(state.xs) * state.density

    mass = float(wts.sum())
    below = float(wts @ ndtr((lower - pts) / sigma)) if np.isfinite(lower) else 0.0
    if np.isfinite(upper):
        z_hi = (upper - pts) / sigma
        above_frac = ndtr(-z_hi)
        above = float(wts @ above_frac)
        moment = float(wts @ (pts * above_frac + sigma * _npdf(z_hi)))
    else:
        above = 0.0
        moment = 0.0
    inside = max(mass - below - above, 0.0) if upper > lower else 0.0

    wlo = max(lower, float(pts[0] if isinstance(state, _Grid) else pts.min()) - SPAN * sigma)
    whi = min(upper, float(pts[-1] if isinstance(state, _Grid) else pts.max()) + SPAN * sigma)
    if not whi > wlo or inside <= _TINY:
        return WindowResult(below, inside, above, moment, None)

    ys = np.linspace(wlo, whi, GRID_POINTS)
    if isinstance(state, _Grid):
        dens = (_gauss_kernel(ys, pts, sigma) @ wts) / sigma
    else:
        dens = (wts[None, :] * _npdf((ys[:, None] - pts[None, :]) / sigma)).sum(axis=1) / sigma
    quad_mass = float(_quad_weights(ys) @ dens)
    if quad_mass <= _TINY:
        return WindowResult(below, inside, above, moment, None)
    nxt = _Grid(ys, dens * (inside / quad_mass))
    return WindowResult(below, inside, above, moment, nxt)


def _check_bounds(n: int, lower, upper) -> tuple[np.ndarray, np.ndarray]:
    lo = np.asarray(lower, dtype=float).reshape(-1)
    hi = np.asarray(upper, dtype=float).reshape(-1)
    if lo.size != n or hi.size != n:
        raise ValueError(f"bounds must have length {n}")
    if np.any(lo > hi):
        raise ValueError("lower bounds must not exceed upper bounds")
    return lo, hi


def walk_rectangle_prob(step_stds, lower, upper, final_mode: str = "interval") -> float:
    """P(lower_j < S_j <= upper_j for j < n, final condition on S_n).

    The final condition is selected by ``final_mode``: "interval" keeps
    lower_n < S_n <= upper_n, "upper_tail" keeps S_n > upper_n and
    "lower_tail" keeps S_n <= lower_n.
    """
    steps = as_steps(step_stds)
    n = len(steps)
    if n == 0:
        raise ValueError("need at least one step")
    lo, hi = _check_bounds(n, lower, upper)
    if final_mode not in ("interval", "upper_tail", "lower_tail"):
        raise ValueError(f"unknown final_mode {final_mode!r}")
    state = initial_state()
    for j in range(n - 1):
        res = advance(state, steps[j], lo[j], hi[j])
        state = res.state
        if state is None:
            return 0.0
    res = advance(state, steps[-1], lo[-1], hi[-1])
    if final_mode == "interval":
        return res.inside
    if final_mode == "upper_tail":
        return res.above
    return res.below


def truncated_walk_mean(step_stds, lower, upper, final_tail: float) -> float:
    """E[S_n | lower_j < S_j <= upper_j for j < n, S_n > final_tail].

    ``lower``/``upper`` constrain the first n-1 partial sums only; the last
    step is conditioned on exceeding ``final_tail``.
    """
    steps = as_steps(step_stds)
    n = len(steps)
    if n == 0:
        raise ValueError("need at least one step")
    lo, hi = _check_bounds(n - 1, lower, upper)
    state = initial_state()
    for j in range(n - 1):
        res = advance(state, steps[j], lo[j], hi[j])
        state = res.state
        if state is None:
            raise ZeroProbabilityError("constraint windows carry no probability mass")
    res = advance(state, steps[-1], -np.inf, float(final_tail))
    if res.above <= _TINY:
        raise ZeroProbabilityError("tail event has vanishing probability")
    return res.above_moment / res.above
