"""Recombinant-lattice evaluation of the expected delivery-interval cost.

Storage states after the optimal control are empty, full, or strictly
interior.  Merging histories that share the same algebraic form of the
effective deficit (realized deficit minus stored energy) keeps the state
count linear per stage: level t holds 2t-1 nodes.  Every interior node is
reached from its nearest boundary ancestor through a run of "stay
interior" moves, so each such chain is one constrained random walk and the
whole lattice is covered by 2T-1 walks (one per boundary node).

Node conventions, with per-stage supply x and capacity B: a node moves
left (storage empties, shortfall) when its effective-deficit error exceeds
x - d_eff, right (storage fills, curtailment) when the error is at most
x - B - d_eff, and to its middle child otherwise.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .model import ForecastModel
from .walks import (
    Step,
    WindowResult,
    advance,
    as_steps,
    initial_state,
    walk_rectangle_prob,
)

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _npdf(z):
    return np.exp(-0.5 * np.square(z)) / _SQRT_2PI


@dataclass(frozen=True, eq=False)
class Lattice:
    """Node geometry: predicted effective deficits and boundary depths."""

    n_stages: int
    capacity: float
    supply: float                   # per-stage x
    forecast: ForecastModel
    d_eff: list[np.ndarray]         # level i holds 2i+1 nodes, k is 1-based
    depth: list[np.ndarray]

    def level_size(self, i: int) -> int:
        return 2 * i + 1

    def lower_bound(self, i: int, k: int) -> float:
        return self.supply - self.capacity - self.d_eff[i][k - 1]

    def upper_bound(self, i: int, k: int) -> float:
        return self.supply - self.d_eff[i][k - 1]

    def chain(self, i: int, k: int):
        """Walk data from node (i, k)'s boundary ancestor down to itself.

        Returns (step_stds, lower_bounds, upper_bounds), one entry per
        chain position; the error of node (i, k) is the sum of the listed
        steps and the bounds are its ancestors' stay-interior windows.
        """
        h = int(self.depth[i][k - 1])
        i0, k0 = i - h, k - h
        stds = [float(self.forecast.sigma[i0 + m]) for m in range(h + 1)]
        lows = [self.lower_bound(i0 + m, k0 + m) for m in range(h + 1)]
        highs = [self.upper_bound(i0 + m, k0 + m) for m in range(h + 1)]
        return stds, lows, highs


@dataclass(frozen=True)
class NodeProbabilities:
    visit: float
    left: float
    mid: float
    right: float


@dataclass(frozen=True, eq=False)
class LatticeSolution:
    lattice: Lattice
    voll: float
    visit: list[np.ndarray]
    left: list[np.ndarray]
    mid: list[np.ndarray]
    right: list[np.ndarray]
    left_moment: list[np.ndarray]   # E[effective-deficit error; visit and move left]
    cost: float
    subgradient: float


def build_lattice(forecast: ForecastModel, capacity: float, supply: float) -> Lattice:
    """Populate every node's predicted effective deficit and depth."""
    if forecast.n_stages < 1:
        raise ValueError("need at least one delivery stage")
    if capacity <= 0:
        raise ValueError("lattice needs capacity > 0; use closed_form_b0 for B = 0")
    T = forecast.n_stages
    d = forecast.d_hat
    prefix = np.concatenate(([0.0], np.cumsum(d)))
    d_eff: list[np.ndarray] = []
    depth: list[np.ndarray] = []
    for i in range(T):
        K = 2 * i + 1
        k = np.arange(1, K + 1)
        h = np.minimum(k - 1, K - k)
        # deficits accumulated since the storage last sat at a boundary,
        # less the supply provided over those stages
        vals = prefix[i + 1] - prefix[i - h] - h * supply
        vals = np.where(k > i + 1, vals - capacity, vals)
        d_eff.append(vals)
        depth.append(h)
    return Lattice(T, float(capacity), float(supply), forecast, d_eff, depth)


def _run_chain(solution_arrays, lattice: Lattice, start_level: int, side: str,
               start_prob: float, steps: list[Step]) -> None:
    """Propagate one boundary chain, writing per-node masses in place."""
    visit, left, mid, right, moment = solution_arrays
    T = lattice.n_stages
    state = initial_state()
    carry = 1.0
    for j in range(T - start_level):
        i = start_level + j
        k = (1 + j) if side == "left" else (2 * start_level + 1 + j)
        lo = lattice.lower_bound(i, k)
        hi = lattice.upper_bound(i, k)
        res = advance(state, steps[i], lo, hi)
        visit[i][k - 1] = start_prob * carry
        left[i][k - 1] = start_prob * res.above
        mid[i][k - 1] = start_prob * res.inside
        right[i][k - 1] = start_prob * res.below
        moment[i][k - 1] = start_prob * res.above_moment
        state = res.state
        carry = res.inside
        if state is None:
            break


def _run_template(bound_offset: float, margin: float, capacity: float,
                  steps: list[Step], length: int) -> list[WindowResult]:
    """Window results of a constant-profile chain, per unit start mass.

    Position j uses the window ((j+1)*margin + bound_offset - capacity,
    (j+1)*margin + bound_offset]; offset 0 gives the empty-boundary chain
    and offset +capacity the full-boundary chain.
    """
    out: list[WindowResult] = []
    state = initial_state()
    for j in range(length):
        hi = (j + 1) * margin + bound_offset
        res = advance(state, steps[j], hi - capacity, hi)
        out.append(res)
        state = res.state
        if state is None:
            break
    return out


def solve_lattice(lattice: Lattice, voll: float,
                  error_steps: list[Step] | None = None) -> LatticeSolution:
    """Compute all node probabilities, the expected cost and its subgradient."""
    T = lattice.n_stages
    x = lattice.supply
    fc = lattice.forecast
    if error_steps is None:
        steps = as_steps(fc.sigma)
        fast = fc.constant_profile
    else:
        if len(error_steps) != T:
            raise ValueError("need one error step per delivery stage")
        steps = list(error_steps)
        fast = False

    visit = [np.zeros(2 * i + 1) for i in range(T)]
    left = [np.zeros(2 * i + 1) for i in range(T)]
    mid = [np.zeros(2 * i + 1) for i in range(T)]
    right = [np.zeros(2 * i + 1) for i in range(T)]
    moment = [np.zeros(2 * i + 1) for i in range(T)]
    arrays = (visit, left, mid, right, moment)

    if fast:
        margin = x - fc.d_hat[0]
        tmpl_left = _run_template(0.0, margin, lattice.capacity, steps, T)
        tmpl_right = _run_template(lattice.capacity, margin, lattice.capacity, steps, T)

        def fill(start_level, side, start_prob, template):
            carry = 1.0
            for j, res in enumerate(template):
                i = start_level + j
                if i >= T:
                    break
                k = (1 + j) if side == "left" else (2 * start_level + 1 + j)
                visit[i][k - 1] = start_prob * carry
                left[i][k - 1] = start_prob * res.above
                mid[i][k - 1] = start_prob * res.inside
                right[i][k - 1] = start_prob * res.below
                moment[i][k - 1] = start_prob * res.above_moment
                carry = res.inside

        fill(0, "left", 1.0, tmpl_left)
        for i0 in range(1, T):
            # boundary visit probabilities: sums of the previous level's exits
            q = float(left[i0 - 1].sum())
            r = float(right[i0 - 1].sum())
            fill(i0, "left", q, tmpl_left)
            fill(i0, "right", r, tmpl_right)
    else:
        _run_chain(arrays, lattice, 0, "left", 1.0, steps)
        for i0 in range(1, T):
            q = float(left[i0 - 1].sum())
            r = float(right[i0 - 1].sum())
            _run_chain(arrays, lattice, i0, "left", q, steps)
            _run_chain(arrays, lattice, i0, "right", r, steps)

    cost = 0.0
    subgrad = 0.0
    for i in range(T):
        shortfall_gap = lattice.d_eff[i] - x
        cost += float(shortfall_gap @ left[i] + moment[i].sum())
        subgrad += float((lattice.depth[i] + 1.0) @ left[i])
    cost *= voll
    subgrad *= -voll / T
    return LatticeSolution(lattice, voll, visit, left, mid, right, moment, cost, subgrad)


def lattice_terminal_cost(x_accumulated: float, forecast: ForecastModel,
                          capacity: float, voll: float,
                          error_steps: list[Step] | None = None) -> float:
    """Expected VOLL cost of the delivery interval for accumulated energy x."""
    supply = float(x_accumulated) / forecast.n_stages
    lat = build_lattice(forecast, capacity, supply)
    return solve_lattice(lat, voll, error_steps).cost


def lattice_terminal_subgradient(x_accumulated: float, forecast: ForecastModel,
                                 capacity: float, voll: float,
                                 error_steps: list[Step] | None = None) -> float:
    """Constrained subgradient of the expected cost in the accumulated energy."""
    supply = float(x_accumulated) / forecast.n_stages
    lat = build_lattice(forecast, capacity, supply)
    return solve_lattice(lat, voll, error_steps).subgradient


def closed_form_b0(x_accumulated, forecast: ForecastModel, voll: float):
    """Expected cost and subgradient without storage (B = 0), in closed form.

    Each stage is an independent newsvendor term; zero-sigma stages take
    their hard limit.  Accepts a scalar or an array of accumulated
    positions and broadcasts.
    """
    x_acc = np.asarray(x_accumulated, dtype=float)
    T = forecast.n_stages
    x = x_acc[..., None] / T
    d = forecast.d_hat
    s = forecast.sigma
    gap = x - d
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(s > 0, gap / np.where(s > 0, s, 1.0), 0.0)
    soft_cost = s * _npdf(z) - gap * ndtr(-z)
    soft_grad = ndtr(-z)
    hard_cost = np.maximum(-gap, 0.0)
    hard_grad = (gap < 0).astype(float)
    cost = voll * np.where(s > 0, soft_cost, hard_cost).sum(axis=-1)
    subgrad = -voll / T * np.where(s > 0, soft_grad, hard_grad).sum(axis=-1)
    if np.isscalar(x_accumulated) or np.ndim(x_accumulated) == 0:
        return float(cost), float(subgrad)
    return cost, subgrad


def node_transition_probs(solution: LatticeSolution, level: int, k: int) -> NodeProbabilities:
    """Recompute one node's exit probabilities from its boundary ancestor.

    Cross-checks the chain recursion: the node's chain is rebuilt as a
    standalone constrained walk starting from the stored ancestor visit
    probability.  ``level`` is 0-based, ``k`` 1-based.
    """
    lat = solution.lattice
    h = int(lat.depth[level][k - 1])
    anc_level, anc_k = level - h, k - h
    p_anc = float(solution.visit[anc_level][anc_k - 1])
    stds, lows, highs = lat.chain(level, k)
    left = p_anc * walk_rectangle_prob(stds, lows, highs, "upper_tail")
    mid = p_anc * walk_rectangle_prob(stds, lows, highs, "interval")
    right = p_anc * walk_rectangle_prob(stds, lows, highs, "lower_tail")
    return NodeProbabilities(visit=left + mid + right, left=left, mid=mid, right=right)


def dump_lattice_csv(solution: LatticeSolution, path) -> None:
    """Write per-node diagnostics, one row per lattice node."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "k", "d_hat_eff", "depth", "p", "p_left", "p_mid", "p_right"])
        for i in range(solution.lattice.n_stages):
            for k in range(1, 2 * i + 2):
                writer.writerow([
                    i + 1, k,
                    f"{solution.lattice.d_eff[i][k - 1]:.12g}",
                    int(solution.lattice.depth[i][k - 1]),
                    f"{solution.visit[i][k - 1]:.12g}",
                    f"{solution.left[i][k - 1]:.12g}",
                    f"{solution.mid[i][k - 1]:.12g}",
                    f"{solution.right[i][k - 1]:.12g}",
                ])
