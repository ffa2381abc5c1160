"""Reflected-Brownian-motion approximation of the delivery interval.

The stored energy behaves like a Brownian motion with drift equal to the
per-stage supply surplus, doubly reflected in [0, B].  Its long-run
boundary push rates give a closed-form approximation of the expected
unserved energy, hence of the terminal cost and its derivative.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Below this argument size the exact expressions for h and h' cancel
# catastrophically; truncated series keep full accuracy there.
_SERIES_CUTOFF = 1e-3


@dataclass(frozen=True)
class RbmParams:
    drift: float        # energy per stage
    volatility: float   # energy per sqrt(stage)
    barrier: float      # capacity B

    def __post_init__(self):
        if self.volatility <= 0:
            raise ValueError("volatility must be positive")
        if self.barrier <= 0:
            raise ValueError("barrier must be positive")


def h_func(x):
    """x / (e^x - 1), continued by 1 at x = 0.  Positive, strictly decreasing."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < _SERIES_CUTOFF
    xs = np.where(small, 1.0, x)
    with np.errstate(over="ignore"):
        exact = np.where(small, 1.0, xs / np.expm1(xs))
    series = 1.0 - x / 2.0 + x * x / 12.0
    out = np.where(small, series, exact)
    return out if out.ndim else float(out)


def h_prime(x):
    """Derivative of h: ((1-x)e^x - 1) / (e^x - 1)^2, continued by -1/2 at 0."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < _SERIES_CUTOFF
    # above ~350 the squared denominator overflows while the true value is
    # below 1e-145, so the exact branch is cut off at its limit of 0
    big = x > 350.0
    xs = np.where(small | big, 1.0, x)
    with np.errstate(invalid="ignore"):   # unselected branches at +-inf
        em1 = np.expm1(xs)
        # (1-x)e^x - 1 rewritten so the cancelling terms subtract directly
        numer = em1 - xs * np.exp(xs)
        exact = numer / (em1 * em1)
        series = -0.5 + x / 6.0 - x**3 / 180.0
        out = np.where(small, series, np.where(big, 0.0, exact))
    return out if out.ndim else float(out)


def rbm_long_run(params: RbmParams) -> tuple[float, float]:
    """Long-run rates of the lower and upper boundary pushes (V up, Q down)."""
    scale = params.volatility**2 / (2.0 * params.barrier)
    y = params.drift / scale
    v_rate = scale * h_func(y)
    q_rate = -scale * h_func(-y)
    return float(v_rate), float(q_rate)


def rbm_density(z, params: RbmParams):
    """Steady-state density of the reflected process on [0, B]."""
    z = np.asarray(z, dtype=float)
    B = params.barrier
    if params.drift == 0.0:
        dens = np.full_like(z, 1.0 / B)
    else:
        a = 2.0 * params.drift / params.volatility**2
        dens = a * np.exp(a * z) / np.expm1(a * B)
    dens = np.where((z < 0.0) | (z > B), 0.0, dens)
    return dens if dens.ndim else float(dens)


def ct_terminal_cost(x_accumulated, d_hat_total: float, sigma_sq: float,
                     capacity: float, voll: float):
    """Approximate expected delivery cost from the long-run push rate.

    ``sigma_sq`` is the interval-total variance of the fluctuation process;
    scaling (B, sigma_sq) together leaves the result unchanged.
    """
    if capacity <= 0 or sigma_sq <= 0:
        raise ValueError("ct approximation needs capacity > 0 and sigma_sq > 0")
    ratio = 2.0 * capacity / sigma_sq
    y = ratio * (np.asarray(x_accumulated, dtype=float) - d_hat_total)
    out = voll / ratio * h_func(y)
    return out if np.ndim(out) else float(out)


def ct_terminal_subgradient(x_accumulated, d_hat_total: float, sigma_sq: float,
                            capacity: float, voll: float):
    """Derivative of the approximate cost in the accumulated position."""
    if capacity <= 0 or sigma_sq <= 0:
        raise ValueError("ct approximation needs capacity > 0 and sigma_sq > 0")
    ratio = 2.0 * capacity / sigma_sq
    y = ratio * (np.asarray(x_accumulated, dtype=float) - d_hat_total)
    out = voll * h_prime(y)
    return out if np.ndim(out) else float(out)


def simulate_reflected_walk(params: RbmParams, dt: float, n_steps: int,
                            rng: np.random.Generator,
                            start: float | None = None) -> tuple[float, float]:
    """Simulate the doubly reflected walk; returns (V_t/t, Q_t/t).

    Each Gaussian step is augmented with the Brownian-bridge extremum over
    the step, so boundary pushes missed between sample points are counted;
    plain endpoint reflection underestimates the push rates by O(sqrt(dt)).
    Simultaneous hits of both barriers within one step are ignored, which
    is negligible whenever the barrier width is many step sizes.  The
    start level defaults to a draw from the steady-state density to
    suppress the initial transient.
    """
    B = params.barrier
    if start is None:
        # inverse-CDF draw from the steady-state density
        u = rng.random()
        if params.drift == 0.0:
            b = u * B
        else:
            a = 2.0 * params.drift / params.volatility**2
            b = np.log1p(u * np.expm1(a * B)) / a
    else:
        b = float(start)
    step_var = params.volatility**2 * dt
    incs = params.drift * dt + np.sqrt(step_var) * rng.standard_normal(n_steps)
    bridge = -2.0 * step_var * np.log(rng.random(n_steps))  # for extremum draws
    v_total = 0.0
    q_total = 0.0
    b = float(b)
    for inc, r in zip(incs.tolist(), bridge.tolist()):
        c = b + inc
        gap = inc * inc + r
        lo = 0.5 * (b + c - math.sqrt(gap))   # bridge minimum over the step
        hi = 0.5 * (b + c + math.sqrt(gap))   # bridge maximum (same draw; one
        # barrier at most is reachable per step, so reusing r is harmless)
        if lo < 0.0:
            v_total -= lo
            c -= lo
            if c > B:       # pushed across after touching the floor
                q_total += c - B
                c = B
        elif hi > B:
            q_total += hi - B
            c -= hi - B
            if c < 0.0:
                v_total -= c
                c = 0.0
        b = c
    t_total = dt * n_steps
    return v_total / t_total, -q_total / t_total
