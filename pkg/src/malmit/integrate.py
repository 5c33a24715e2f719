"""Fixed-step classical RK4 with grid sampling by linear interpolation.

One integrator serves the mean-field dynamics, the exact master equation,
and the controller co-simulations, so a single set of step-size tests covers
all of them. Fixed step keeps trajectories bit-reproducible.
"""

from __future__ import annotations

import numpy as np

from .errors import StepTooLarge

DEFAULT_STEP = 1e-3


def rk4_integrate(f, y0, horizon, h=DEFAULT_STEP, grid=None, post_step=None,
                  guard_box=None):
    """Integrate y' = f(t, y) from t=0 to `horizon`.

    f         : callable (t, y) -> dy/dt, vectorized over the flat state.
    grid      : sample times in [0, horizon]; defaults to 201 even points.
    post_step : optional state projection applied after every step (clamping).
    guard_box : optional (lo, hi); if any pre-projection coordinate leaves
                [lo, hi] the step is declared unstable and StepTooLarge raised.

    Returns (grid, samples) with samples[k] the state at grid[k].
    """
    if h <= 0:
        raise ValueError("step must be positive")
    y = np.array(y0, dtype=float).copy()
    if grid is None:
        grid = np.linspace(0.0, horizon, 201)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    if grid[0] < 0 or grid[-1] > horizon + 1e-12:
        raise ValueError("grid must lie in [0, horizon]")

    samples = np.empty((len(grid), y.size))
    gi = 0
    t = 0.0
    prev_t, prev_y = t, y.copy()
    while gi < len(grid) and grid[gi] <= t + 1e-15:
        samples[gi] = y
        gi += 1

    n_steps = int(np.ceil(horizon / h - 1e-9))
    for k in range(n_steps):
        step = min(h, horizon - t)
        if step <= 0:
            break
        k1 = f(t, y)
        k2 = f(t + 0.5 * step, y + 0.5 * step * k1)
        k3 = f(t + 0.5 * step, y + 0.5 * step * k2)
        k4 = f(t + step, y + step * k3)
        prev_t, prev_y = t, y.copy()
        y = y + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = t + step
        if guard_box is not None:
            lo, hi = guard_box
            if np.any(y < lo) or np.any(y > hi):
                raise StepTooLarge(
                    f"state left [{lo},{hi}] at t={t:.6g}; halve the step")
        if post_step is not None:
            y = post_step(y)
        while gi < len(grid) and grid[gi] <= t + 1e-12:
            # linear interpolation between the bracketing steps
            if grid[gi] <= prev_t:
                samples[gi] = prev_y
            else:
                w = (grid[gi] - prev_t) / (t - prev_t)
                samples[gi] = (1.0 - w) * prev_y + w * y
            gi += 1
    while gi < len(grid):
        samples[gi] = y
        gi += 1
    return grid, samples
