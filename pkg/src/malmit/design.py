"""Minimum-cost static patch rates under the semidefinite removal condition.

The feasibility condition asks the block-diagonal patch matrix to dominate
the network gain matrix by a decay margin; cost minimization runs a projected
subgradient method on the largest-eigenvalue constraint, so no external SDP
solver is needed. Certification always goes back through feasible().
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NotConverged
from .integrate import DEFAULT_STEP
from .linalg import eig_sym
from .meanfield import SubsetSystem
from .passivity import build_Qbar

FEAS_TOL = 1e-9


@dataclass(frozen=True)
class DesignProblem:
    Qbar: np.ndarray = field(repr=False)
    eps: float = 0.1
    costs: object = None     # (n,) linear coefficients, or an object with
    #                          value(beta) / subgradient(beta)
    n: int = 0

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("decay rate eps must be positive")
        if self.n <= 0 or self.Qbar.shape[0] % self.n:
            raise ValueError("host count must divide the matrix dimension")
        if self.costs is None:
            object.__setattr__(self, "costs", np.ones(self.n))
        if isinstance(self.costs, np.ndarray) and np.any(self.costs < 0):
            raise ValueError("cost coefficients must be nonnegative")

    @property
    def nsets(self) -> int:
        return self.Qbar.shape[0] // self.n

    def cost_value(self, beta) -> float:
        if hasattr(self.costs, "value"):
            return float(self.costs.value(beta))
        return float(np.asarray(self.costs) @ beta)

    def cost_subgradient(self, beta) -> np.ndarray:
        if hasattr(self.costs, "subgradient"):
            return np.asarray(self.costs.subgradient(beta), dtype=float)
        return np.asarray(self.costs, dtype=float)


class PiecewiseLinearCost:
    """Convex per-host cost max_k(slope_k * beta + intercept_k)."""

    def __init__(self, pieces):
        # pieces[i] = list of (slope, intercept) for host i
        self.pieces = [sorted(p) for p in pieces]

    def _host(self, i, b):
        vals = [s * b + c for s, c in self.pieces[i]]
        k = int(np.argmax(vals))
        return vals[k], self.pieces[i][k][0]

    def value(self, beta):
        return sum(self._host(i, b)[0] for i, b in enumerate(beta))

    def subgradient(self, beta):
        return np.array([self._host(i, b)[1] for i, b in enumerate(beta)])


@dataclass(frozen=True)
class DesignResult:
    beta: np.ndarray
    cost: float
    margin: float
    feasible: bool
    converged: bool
    iterations: int


def _block_diag_beta(beta, nsets) -> np.ndarray:
    return np.repeat(np.asarray(beta, dtype=float), nsets)


def feasible(beta, Qbar, eps, n):
    """(ok, margin): margin is the smallest eigenvalue of B - Qbar - eps I."""
    nsets = Qbar.shape[0] // n
    M = np.diag(_block_diag_beta(beta, nsets)) - Qbar - eps * np.eye(Qbar.shape[0])
    margin = float(eig_sym(M)[0])
    return margin >= -FEAS_TOL, margin


def uniform_rate(net, model, eps) -> float:
    """Smallest uniform patch rate passing feasible(): mu1(Qbar) + eps."""
    Qbar = build_Qbar(net, model)
    return float(eig_sym(Qbar)[-1]) + eps


def design_min_cost(problem: DesignProblem, max_iters=160, cost_step=None,
                    stall_window=50, stall_rtol=1e-6) -> DesignResult:
    """Projected subgradient descent on cost subject to the eigenvalue constraint.

    Alternates Polyak feasibility restoration steps (along the squared
    block sums of the top eigenvector, the exact subgradient of the largest
    eigenvalue in the patch rates) with cost-descent steps of diminishing
    size. Starts from the uniform feasible point, keeps the best feasible
    iterate, and certifies it through feasible() before returning.

    Raises NotConverged only when no feasible iterate was ever seen.
    """
    Qbar, eps, n, nsets = problem.Qbar, problem.eps, problem.n, problem.nsets
    dim = Qbar.shape[0]
    shifted = Qbar + eps * np.eye(dim)
    beta = np.full(n, float(eig_sym(Qbar)[-1]) + eps)
    best = None
    best_cost = np.inf
    last_improve = 0
    if cost_step is None:
        cost_step = 0.05 * float(beta[0])

    it = 0
    stalled = False
    for it in range(1, max_iters + 1):
        M = shifted - np.diag(_block_diag_beta(beta, nsets))
        vals, vecs = eig_sym(M, vectors=True)
        g = float(vals[-1])
        if g <= FEAS_TOL:
            cost = problem.cost_value(beta)
            if cost < best_cost * (1.0 - 1e-12):
                if best is None or best_cost - cost > stall_rtol * max(abs(best_cost), 1.0):
                    last_improve = it
                best = beta.copy()
                best_cost = cost
            step = cost_step / np.sqrt(it)
            beta = np.maximum(beta - step * problem.cost_subgradient(beta), 0.0)
        else:
            # Polyak restoration along the exact eigenvalue subgradient
            v = vecs[:, -1]
            d = (v ** 2).reshape(n, nsets).sum(axis=1)   # -dg/dbeta_i
            denom = float(d @ d)
            if denom <= 0.0:
                break
            beta = np.maximum(beta + (g / denom) * d, 0.0)
        if best is not None and it - last_improve >= stall_window:
            stalled = True
            break

    if best is None:
        raise NotConverged(f"no feasible iterate within {max_iters} iterations")
    ok, margin = feasible(best, Qbar, eps, n)
    return DesignResult(beta=best, cost=best_cost, margin=margin,
                        feasible=ok, converged=bool(ok and stalled),
                        iterations=it)


@dataclass(frozen=True)
class DecayReport:
    passed: bool
    max_excess: float        # worst norm minus envelope value, <= 0 when passed
    first_violation_t: float # nan when none
    horizon: float


def verify_exponential_decay(net, model, beta, eps, x0, horizon,
                             h=DEFAULT_STEP, grid=None) -> DecayReport:
    """Check ||x(t)||_2 <= sqrt(n) exp(-eps t) (1 + 1e-6) along the subset dynamics."""
    system = SubsetSystem(net, model)
    traj = system.integrate(x0, beta, q=0.0, horizon=horizon, h=h, grid=grid)
    norms = np.sqrt((traj.x.reshape(len(traj.t), -1) ** 2).sum(axis=1))
    envelope = np.sqrt(net.n) * np.exp(-eps * traj.t) * (1.0 + 1e-6)
    excess = norms - envelope
    bad = np.nonzero(excess > 0)[0]
    return DecayReport(
        passed=bad.size == 0,
        max_excess=float(excess.max()),
        first_violation_t=float(traj.t[bad[0]]) if bad.size else float("nan"),
        horizon=float(horizon),
    )
