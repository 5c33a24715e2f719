"""Deterministic mean-field dynamics under the independence approximation.

Two levels are provided: the full per-subset probabilities x_i^S over
realizable nonempty sets, and the scalar any-virus aggregate whose dynamics
upper-bound the subset sum. The aggregate comes in an open form (fed by the
per-virus marginals) and a closed conservative form that replaces each
marginal by the any-virus probability; the closed form is what the adaptive
patching co-simulation uses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .integrate import DEFAULT_STEP, rk4_integrate
from .virus import mask_members


@dataclass(frozen=True)
class MeanFieldTrajectory:
    t: np.ndarray
    x: np.ndarray  # (K, n, nsets)
    membership: np.ndarray = None  # (nsets, m) set-membership indicator

    @property
    def xbar(self) -> np.ndarray:
        """Any-virus probability per host, (K, n)."""
        return self.x.sum(axis=2)

    @property
    def xbar_v(self) -> np.ndarray:
        """Per-virus marginals, (K, n, m)."""
        return self.x @ self.membership

    @property
    def any_frac(self) -> np.ndarray:
        """Host-averaged any-virus probability, (K,)."""
        return self.x.sum(axis=2).mean(axis=1)


class SubsetSystem:
    """Precomputed index tables for the subset dynamics on one (net, model)."""

    def __init__(self, net, model):
        self.net = net
        self.model = model
        self.sets = model.realizable_sets()
        self.nsets = len(self.sets)
        index = model.set_index()
        m = model.m
        # membership[s, v] = 1 if virus v in set s
        self.membership = np.zeros((self.nsets, m))
        for k, mask in enumerate(self.sets):
            for v in mask_members(mask):
                self.membership[k, v] = 1.0
        # inflow: (set, source set or -1 for clean, virus, rate)
        self.pred = []
        for mask in self.sets:
            rows = []
            for prior, v in model.predecessors(mask):
                src = -1 if prior == 0 else index[prior]
                rows.append((src, v, model.lam(prior, v)))
            self.pred.append(rows)
        # outflow by further infection: (virus, rate) for v not in S
        self.out = []
        for mask in self.sets:
            self.out.append([(v, model.lam(mask, v))
                             for v in range(m) if not (mask >> v) & 1])
        # filtering outflow: packet rates of resident viruses
        self.resident_mu = []
        for mask in self.sets:
            self.resident_mu.append([(v, float(model.mu[v]))
                                     for v in mask_members(mask)])
        self.adjacency = net.adjacency
        self.deg = net.degrees.astype(float)

    def derivative(self, x, beta, q=0.0):
        """Time derivative of x (n, nsets) under patch rates beta and filter q."""
        xv = x @ self.membership                 # per-virus marginals (n, m)
        y = self.adjacency @ xv                  # neighbor marginal sums (n, m)
        xclean = 1.0 - x.sum(axis=1)
        dx = np.empty_like(x)
        for s in range(self.nsets):
            acc = -beta * x[:, s]
            for src, v, lam in self.pred[s]:
                src_prob = xclean if src < 0 else x[:, src]
                acc = acc + lam * src_prob * y[:, v]
            drain = 0.0
            for v, lam in self.out[s]:
                drain = drain + lam * y[:, v]
            if q > 0.0:
                for v, mu_v in self.resident_mu[s]:
                    drain = drain + (q * mu_v) * (self.deg - y[:, v])
            dx[:, s] = acc - x[:, s] * drain
        return dx

    def integrate(self, x0, beta, q=0.0, horizon=1.0, h=DEFAULT_STEP, grid=None):
        """Integrate the subset dynamics with static defenses."""
        n = self.net.n
        beta = np.broadcast_to(np.asarray(beta, dtype=float), (n,))
        shape = (n, self.nsets)

        def field(t, flat):
            return self.derivative(flat.reshape(shape), beta, q).reshape(-1)

        grid, samples = rk4_integrate(
            field, np.asarray(x0, dtype=float).reshape(-1), horizon, h=h,
            grid=grid, post_step=lambda y: np.clip(y, 0.0, 1.0),
            guard_box=(-0.01, 1.01))
        return MeanFieldTrajectory(t=grid, x=samples.reshape(len(grid), *shape),
                                   membership=self.membership)


def subset_derivative(x, net, model, beta, q=0.0):
    """One-shot evaluation of the subset dynamics derivative."""
    return SubsetSystem(net, model).derivative(
        np.asarray(x, dtype=float), np.broadcast_to(np.asarray(beta, dtype=float), (net.n,)), q)


def aggregate_derivative(xbar, xbar_v, net, model, beta):
    """Any-virus upper-bound dynamics fed by the per-virus marginals."""
    lam0 = np.array([model.lam(0, v) for v in range(model.m)])
    inflow = (net.adjacency @ np.asarray(xbar_v, dtype=float)) @ lam0
    return (1.0 - xbar) * inflow - beta * xbar


def aggregate_closed_derivative(xbar, net, lambda_hat, beta):
    """Self-contained conservative closure: marginals replaced by any-virus."""
    return (1.0 - xbar) * lambda_hat * (net.adjacency @ xbar) - beta * xbar


def integrate_aggregate(net, model, xbar0, beta, horizon, h=DEFAULT_STEP, grid=None):
    """Integrate the closed aggregate dynamics with static patch rates."""
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (net.n,))
    lam_hat = model.lambda_hat

    def field(t, y):
        return aggregate_closed_derivative(y, net, lam_hat, beta)

    grid, samples = rk4_integrate(
        field, np.asarray(xbar0, dtype=float), horizon, h=h, grid=grid,
        post_step=lambda y: np.clip(y, 0.0, 1.0), guard_box=(-0.01, 1.01))
    return grid, samples
