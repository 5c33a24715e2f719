"""Adaptive patching and filtering laws, in ODE and event-driven forms.

Each law exists twice: a derivative used when co-integrating with the
mean-field dynamics, and an event hook driven by detections in the Gillespie
engine. The event form increments a parameter by gain/parameter so that its
expected drift matches the ODE form; controllers observe only detections,
never the latent probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MultiVirusUnsupported
from .integrate import DEFAULT_STEP, rk4_integrate
from .linalg import hurwitz  # re-exported; used with linearized_jacobian
from .meanfield import SubsetSystem, aggregate_closed_derivative

__all__ = [
    "ControllerConfig", "monotone_patch_deriv", "monotone_patch_on_event",
    "nonmonotone_patch_deriv", "nonmonotone_fixed_point",
    "nonmonotone_patch_on_event", "filter_deriv", "filter_on_event",
    "linearized_jacobian", "hurwitz", "integrate_controlled",
    "ControlledTrajectory", "monotone_storage", "monotone_storage_rate",
    "aggregate_passivity_gap",
]

PATCH_KINDS = ("monotone", "nonmonotone", "joint")
FILTER_KINDS = ("filter", "joint")


@dataclass(frozen=True)
class ControllerConfig:
    """Gains and guards for one adaptive law.

    alpha raises a patch rate on each detection; gamma lowers it on clean
    inspections (non-monotone law) or raises the filter probability on each
    filtered detection. beta_floor keeps the event-form division by beta
    bounded; q_cap is the probability ceiling.
    """

    kind: str
    alpha: float = 0.0
    gamma: float = 0.0
    beta_floor: float = 1e-3
    q_cap: float = 1.0

    def __post_init__(self):
        if self.kind not in ("none",) + PATCH_KINDS + FILTER_KINDS:
            raise ValueError(f"unknown controller kind {self.kind!r}")
        if self.kind in PATCH_KINDS and self.alpha <= 0:
            raise ValueError("patch laws need alpha > 0")
        if self.kind in ("nonmonotone",) + FILTER_KINDS and self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.kind in PATCH_KINDS and self.beta_floor <= 0:
            raise ValueError("the event form divides by beta; need beta_floor > 0")

    @property
    def wants_clean_inspection(self) -> bool:
        return self.kind == "nonmonotone"

    # event hooks used by the Gillespie engine -------------------------
    def on_patch_detect(self, beta_i: float) -> float:
        if self.kind in PATCH_KINDS:
            return beta_i + self.alpha / beta_i
        return beta_i

    def on_patch_clean(self, beta_i: float) -> float:
        if self.kind == "nonmonotone":
            return max(beta_i - self.gamma / beta_i, self.beta_floor)
        return beta_i

    def on_filter_detect(self, q: float) -> float:
        if self.kind in FILTER_KINDS:
            return min(q + self.gamma / q, self.q_cap)
        return q


# --- law primitives ---------------------------------------------------

def monotone_patch_deriv(xbar, alpha):
    """Patch-rate growth proportional to the host's any-virus probability."""
    return alpha * np.asarray(xbar, dtype=float)


def monotone_patch_on_event(beta_i, alpha):
    """Detection increment alpha/beta using the pre-update rate."""
    return beta_i + alpha / beta_i


def nonmonotone_patch_deriv(x, alpha, gamma, beta=None, beta_floor=1e-3):
    """Single-virus law: grow on infection mass, shrink on clean mass.

    The positive-part clamp is the projection that keeps the patch rate at
    its floor: the raw drift alpha*x - gamma*(1-x) applies whenever beta sits
    above beta_floor (clean inspections keep decrementing there, matching the
    event form), and only its positive part when beta is at the boundary.
    With beta omitted the rate is treated as at the floor, giving the
    conservative clamped form.
    """
    x = np.asarray(x, dtype=float)
    raw = alpha * x - gamma * (1.0 - x)
    clamped = np.maximum(raw, 0.0)
    if beta is None:
        return clamped
    return np.where(np.asarray(beta) <= beta_floor, clamped, raw)


def nonmonotone_fixed_point(alpha, gamma, lam, degree):
    """Interior equilibrium (x*, beta*) of the single-virus non-monotone loop."""
    x_star = gamma / (alpha + gamma)
    beta_star = alpha / (alpha + gamma) * degree * lam
    return x_star, beta_star


def nonmonotone_patch_on_event(beta_i, clean, alpha, gamma, beta_floor=1e-3):
    if clean:
        return max(beta_i - gamma / beta_i, beta_floor)
    return beta_i + alpha / beta_i


def filter_deriv(xbar_v, net, model, q, gamma):
    """Filter-probability growth at the rate of detectable malware traffic.

    Sums mu_v * (x_i (1-x_j) + x_j (1-x_i)) per edge over the per-virus
    marginals; zero once q has reached 1 (a fully infected neighborhood sends
    no packets to uninfected hosts, so the law can stall there by design).
    """
    if q >= 1.0:
        return 0.0
    xv = np.asarray(xbar_v, dtype=float)
    total = 0.0
    for v in range(model.m):
        col = xv[:, v]
        total += float(model.mu[v]) * float(col @ (net.adjacency @ (1.0 - col)))
    return gamma * total


def filter_on_event(q, gamma, cap=1.0):
    """Detection increment gamma/q, capped at 1."""
    return min(q + gamma / q, cap)


def linearized_jacobian(net, alpha, gamma, lam):
    """Jacobian of the single-virus non-monotone loop at its interior fixed point.

    Block structure [[Abar, -gamma/(alpha+gamma) I], [(alpha+gamma) I, 0]]
    with Abar having -|N_i| lam on the diagonal and lam*alpha/(alpha+gamma)
    on adjacent pairs.
    """
    n = net.n
    abar = (lam * alpha / (alpha + gamma)) * net.adjacency.copy()
    abar[np.diag_indices(n)] = -net.degrees * lam
    top = np.hstack([abar, -(gamma / (alpha + gamma)) * np.eye(n)])
    bottom = np.hstack([(alpha + gamma) * np.eye(n), np.zeros((n, n))])
    return np.vstack([top, bottom])


# --- co-simulation with the mean-field dynamics -----------------------

@dataclass(frozen=True)
class ControlledTrajectory:
    t: np.ndarray
    x: np.ndarray        # (K, n, nsets) subset probabilities; aggregate runs
    #                      store the any-virus probability as a single "set"
    beta: np.ndarray     # (K, n)
    q: np.ndarray        # (K,)
    membership: np.ndarray = field(repr=False, default=None)

    @property
    def xbar(self) -> np.ndarray:
        return self.x.sum(axis=2)

    @property
    def xbar_v(self) -> np.ndarray:
        return self.x @ self.membership

    @property
    def mean_beta(self) -> np.ndarray:
        return self.beta.mean(axis=1)


def integrate_controlled(net, model, x0, beta0, config, q0=0.0,
                         dynamics="subset", horizon=10.0, h=DEFAULT_STEP,
                         grid=None):
    """Co-integrate the mean-field state with an adaptive law.

    dynamics="subset" evolves the full set probabilities (required for the
    filtering laws, whose observation is per-virus traffic); "aggregate"
    evolves the closed any-virus upper bound (the monotone patching analysis
    setting). The non-monotone law insists on a single virus.
    """
    n = net.n
    kind = config.kind
    if kind == "nonmonotone" and model.m != 1:
        raise MultiVirusUnsupported("non-monotone patching is a single-virus law")
    if dynamics == "aggregate" and kind in FILTER_KINDS:
        raise ValueError("filtering needs per-virus marginals; use subset dynamics")
    beta0 = np.broadcast_to(np.asarray(beta0, dtype=float), (n,)).astype(float)
    if kind in PATCH_KINDS and np.any(beta0 < config.beta_floor):
        raise ValueError("initial patch rates must not start below beta_floor")
    if kind in FILTER_KINDS and not 0.0 < q0 <= 1.0:
        raise ValueError("filter laws need q(0) in (0, 1]")

    system = SubsetSystem(net, model)
    if dynamics == "aggregate":
        nsets = 1
        membership = np.ones((1, model.m))
        x0_flat = np.asarray(x0, dtype=float).reshape(n, -1).sum(axis=1)
    elif dynamics == "subset":
        nsets = system.nsets
        membership = system.membership
        x0_flat = np.asarray(x0, dtype=float).reshape(n, nsets)
    else:
        raise ValueError(f"unknown dynamics {dynamics!r}")

    dim_x = n * nsets
    y0 = np.concatenate([np.ravel(x0_flat), beta0, [q0]])
    lam_hat = model.lambda_hat

    def field_fn(t, y):
        x = y[:dim_x].reshape(n, nsets)
        beta = y[dim_x:dim_x + n]
        q = y[-1]
        if dynamics == "aggregate":
            dx = aggregate_closed_derivative(x[:, 0], net, lam_hat, beta)[:, None]
            xbar = x[:, 0]
        else:
            dx = system.derivative(x, beta, q if kind in FILTER_KINDS else q0)
            xbar = x.sum(axis=1)
        if kind in ("monotone", "joint"):
            dbeta = monotone_patch_deriv(xbar, config.alpha)
        elif kind == "nonmonotone":
            dbeta = nonmonotone_patch_deriv(xbar, config.alpha, config.gamma,
                                            beta=beta,
                                            beta_floor=config.beta_floor)
        else:
            dbeta = np.zeros(n)
        if kind in FILTER_KINDS:
            dq = filter_deriv(x @ membership, net, model, q, config.gamma)
        else:
            dq = 0.0
        return np.concatenate([dx.reshape(-1), dbeta, [dq]])

    def clamp(y):
        y[:dim_x] = np.clip(y[:dim_x], 0.0, 1.0)
        if kind in PATCH_KINDS:
            np.maximum(y[dim_x:dim_x + n], config.beta_floor,
                       out=y[dim_x:dim_x + n])
        y[-1] = min(max(y[-1], 0.0), config.q_cap)
        return y

    grid, samples = rk4_integrate(field_fn, y0, horizon, h=h, grid=grid,
                                  post_step=clamp)
    K = len(grid)
    return ControlledTrajectory(
        t=grid,
        x=samples[:, :dim_x].reshape(K, n, nsets),
        beta=samples[:, dim_x:dim_x + n],
        q=samples[:, -1],
        membership=membership,
    )


# --- storage certificates for the adaptive laws -----------------------

def monotone_storage(xbar, beta, net, lambda_hat, alpha):
    """Joint storage: infection energy plus the patch-rate deficit energy."""
    deficit = np.maximum(net.degrees * lambda_hat - beta, 0.0)
    return 0.5 * float((np.asarray(xbar) ** 2).sum()) \
        + float((deficit ** 2).sum()) / (2.0 * alpha)


def monotone_storage_rate(xbar, beta, net, lambda_hat, alpha):
    """d/dt of the joint storage along the closed aggregate + monotone law."""
    xbar = np.asarray(xbar, dtype=float)
    dx = aggregate_closed_derivative(xbar, net, lambda_hat, beta)
    dbeta = monotone_patch_deriv(xbar, alpha)
    gamma_grad = np.where(beta <= net.degrees * lambda_hat,
                          -(net.degrees * lambda_hat - beta) / alpha, 0.0)
    return float(xbar @ dx) + float(gamma_grad @ dbeta)


def aggregate_passivity_gap(xbar, beta, net, lambda_hat):
    """d/dt(infection energy) minus its passivity budget; nonpositive when passive."""
    xbar = np.asarray(xbar, dtype=float)
    dx = aggregate_closed_derivative(xbar, net, lambda_hat, beta)
    budget = float(((net.degrees * lambda_hat - beta) * xbar ** 2).sum())
    return float(xbar @ dx) - budget
