"""Storage-function design matrices and numeric passivity certificates.

The quadratic storage over a host's infection-set probabilities dissipates
along the propagation dynamics up to a state-dependent gain; the matrices
built here bound that gain. All matrices are indexed by the shared ordering
of realizable nonempty sets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import eig_sym
from .virus import mask_members, popcount


def build_Qi(degree, model) -> np.ndarray:
    """Diagonal entries of the per-host gain matrix for a host of given degree.

    Entry for set S sums, over resident viruses v and subsets R of v's
    competitors, the arrival rate from the prior set (S minus v) union R,
    weighted by 2^(|V minus C_v| - 1); the whole sum scales with degree/6.
    """
    m = model.m
    sets = model.realizable_sets()
    out = np.zeros(len(sets))
    for k, mask in enumerate(sets):
        acc = 0.0
        for v in mask_members(mask):
            comp = model.compete[v]
            weight = 2.0 ** (m - popcount(comp) - 1)
            base = mask & ~(1 << v)
            r = 0
            while True:
                acc += weight * model.lam(base | r, v)
                if r == comp:
                    break
                r = (r - comp) & comp
        out[k] = degree / 6.0 * acc
    return out


def build_Q(model) -> np.ndarray:
    """Neighbor-coupling gain Q = H Lam H^T.

    H is the set-membership 0-1 matrix (row per realizable nonempty set,
    column per virus); Lam_vv averages the arrival rates of virus v over all
    sets not containing it, scaled by 1/12.
    """
    m = model.m
    sets = model.realizable_sets()
    H = np.zeros((len(sets), m))
    for k, mask in enumerate(sets):
        for v in mask_members(mask):
            H[k, v] = 1.0
    lam_diag = np.zeros(m)
    for v in range(m):
        lam_diag[v] = sum(model.lam(s, v) for s in range(1 << m)
                          if not (s >> v) & 1) / 12.0
    return H @ np.diag(lam_diag) @ H.T


def build_Qbar(net, model) -> np.ndarray:
    """Network-level gain: adjacency (x) Q plus the per-host diagonal blocks."""
    Q = build_Q(model)
    nsets = Q.shape[0]
    Qbar = np.kron(net.adjacency, Q)
    for i in range(net.n):
        sl = slice(i * nsets, (i + 1) * nsets)
        Qbar[sl, sl] += np.diag(build_Qi(float(net.degrees[i]), model))
    return Qbar


def passivity_index_bound(net, model):
    """Upper bound on the output-feedback passivity index.

    Returns (rho, per-host array) with rho = max_i mu1(Q_i + |N_i| Q); a
    uniform patch rate above rho removes every virus.
    """
    Q = build_Q(model)
    per_degree = {}
    for d in sorted(set(int(x) for x in net.degrees)):
        M = np.diag(build_Qi(float(d), model)) + d * Q
        per_degree[d] = float(eig_sym(M)[-1])
    per_host = np.array([per_degree[int(d)] for d in net.degrees])
    return float(per_host.max()), per_host


@dataclass(frozen=True)
class DesignMatrices:
    Q: np.ndarray = field(repr=False)
    Qbar: np.ndarray = field(repr=False)
    Qi: np.ndarray = field(repr=False)  # (n, nsets) diagonal entries per host
    rho_bound: float = 0.0
    rho_per_host: np.ndarray = field(repr=False, default=None)


def build_design_matrices(net, model) -> DesignMatrices:
    Q = build_Q(model)
    Qi = np.stack([build_Qi(float(d), model) for d in net.degrees])
    rho, per_host = passivity_index_bound(net, model)
    return DesignMatrices(Q=Q, Qbar=build_Qbar(net, model), Qi=Qi,
                          rho_bound=rho, rho_per_host=per_host)


@dataclass(frozen=True)
class DecrementReport:
    max_violation: float        # against the per-host bound sum x_i'(Q_i+|N_i|Q)x_i
    max_violation_coupled: float  # against the coupled form x' Qbar x
    samples: int
    passed: bool


def storage_rate_terms(x, beta, net, model, system=None, matrices=None):
    """Pieces of the storage decrement at state x (n, nsets) with filter off.

    Returns (lhs, rhs_hostwise, rhs_coupled): the transition-paired storage
    derivative including the patching input term, and the two quadratic
    bounds it must stay below. The pairing treats the clean-state probability
    as part of the storage for infection transitions and the patching action
    as an external input on the infected coordinates.
    """
    if system is None:
        from .meanfield import SubsetSystem
        system = SubsetSystem(net, model)
    if matrices is None:
        matrices = build_design_matrices(net, model)
    x = np.asarray(x, dtype=float)
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (net.n,))
    xv = x @ system.membership
    y = net.adjacency @ xv
    xclean = 1.0 - x.sum(axis=1)

    paired = np.zeros(net.n)
    for s in range(system.nsets):
        for src, v, lam in system.pred[s]:
            src_prob = xclean if src < 0 else x[:, src]
            paired += lam * y[:, v] * (x[:, s] * src_prob - src_prob ** 2)
    u_dot_x = -beta * (x ** 2).sum(axis=1)
    lhs = float(paired.sum() + u_dot_x.sum())

    quad_self = float((matrices.Qi * x * x).sum())
    host_q = np.einsum("is,st,it->i", x, matrices.Q, x)
    rhs_host = quad_self + float((net.degrees * host_q).sum()) + float(u_dot_x.sum())
    cross = float(np.einsum("is,ij,st,jt->", x, net.adjacency, matrices.Q, x))
    rhs_coupled = quad_self + cross + float(u_dot_x.sum())
    return lhs, rhs_host, rhs_coupled


def verify_storage_decrement(states, beta, net, model, tol=1e-8) -> DecrementReport:
    """Max violation of the storage-decrement inequality over sample states.

    `states` is an array (K, n, nsets), e.g. a mean-field trajectory with the
    filter off. PASS means no sample exceeds either quadratic bound by more
    than `tol`.
    """
    from .meanfield import SubsetSystem
    system = SubsetSystem(net, model)
    matrices = build_design_matrices(net, model)
    worst_host = -np.inf
    worst_coupled = -np.inf
    states = np.asarray(states, dtype=float)
    for x in states:
        lhs, rhs_host, rhs_coupled = storage_rate_terms(
            x, beta, net, model, system, matrices)
        worst_host = max(worst_host, lhs - rhs_host)
        worst_coupled = max(worst_coupled, lhs - rhs_coupled)
    return DecrementReport(
        max_violation=float(worst_host),
        max_violation_coupled=float(worst_coupled),
        samples=len(states),
        passed=bool(worst_host <= tol and worst_coupled <= tol),
    )
