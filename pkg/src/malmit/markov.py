"""Exact stochastic simulation of the propagation chain plus a tiny-network
master-equation oracle.

The chain state is one infection bitmask per host together with the per-host
patch rates and the shared filter probability. Event kinds: a neighbor's
packet infects a host, a filtered packet exposes its sender, or a patch
inspection clears (and possibly retunes) a host. Monte-Carlo trials run on
the compiled kernel when available.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse

from . import kernels
from .errors import Extinct, StateSpaceTooLarge
from .integrate import DEFAULT_STEP, rk4_integrate
from .virus import mask_members

PATCH, INFECT, FILTER_DETECT = "patch", "infect", "filter-detect"


@dataclass(frozen=True)
class SystemState:
    masks: np.ndarray          # int32 per-host infection bitmask
    beta: np.ndarray           # per-host patch rate
    q: float = 0.0             # packet filtering probability
    t: float = 0.0

    def copy(self) -> "SystemState":
        return replace(self, masks=self.masks.copy(), beta=self.beta.copy())


@dataclass(frozen=True)
class Event:
    kind: str
    host: int
    virus: int = -1
    neighbor: int = -1
    rate: float = 0.0


def event_rates(state, net, model, clean_inspection=False):
    """Enumerate every enabled event with its rate.

    Infection events are listed per (host, virus, infected neighbor);
    filter detections per (sender, virus, uninfected neighbor). Patch events
    run on infected hosts, and on clean hosts too when `clean_inspection`
    (needed by the non-monotone controller's observations).
    """
    events = []
    masks = state.masks
    for i in range(net.n):
        si = int(masks[i])
        if (si != 0 or clean_inspection) and state.beta[i] > 0.0:
            events.append(Event(PATCH, i, rate=float(state.beta[i])))
        for j in net.neighbors(i):
            sj = int(masks[j])
            for v in range(model.m):
                bit = 1 << v
                if not si & bit and sj & bit:
                    lam = model.lam(si, v)
                    if lam > 0.0:
                        events.append(Event(INFECT, i, v, int(j), lam))
                elif si & bit and not sj & bit and state.q > 0.0:
                    events.append(Event(FILTER_DETECT, i, v, int(j),
                                        state.q * float(model.mu[v])))
    return events


def apply_event(state, event, model, controller=None) -> SystemState:
    """Apply one event (and the active controller's update) to a copy of state."""
    masks = state.masks.copy()
    beta = state.beta.copy()
    q = state.q
    i = event.host
    if event.kind == INFECT:
        masks[i] = model.infect_target(int(masks[i]), event.virus)
        assert model.is_realizable(int(masks[i])), \
            "competing viruses may never share a host"
    elif event.kind == PATCH:
        if masks[i] != 0:
            if controller is not None:
                beta[i] = controller.on_patch_detect(float(beta[i]))
            masks[i] = 0
        elif controller is not None:
            beta[i] = controller.on_patch_clean(float(beta[i]))
    else:  # FILTER_DETECT clears the sender
        if controller is not None:
            q = controller.on_filter_detect(q)
        masks[i] = 0
    return SystemState(masks=masks, beta=beta, q=q, t=state.t)


def gillespie_step(state, net, model, rng, controller=None):
    """One exponential race among the enabled events.

    Returns (new state, event, dt); raises Extinct when nothing is enabled.
    Consumes exactly two uniforms from rng.
    """
    clean = controller is not None and controller.wants_clean_inspection
    events = event_rates(state, net, model, clean_inspection=clean)
    total = 0.0
    for ev in events:
        total += ev.rate
    if total <= 0.0:
        raise Extinct("no enabled events")
    u = rng.random(2)
    dt = -np.log1p(-float(u[0])) / total
    target = float(u[1]) * total
    cum = 0.0
    chosen = events[-1]
    for ev in events:
        cum += ev.rate
        if target < cum:
            chosen = ev
            break
    new = apply_event(state, chosen, model, controller)
    return replace(new, t=state.t + dt), chosen, dt


@dataclass(frozen=True)
class Trajectory:
    """Monte-Carlo aggregate over trials on a fixed sample grid."""

    t: np.ndarray
    frac_any: np.ndarray       # mean over trials of host-averaged indicator
    se_any: np.ndarray
    frac_v: np.ndarray         # (K, m)
    se_v: np.ndarray
    mean_beta: np.ndarray
    se_beta: np.ndarray
    mean_q: np.ndarray
    trials: int
    host_set_mean: np.ndarray = field(default=None, repr=False)  # (K, n, nsets+1)

    def host_marginal(self, i, set_index):
        """Mean indicator of host i being exactly in realizable set #set_index."""
        return self.host_set_mean[:, i, set_index + 1]


def trial_rng(seed, k):
    """Sub-seeded generator for trial k; scheme: SeedSequence(seed, spawn_key=(1+k,))."""
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(entropy=seed, spawn_key=(1 + k,))))


def sample_initial_masks(rng, n, probs):
    """Categorical initial infection: host gets single virus v w.p. probs[v]."""
    probs = np.asarray(probs, dtype=float)
    edges = np.cumsum(probs)
    if edges[-1] > 1.0 + 1e-12:
        raise ValueError("initial per-virus probabilities must sum to at most 1")
    u = rng.random(n)
    masks = np.zeros(n, dtype=np.int32)
    for v in range(len(probs) - 1, -1, -1):
        masks[u < edges[v]] = 1 << v
    return masks


def monte_carlo(net, model, init, beta0, q0=0.0, controller=None, trials=100,
                horizon=1.0, grid=None, seed=0, collect_host_sets=False,
                lane=None, threads=None):
    """Average `trials` independent Gillespie runs on a common grid.

    `init` is either a per-virus probability vector (categorical, exclusive)
    or a callable rng -> int32 masks. Trial k draws its initial state and its
    whole event stream from the sub-seeded generator trial_rng(seed, k), so
    results are reproducible and extending `trials` never perturbs earlier
    trials. `threads` (default: the EXPCTL_THREADS environment variable, else
    1) caps worker concurrency; aggregation always reduces in trial order, so
    results are bit-identical for any thread count.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    if grid is None:
        grid = np.linspace(0.0, horizon, 51)
    grid = np.asarray(grid, dtype=float)
    K = len(grid)
    n, m = net.n, model.m
    indptr, indices = net.csr()
    lam_tab = model.lam_table()
    compete = np.asarray(model.compete, dtype=np.int32)
    beta0 = np.broadcast_to(np.asarray(beta0, dtype=float), (n,)).copy()
    ctrl_code = kernels.CTRL_CODES["none"] if controller is None \
        else kernels.CTRL_CODES[controller.kind]
    alpha = 0.0 if controller is None else controller.alpha
    gamma = 0.0 if controller is None else controller.gamma
    floor = 1e-3 if controller is None else controller.beta_floor

    sets = model.realizable_sets()
    code_of_mask = np.zeros(1 << m, dtype=np.int64)
    for k, mask in enumerate(sets):
        code_of_mask[mask] = k + 1

    sum_any = np.zeros(K)
    sumsq_any = np.zeros(K)
    sum_v = np.zeros((K, m))
    sumsq_v = np.zeros((K, m))
    sum_beta = np.zeros(K)
    sumsq_beta = np.zeros(K)
    sum_q = np.zeros(K)
    host_counts = np.zeros((K, n, len(sets) + 1)) if collect_host_sets else None

    def one_trial(k):
        rng = trial_rng(seed, k)
        if callable(init):
            masks0 = np.asarray(init(rng), dtype=np.int32)
        else:
            masks0 = sample_initial_masks(rng, n, init)
        return kernels.run_trial(
            indptr, indices, lam_tab, model.mu, compete, masks0, beta0,
            q0, ctrl_code, alpha, gamma, floor, grid, rng, lane=lane)

    if threads is None:
        threads = int(os.environ.get("EXPCTL_THREADS", "1"))
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one_trial, range(trials)))
    else:
        results = map(one_trial, range(trials))

    for masks_out, beta_mean, q_out in results:
        any_frac = (masks_out != 0).mean(axis=1)
        sum_any += any_frac
        sumsq_any += any_frac ** 2
        for v in range(m):
            fv = ((masks_out >> v) & 1).mean(axis=1)
            sum_v[:, v] += fv
            sumsq_v[:, v] += fv ** 2
        sum_beta += beta_mean
        sumsq_beta += beta_mean ** 2
        sum_q += q_out
        if collect_host_sets:
            codes = code_of_mask[masks_out]
            for g in range(K):
                np.add.at(host_counts[g], (np.arange(n), codes[g]), 1.0)

    frac_any = sum_any / trials
    frac_v = sum_v / trials
    if trials > 1:
        var_any = np.maximum(sumsq_any / trials - frac_any ** 2, 0.0)
        se_any = np.sqrt(var_any * trials / (trials - 1) / trials)
        var_v = np.maximum(sumsq_v / trials - frac_v ** 2, 0.0)
        se_v = np.sqrt(var_v * trials / (trials - 1) / trials)
        mean_beta = sum_beta / trials
        var_beta = np.maximum(sumsq_beta / trials - mean_beta ** 2, 0.0)
        se_beta = np.sqrt(var_beta * trials / (trials - 1) / trials)
    else:
        se_any = np.zeros(K)
        se_v = np.zeros((K, m))
        se_beta = np.zeros(K)
    return Trajectory(
        t=grid, frac_any=frac_any, se_any=se_any, frac_v=frac_v, se_v=se_v,
        mean_beta=sum_beta / trials, se_beta=se_beta,
        mean_q=sum_q / trials, trials=trials,
        host_set_mean=None if host_counts is None else host_counts / trials)


# --- exact joint-chain oracle ----------------------------------------

MASTER_STATE_CAP = 100_000


def master_equation(net, model, init_dist, beta, q=0.0, horizon=1.0,
                    grid=None, h=DEFAULT_STEP):
    """Exact per-host set marginals of the joint chain on a tiny network.

    init_dist is (n, nsets+1): per-host initial distribution over codes
    (0 = clean, k+1 = realizable set k); hosts start independent. Defenses
    are static here. Returns (grid, marginals (K, n, nsets+1)).

    The joint space has (nsets+1)^n states and is capped; integration uses
    the same fixed-step RK4 as the mean-field engine, and the distribution
    is checked to stay normalized to 1e-8.
    """
    sets = model.realizable_sets()
    ncodes = len(sets) + 1
    n, m = net.n, model.m
    size = ncodes ** n
    if size > MASTER_STATE_CAP:
        raise StateSpaceTooLarge(f"{size} joint states exceeds cap {MASTER_STATE_CAP}")
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (n,))
    init_dist = np.asarray(init_dist, dtype=float)

    mask_of_code = np.array([0] + sets, dtype=np.int64)
    code_of_mask = np.zeros(1 << m, dtype=np.int64)
    for k, mask in enumerate(sets):
        code_of_mask[mask] = k + 1
    place = ncodes ** np.arange(n)

    # host codes for every joint state, (size, n)
    idx = np.arange(size)
    codes = (idx[:, None] // place[None, :]) % ncodes
    masks = mask_of_code[codes]

    rows, cols, vals = [], [], []

    def add(rate_vec, target_idx):
        live = rate_vec > 0
        rows.append(idx[live])
        cols.append(target_idx[live])
        vals.append(rate_vec[live])

    neighbor_sets = [net.neighbors(i) for i in range(n)]
    lam_tab = model.lam_table()
    for i in range(n):
        mi = masks[:, i]
        nbrs = neighbor_sets[i]
        deg = len(nbrs)
        cnt = np.zeros((size, m), dtype=np.int64)
        for j in nbrs:
            for v in range(m):
                cnt[:, v] += (masks[:, j] >> v) & 1
        for v in range(m):
            bit = 1 << v
            has = (mi & bit) != 0
            # infection of host i by virus v
            rate = np.where(~has, cnt[:, v] * lam_tab[mi, v], 0.0)
            tgt_mask = (mi & ~model.compete[v]) | bit
            tgt = idx + (code_of_mask[tgt_mask] - codes[:, i]) * place[i]
            add(rate, tgt)
            # filtered packet from host i exposes it
            if q > 0.0:
                rate = np.where(has, (q * float(model.mu[v])) * (deg - cnt[:, v]), 0.0)
                tgt = idx - codes[:, i] * place[i]
                add(rate, tgt)
        # patching
        rate = np.where(mi != 0, beta[i], 0.0)
        tgt = idx - codes[:, i] * place[i]
        add(rate, tgt)

    rows = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    vals = np.concatenate(vals) if vals else np.zeros(0)
    G = scipy.sparse.coo_matrix((vals, (rows, cols)), shape=(size, size)).tocsr()
    G = G - scipy.sparse.diags(np.asarray(G.sum(axis=1)).ravel())
    GT = G.T.tocsr()

    p0 = np.ones(size)
    for i in range(n):
        p0 *= init_dist[i, codes[:, i]]

    grid, samples = rk4_integrate(lambda t, p: GT @ p, p0, horizon, h=h, grid=grid)
    sums = samples.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-8):
        raise RuntimeError(f"probability mass drifted: max |sum-1| = {np.abs(sums-1).max():.2e}")

    marg = np.zeros((len(grid), n, ncodes))
    for i in range(n):
        for c in range(ncodes):
            sel = codes[:, i] == c
            marg[:, i, c] = samples[:, sel].sum(axis=1)
    return grid, marg


def categorical_init_dist(n, nsets, probs, set_index_of_virus):
    """Per-host code distribution matching sample_initial_masks."""
    probs = np.asarray(probs, dtype=float)
    dist = np.zeros((n, nsets + 1))
    dist[:, 0] = 1.0 - probs.sum()
    for v, p in enumerate(probs):
        dist[:, set_index_of_virus[v] + 1] = p
    return dist
