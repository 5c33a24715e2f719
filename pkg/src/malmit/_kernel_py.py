"""Pure-Python implementations of the hot kernels.

Fallback lane used when the compiled extension is unavailable. The event
loop mirrors the extension's enumeration order and floating-point operation
order exactly, so both lanes produce bit-identical trajectories for the same
seed; tests rely on that.
"""

from __future__ import annotations

import math

import numpy as np

# controller codes shared with the compiled kernel
CTRL_NONE = 0
CTRL_MONOTONE = 1
CTRL_NONMONOTONE = 2
CTRL_FILTER = 3
CTRL_JOINT = 4


def run_trial(indptr, indices, lam_tab, mu, compete, masks0, beta0, q0,
              controller, alpha, gamma, beta_floor, grid, rng):
    """One Gillespie trajectory sampled on `grid`.

    Returns (masks [K,n] int32, host-mean patch rate [K], filter prob [K]).
    Consumes exactly two uniforms per event from `rng`.
    """
    n = len(masks0)
    m = len(mu)
    K = len(grid)
    indptr = [int(x) for x in indptr]
    indices = [int(x) for x in indices]
    lam = [[float(lam_tab[s, v]) for v in range(m)] for s in range(lam_tab.shape[0])]
    mu = [float(x) for x in mu]
    compete = [int(x) for x in compete]
    masks = [int(x) for x in masks0]
    beta = [float(x) for x in beta0]
    q = float(q0)
    grid_l = [float(x) for x in grid]

    masks_out = np.zeros((K, n), dtype=np.int32)
    beta_out = np.zeros(K)
    q_out = np.zeros(K)

    def record(g):
        masks_out[g, :] = masks
        acc = 0.0
        for b in beta:
            acc += b
        beta_out[g] = acc / n
        q_out[g] = q

    clean_patch = controller == CTRL_NONMONOTONE
    ev_kind = []
    ev_host = []
    ev_virus = []
    ev_rate = []

    t = 0.0
    gi = 0
    while gi < K:
        del ev_kind[:], ev_host[:], ev_virus[:], ev_rate[:]
        total = 0.0
        for i in range(n):
            si = masks[i]
            bi = beta[i]
            if (si != 0 or clean_patch) and bi > 0.0:
                ev_kind.append(0)
                ev_host.append(i)
                ev_virus.append(-1)
                ev_rate.append(bi)
                total += bi
            cnt = [0] * m
            deg = indptr[i + 1] - indptr[i]
            for jj in range(indptr[i], indptr[i + 1]):
                sj = masks[indices[jj]]
                for v in range(m):
                    if (sj >> v) & 1:
                        cnt[v] += 1
            for v in range(m):
                if not (si >> v) & 1:
                    k = cnt[v]
                    if k > 0:
                        r = k * lam[si][v]
                        if r > 0.0:
                            ev_kind.append(1)
                            ev_host.append(i)
                            ev_virus.append(v)
                            ev_rate.append(r)
                            total += r
                elif q > 0.0:
                    k = deg - cnt[v]
                    if k > 0:
                        r = (q * mu[v]) * k
                        ev_kind.append(2)
                        ev_host.append(i)
                        ev_virus.append(v)
                        ev_rate.append(r)
                        total += r

        if total <= 0.0:
            while gi < K:
                record(gi)
                gi += 1
            break

        u = rng.random(2)
        t_next = t + (-math.log(1.0 - float(u[0])) / total)
        while gi < K and grid_l[gi] < t_next:
            record(gi)
            gi += 1
        if gi >= K:
            break

        target = float(u[1]) * total
        cum = 0.0
        chosen = len(ev_rate) - 1
        for e in range(len(ev_rate)):
            cum += ev_rate[e]
            if target < cum:
                chosen = e
                break
        kind = ev_kind[chosen]
        i = ev_host[chosen]
        if kind == 0:
            if masks[i] != 0:
                if controller in (CTRL_MONOTONE, CTRL_NONMONOTONE, CTRL_JOINT):
                    beta[i] = beta[i] + alpha / beta[i]
                masks[i] = 0
            else:
                nb = beta[i] - gamma / beta[i]
                beta[i] = nb if nb > beta_floor else beta_floor
        elif kind == 1:
            v = ev_virus[chosen]
            masks[i] = (masks[i] & ~compete[v]) | (1 << v)
        else:
            if controller in (CTRL_FILTER, CTRL_JOINT):
                q = q + gamma / q
                if q > 1.0:
                    q = 1.0
            masks[i] = 0
        t = t_next

    return masks_out, beta_out, q_out


def jacobi_eigh(M, need_vectors):
    """Cyclic Jacobi sweeps on a symmetric matrix.

    Returns (unsorted eigenvalue array, rotation product or None, sweeps).
    Sweeps run until the off-diagonal Frobenius norm drops below 1e-12 times
    the Frobenius norm of the input.
    """
    A = np.array(M, dtype=float)
    n = A.shape[0]
    V = np.eye(n) if need_vectors else None
    norm = math.sqrt(float((A * A).sum()))
    if norm == 0.0 or n == 1:
        return np.diag(A).copy(), V, 0
    tol = 1e-12 * norm
    skip = tol / (n * n)
    sweeps = 0
    for sweeps in range(1, 61):
        off2 = float((A * A).sum() - (np.diag(A) ** 2).sum())
        if math.sqrt(max(off2, 0.0)) <= tol:
            sweeps -= 1
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= skip:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = (1.0 if theta >= 0.0 else -1.0) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                app, aqq = A[p, p], A[q, q]
                row_p = A[p, :].copy()
                row_q = A[q, :].copy()
                A[p, :] = c * row_p - s * row_q
                A[q, :] = s * row_p + c * row_q
                col_p = A[:, p].copy()
                col_q = A[:, q].copy()
                A[:, p] = c * col_p - s * col_q
                A[:, q] = s * col_p + c * col_q
                A[p, p] = app - t * apq
                A[q, q] = aqq + t * apq
                A[p, q] = 0.0
                A[q, p] = 0.0
                if need_vectors:
                    vp = V[:, p].copy()
                    vq = V[:, q].copy()
                    V[:, p] = c * vp - s * vq
                    V[:, q] = s * vp + c * vq
    return np.diag(A).copy(), V, sweeps
