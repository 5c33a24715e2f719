# cython: language_level=3
"""Compiled hot kernels: Gillespie event loop and cyclic Jacobi sweeps.

Must stay operation-for-operation identical to _kernel_py so both lanes
give bit-identical event sequences for the same RNG stream.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, log, sqrt

cnp.import_array()

CTRL_NONE = 0
CTRL_MONOTONE = 1
CTRL_NONMONOTONE = 2
CTRL_FILTER = 3
CTRL_JOINT = 4


def run_trial(cnp.int32_t[::1] indptr, cnp.int32_t[::1] indices,
              double[:, ::1] lam_tab, double[::1] mu, cnp.int32_t[::1] compete,
              cnp.int32_t[::1] masks0, double[::1] beta0, double q0,
              int controller, double alpha, double gamma, double beta_floor,
              double[::1] grid, rng):
    """One Gillespie trajectory sampled on `grid`; see _kernel_py.run_trial."""
    cdef int n = masks0.shape[0]
    cdef int m = mu.shape[0]
    cdef int K = grid.shape[0]
    cdef int cap = n * (m + 1)

    masks_np = np.array(masks0, dtype=np.int32)
    beta_np = np.array(beta0, dtype=np.float64)
    cdef cnp.int32_t[::1] masks = masks_np
    cdef double[::1] beta = beta_np

    masks_out_np = np.zeros((K, n), dtype=np.int32)
    beta_out_np = np.zeros(K, dtype=np.float64)
    q_out_np = np.zeros(K, dtype=np.float64)
    cdef cnp.int32_t[:, ::1] masks_out = masks_out_np
    cdef double[::1] beta_out = beta_out_np
    cdef double[::1] q_out = q_out_np

    ev_kind_np = np.zeros(cap, dtype=np.int32)
    ev_host_np = np.zeros(cap, dtype=np.int32)
    ev_virus_np = np.zeros(cap, dtype=np.int32)
    ev_rate_np = np.zeros(cap, dtype=np.float64)
    cdef cnp.int32_t[::1] ev_kind = ev_kind_np
    cdef cnp.int32_t[::1] ev_host = ev_host_np
    cdef cnp.int32_t[::1] ev_virus = ev_virus_np
    cdef double[::1] ev_rate = ev_rate_np
    cnt_np = np.zeros(m, dtype=np.int32)
    cdef cnp.int32_t[::1] cnt = cnt_np

    cdef double q = q0
    cdef double t = 0.0, t_next, total, acc, r, target, cum, nb, u0, u1
    cdef int gi = 0, ne, i, jj, v, si, sj, k, deg, chosen, kind
    cdef bint clean_patch = controller == CTRL_NONMONOTONE
    cdef double[::1] u

    while gi < K:
        ne = 0
        total = 0.0
        for i in range(n):
            si = masks[i]
            if (si != 0 or clean_patch) and beta[i] > 0.0:
                ev_kind[ne] = 0
                ev_host[ne] = i
                ev_virus[ne] = -1
                ev_rate[ne] = beta[i]
                total += beta[i]
                ne += 1
            for v in range(m):
                cnt[v] = 0
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
                        r = k * lam_tab[si, v]
                        if r > 0.0:
                            ev_kind[ne] = 1
                            ev_host[ne] = i
                            ev_virus[ne] = v
                            ev_rate[ne] = r
                            total += r
                            ne += 1
                elif q > 0.0:
                    k = deg - cnt[v]
                    if k > 0:
                        r = (q * mu[v]) * k
                        ev_kind[ne] = 2
                        ev_host[ne] = i
                        ev_virus[ne] = v
                        ev_rate[ne] = r
                        total += r
                        ne += 1

        if total <= 0.0:
            while gi < K:
                for i in range(n):
                    masks_out[gi, i] = masks[i]
                acc = 0.0
                for i in range(n):
                    acc += beta[i]
                beta_out[gi] = acc / n
                q_out[gi] = q
                gi += 1
            break

        u = rng.random(2)
        u0 = u[0]
        u1 = u[1]
        t_next = t + (-log(1.0 - u0) / total)
        while gi < K and grid[gi] < t_next:
            for i in range(n):
                masks_out[gi, i] = masks[i]
            acc = 0.0
            for i in range(n):
                acc += beta[i]
            beta_out[gi] = acc / n
            q_out[gi] = q
            gi += 1
        if gi >= K:
            break

        target = u1 * total
        cum = 0.0
        chosen = ne - 1
        for k in range(ne):
            cum += ev_rate[k]
            if target < cum:
                chosen = k
                break
        kind = ev_kind[chosen]
        i = ev_host[chosen]
        if kind == 0:
            if masks[i] != 0:
                if controller == CTRL_MONOTONE or controller == CTRL_NONMONOTONE \
                        or controller == CTRL_JOINT:
                    beta[i] = beta[i] + alpha / beta[i]
                masks[i] = 0
            else:
                nb = beta[i] - gamma / beta[i]
                beta[i] = nb if nb > beta_floor else beta_floor
        elif kind == 1:
            v = ev_virus[chosen]
            masks[i] = (masks[i] & ~compete[v]) | (1 << v)
        else:
            if controller == CTRL_FILTER or controller == CTRL_JOINT:
                q = q + gamma / q
                if q > 1.0:
                    q = 1.0
            masks[i] = 0
        t = t_next

    return masks_out_np, beta_out_np, q_out_np


def jacobi_eigh(M, bint need_vectors):
    """Cyclic Jacobi sweeps; see _kernel_py.jacobi_eigh."""
    A_np = np.array(M, dtype=np.float64)
    cdef double[:, ::1] A = A_np
    cdef int n = A.shape[0]
    V_np = np.eye(n) if need_vectors else None
    cdef double[:, ::1] V
    if need_vectors:
        V = V_np

    cdef double norm = 0.0, off2, apq, theta, t, c, s, app, aqq, tp, tq
    cdef int p, q, k, sweeps
    for p in range(n):
        for q in range(n):
            norm += A[p, q] * A[p, q]
    norm = sqrt(norm)
    if norm == 0.0 or n == 1:
        return np.diag(A_np).copy(), V_np, 0
    cdef double tol = 1e-12 * norm
    cdef double skip = tol / (n * n)

    sweeps = 0
    for sweeps in range(1, 61):
        off2 = 0.0
        for p in range(n):
            for q in range(n):
                if p != q:
                    off2 += A[p, q] * A[p, q]
        if sqrt(off2 if off2 > 0.0 else 0.0) <= tol:
            sweeps -= 1
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if fabs(apq) <= skip:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = (1.0 if theta >= 0.0 else -1.0) / (fabs(theta) + sqrt(theta * theta + 1.0))
                c = 1.0 / sqrt(t * t + 1.0)
                s = t * c
                app = A[p, p]
                aqq = A[q, q]
                for k in range(n):
                    tp = A[p, k]
                    tq = A[q, k]
                    A[p, k] = c * tp - s * tq
                    A[q, k] = s * tp + c * tq
                for k in range(n):
                    tp = A[k, p]
                    tq = A[k, q]
                    A[k, p] = c * tp - s * tq
                    A[k, q] = s * tp + c * tq
                A[p, p] = app - t * apq
                A[q, q] = aqq + t * apq
                A[p, q] = 0.0
                A[q, p] = 0.0
                if need_vectors:
                    for k in range(n):
                        tp = V[k, p]
                        tq = V[k, q]
                        V[k, p] = c * tp - s * tq
                        V[k, q] = s * tp + c * tq
    return np.diag(A_np).copy(), V_np, sweeps
