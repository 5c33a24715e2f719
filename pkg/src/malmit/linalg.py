"""Dense symmetric eigensolver and Lyapunov-equation stability check."""

from __future__ import annotations

import numpy as np
import scipy.linalg

from . import kernels
from .errors import NotSymmetric, SingularLyapunov

# above this size the vectorized Kronecker solve of the Lyapunov equation
# would need O(dim^4) memory, so we switch to the Schur-based solver
_LYAP_DENSE_CAP = 64


def eig_sym(M, vectors=False, lane=None):
    """Eigenvalues (ascending) of a symmetric matrix by cyclic Jacobi rotations.

    With vectors=True also returns the orthogonal matrix V whose columns are
    eigenvectors in the same order. Raises NotSymmetric when M is not
    symmetric within 1e-12 (relative to its largest entry).
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise NotSymmetric("expected a square matrix")
    scale = max(1.0, float(np.abs(M).max()) if M.size else 0.0)
    if float(np.abs(M - M.T).max()) > 1e-12 * scale:
        raise NotSymmetric("matrix is not symmetric within 1e-12")
    diag, V, _ = kernels.jacobi_eigh(M, need_vectors=vectors, lane=lane)
    order = np.argsort(diag, kind="stable")
    vals = diag[order]
    if vectors:
        return vals, V[:, order]
    return vals


def solve_lyapunov(A, rhs=None):
    """Solve A^T P + P A = -C (C defaults to I) for P.

    Small systems go through the vectorized dense linear system; larger ones
    use the Schur-based solver. Raises SingularLyapunov when the equation is
    singular or the residual shows it was not solved reliably.
    """
    A = np.asarray(A, dtype=float)
    dim = A.shape[0]
    C = np.eye(dim) if rhs is None else np.asarray(rhs, dtype=float)
    if dim <= _LYAP_DENSE_CAP:
        eye = np.eye(dim)
        # vec(A^T P + P A) = (I (x) A^T + A^T (x) I) vec(P)
        big = np.kron(eye, A.T) + np.kron(A.T, eye)
        try:
            p_vec = np.linalg.solve(big, (-C).reshape(-1))
        except np.linalg.LinAlgError as exc:
            raise SingularLyapunov(str(exc)) from exc
        P = p_vec.reshape(dim, dim)
    else:
        try:
            P = scipy.linalg.solve_continuous_lyapunov(A.T, -C)
        except Exception as exc:
            raise SingularLyapunov(str(exc)) from exc
    if not np.all(np.isfinite(P)):
        raise SingularLyapunov("non-finite solution")
    residual = A.T @ P + P @ A + C
    tol = 1e-8 * max(1.0, float(np.abs(P).max())) * max(1.0, float(np.abs(A).max()))
    if float(np.abs(residual).max()) > tol:
        raise SingularLyapunov("residual too large; eigenvalues near the imaginary axis")
    return P


def hurwitz(M) -> bool:
    """True iff all eigenvalues of M have negative real part.

    Decided by solving A^T P + P A = -I and testing P for symmetric positive
    definiteness via a Cholesky factorization. Raises SingularLyapunov when
    the equation cannot certify either way (spectrum on the imaginary axis).
    """
    M = np.asarray(M, dtype=float)
    P = solve_lyapunov(M)
    P = 0.5 * (P + P.T)
    try:
        np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        return False
    return True
