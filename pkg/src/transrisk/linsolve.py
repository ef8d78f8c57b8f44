"""Conjugate-gradient solver on the normal equations.

The operator may be any nonsymmetric matrix (scipy sparse, dense ndarray, or
LinearOperator with ``rmatvec``); symmetrization A'A x = A'b happens
internally so plain CG applies.  When the operator exposes its entries a
Jacobi preconditioner on the normal equations speeds up the ill-conditioned
large-step solves without changing the math.
"""

from __future__ import annotations

import numpy as np
from scipy.sparse import issparse
from scipy.sparse.linalg import LinearOperator

__all__ = ["conjugate_gradient", "CgError"]


class CgError(RuntimeError):
    def __init__(self, msg, iterations, residual):
        super().__init__(msg)
        self.iterations = iterations
        self.residual = residual


def _wrap(apply_A):
    """Return (matvec, rmatvec, inv_normal_diag or None)."""
    if issparse(apply_A):
        A = apply_A.tocsr()
        At = A.T.tocsr()
        d = np.asarray(A.multiply(A).sum(axis=0)).ravel()
        return A.dot, At.dot, _safe_inv(d)
    if isinstance(apply_A, np.ndarray):
        d = (apply_A * apply_A).sum(axis=0)
        return (lambda x: apply_A @ x), (lambda y: apply_A.T @ y), _safe_inv(d)
    if isinstance(apply_A, LinearOperator):
        return apply_A.matvec, apply_A.rmatvec, None
    raise TypeError("apply_A must be a matrix or a LinearOperator with rmatvec")


def _safe_inv(d):
    out = np.where(d > 0, d, 1.0)
    return 1.0 / out


def conjugate_gradient(apply_A, rhs, x0=None, tol=1e-12, max_iter=20000):
    """Solve A x = rhs via (Jacobi-preconditioned) CG on A'A x = A'rhs.

    Convergence is declared on the original system: ||A x - rhs|| <= tol * ||rhs||
    (absolute when rhs is zero).  Raises ``CgError`` past ``max_iter``.
    """
    mv, rmv, inv_diag = _wrap(apply_A)
    b = np.asarray(rhs, dtype=float).ravel()
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float).ravel().copy()
    bnorm = np.linalg.norm(b)
    target = tol * bnorm if bnorm > 0 else tol

    res = b - mv(x)                    # original-system residual
    if np.linalg.norm(res) <= target:
        return x
    rt = rmv(res)                      # normal-equation residual A'(b - Ax)
    z = rt if inv_diag is None else inv_diag * rt
    p = z.copy()
    rho = rt @ z
    for it in range(1, int(max_iter) + 1):
        Ap = mv(p)
        denom = Ap @ Ap
        if denom <= 0.0 or rho == 0.0:
            break
        a = rho / denom
        x += a * p
        res -= a * Ap
        if np.linalg.norm(res) <= target:
            return x
        rt = rmv(res)
        z = rt if inv_diag is None else inv_diag * rt
        rho_new = rt @ z
        p = z + (rho_new / rho) * p
        rho = rho_new
    raise CgError(f"conjugate gradient stalled after {max_iter} iterations "
                  f"(residual {np.linalg.norm(res):.3e}, target {target:.3e})",
                  iterations=int(max_iter), residual=float(np.linalg.norm(res)))
