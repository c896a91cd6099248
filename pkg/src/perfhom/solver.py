"""Sparse linear algebra for the discretized operators.

The workhorse is a diagonally preconditioned BiCGStab iteration (the
embedded-boundary rows make the operator nonsymmetric).  A dense
partial-pivoting solve doubles as the oracle for small systems.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = [
    "SparseOperator",
    "SolverError",
    "NonConvergenceError",
    "BreakdownError",
    "SingularSystemError",
    "solve",
    "solve_dense",
]


class SolverError(RuntimeError):
    pass


class NonConvergenceError(SolverError):
    pass


class BreakdownError(SolverError):
    pass


class SingularSystemError(SolverError):
    pass


@dataclass
class SparseOperator:
    """Square operator in compressed sparse row form."""

    csr: sp.csr_matrix

    def __post_init__(self):
        m = self.csr
        if m.shape[0] != m.shape[1]:
            raise ValueError("operator must be square")
        m.sum_duplicates()
        # No duplicate columns per row after sum_duplicates; sanity-check sorted indices.
        if not m.has_sorted_indices:
            m.sort_indices()

    @property
    def n(self) -> int:
        return self.csr.shape[0]

    @property
    def diagonal(self) -> np.ndarray:
        return self.csr.diagonal()

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.csr @ x

    def dense(self) -> np.ndarray:
        return self.csr.toarray()

    def is_m_matrix_like(self, rows: np.ndarray | None = None) -> bool:
        """Diagonal dominance hook: off-diagonal row sums bounded by diagonal."""
        m = self.csr
        d = m.diagonal()
        offsum = np.asarray(np.abs(m).sum(axis=1)).ravel() - np.abs(d)
        check = offsum <= d * (1 + 1e-12)
        if rows is not None:
            check = check[rows]
        return bool(np.all(check))


def solve(A: SparseOperator, b: np.ndarray, tol: float = 1e-10,
          x0: np.ndarray | None = None, max_iter: int | None = None) -> np.ndarray:
    """Preconditioned BiCGStab; returns x with ||Ax-b|| <= tol*||b||.

    Diagonal (Jacobi) preconditioning only.  Raises on breakdown or when the
    iteration cap (50*sqrt(n) by default) is reached; never returns silently
    with an unmet residual contract.
    """
    if not (0.0 < tol < 1.0):
        raise ValueError("tol must lie in (0, 1)")
    m = A.csr
    n = A.n
    b = np.asarray(b, dtype=float)
    if max_iter is None:
        max_iter = max(200, int(50 * math.sqrt(n)))
    d = m.diagonal()
    if np.any(d == 0.0):
        raise SingularSystemError("zero diagonal entry")
    dinv = 1.0 / d

    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n)
    target = tol * bnorm

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    tiny = 1e-300
    iters_left = max_iter
    while True:
        # (Re)start from the true residual; restarting also heals the rare
        # drift between the recurrence residual and the true one.
        r = b - m @ x
        if np.linalg.norm(r) <= target:
            return x
        if iters_left <= 0:
            raise NonConvergenceError(
                f"BiCGStab did not reach tol={tol:g} within {max_iter} iterations"
            )
        rhat = r.copy()
        rho = alpha = omega = 1.0
        v = np.zeros(n)
        p = np.zeros(n)
        converged = False
        while iters_left > 0 and not converged:
            iters_left -= 1
            rho_new = float(rhat @ r)
            if abs(rho_new) < tiny:
                raise BreakdownError("rho breakdown in BiCGStab")
            beta = (rho_new / rho) * (alpha / omega)
            rho = rho_new
            p = r + beta * (p - omega * v)
            phat = dinv * p
            v = m @ phat
            denom = float(rhat @ v)
            if abs(denom) < tiny:
                raise BreakdownError("alpha breakdown in BiCGStab")
            alpha = rho / denom
            s = r - alpha * v
            if np.linalg.norm(s) <= target:
                x = x + alpha * phat
                converged = True
                break
            shat = dinv * s
            t = m @ shat
            tt = float(t @ t)
            if tt < tiny:
                raise BreakdownError("omega breakdown in BiCGStab")
            omega = float(t @ s) / tt
            x = x + alpha * phat + omega * shat
            r = s - omega * t
            if np.linalg.norm(r) <= target:
                converged = True
        if not converged and iters_left <= 0:
            raise NonConvergenceError(
                f"BiCGStab did not reach tol={tol:g} within {max_iter} iterations"
            )
        # Loop re-checks the true residual (post-hoc contract) and returns.


def solve_dense(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Partial-pivoting elimination oracle for systems with n <= 2000."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    if A.shape[0] > 2000:
        raise ValueError("dense oracle limited to n <= 2000")
    try:
        return np.linalg.solve(A, np.asarray(b, dtype=float))
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(str(exc)) from exc
