"""Stability metrics evaluated on run artifacts.

All metrics are pure evaluations outside the instrumented kernel path; they
never touch a ledger.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .problems import LinearOperator

#: default evaluation stride for per-step metric sweeps
DEFAULT_STRIDE = 5


@dataclass(frozen=True)
class StabilityReport:
    """One evaluation point of a stability study.

    Counting fields are optional (-1 when the study does not produce them);
    ``kappa`` is the input conditioning for synthetic sweeps.
    """

    scheme: str
    step: int
    loo: float
    rre: float
    n_forward_converged: int = -1
    invariant_dim: int = -1
    kappa: float = float("nan")

    def __post_init__(self):
        if self.loo < 0.0 or self.rre < 0.0:
            raise ValueError("metrics are non-negative")
        if self.n_forward_converged > max(self.step, self.invariant_dim):
            raise ValueError("converged count cannot exceed the step index")


def loss_of_orthogonality(Q):
    """Frobenius norm of I - Q^T Q."""
    Q = np.asarray(Q, dtype=np.float64)
    n = Q.shape[1]
    return float(np.linalg.norm(np.eye(n) - Q.T @ Q))


def representation_error_qr(A, Q, R):
    """Relative factorization residual ||A - Q R||_F / ||A||_F."""
    A = np.asarray(A, dtype=np.float64)
    denom = np.linalg.norm(A)
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(A - Q @ R) / denom)


def _op_frobenius(op):
    if isinstance(op, LinearOperator):
        return op.frobenius_norm()
    return float(np.linalg.norm(np.asarray(op, dtype=np.float64)))


def _op_apply_block(op, X):
    if isinstance(op, LinearOperator):
        out = np.empty_like(X)
        for j in range(X.shape[1]):
            out[:, j] = op.apply(X[:, j])
        return out
    return np.asarray(op) @ X


def representation_error_arnoldi(op, Q, H):
    """Relative expansion residual ||A Q_k - Q_{k+1} H||_F / ||A||_F.

    Q holds k+1 basis columns and H is the (k+1)-by-k extended Hessenberg
    block; for matrix-free operators ||A||_F is the operator's probed
    estimate.
    """
    Q = np.asarray(Q, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    k = H.shape[1]
    if Q.shape[1] != k + 1 or H.shape[0] != k + 1:
        raise DimensionError(
            f"expected basis k+1 columns and (k+1)-by-k H, got {Q.shape} and {H.shape}"
        )
    if k == 0:
        return 0.0
    denom = _op_frobenius(op)
    if denom == 0.0:
        return 0.0
    resid = _op_apply_block(op, Q[:, :k]) - Q @ H
    return float(np.linalg.norm(resid) / denom)


def forward_error_count(computed, table, tol):
    """Number of computed eigenvalues matching the exact spectrum within tol.

    Greedy nearest matching without exceeding exact multiplicities; see
    ``eig.match_eigenvalues`` for the full report.
    """
    from .eig import match_eigenvalues

    report = match_eigenvalues(computed, table, tol)
    return report.n_matched
