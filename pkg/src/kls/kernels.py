"""Instrumented dense kernels.

These are the only operations that may synchronize in a distributed run, so
every call reports its class (and a nominal flop count) to the ledger.  The
fused-reduction contract is central: ``mv_trans_mv`` records exactly one
reduction no matter how many columns it reduces, which is what the delayed
schemes exploit.  A call with an empty basis block still records its
reduction: per-iteration call patterns are static, so the closed-form totals
count the degenerate first-column collectives too.

All arithmetic is float64 and deterministic for fixed inputs (fixed BLAS
summation trees); results are reproducible run to run.
"""

import numpy as np

from . import ledger as _ledger
from .errors import DimensionError


def _as_matrix(a, name):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {a.shape}")
    return a


def dot(x, y, ledger=None):
    """Inner product x.y; one global reduction (MvDot)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DimensionError(f"dot needs equal-length vectors, got {x.shape} and {y.shape}")
    if ledger is not None:
        ledger.record(_ledger.MV_DOT, flops=2 * x.size)
    return float(np.dot(x, y))


def norm2(x, ledger=None):
    """Euclidean norm via one dot reduction."""
    return float(np.sqrt(dot(x, x, ledger=ledger)))


def mv_trans_mv(B, X, ledger=None):
    """Fused block of inner products B^T X; exactly one global reduction.

    B is m-by-k, X is m-by-l; the (k, l) result costs a single reduction
    regardless of l (or of k = 0).
    """
    B = _as_matrix(B, "B")
    X = _as_matrix(X, "X")
    if B.shape[0] != X.shape[0]:
        raise DimensionError(
            f"row mismatch: B is {B.shape}, X is {X.shape}"
        )
    if ledger is not None:
        ledger.record(
            _ledger.MV_TRANS_MV, flops=2 * B.shape[0] * B.shape[1] * X.shape[1]
        )
    return B.T @ X


def mv_times_mat_add_mv(Y, B, S, sign=1.0, scale=1.0, ledger=None):
    """Projection-style update Y <- scale*Y + sign*B@S, in place.

    Records zero reductions.  Returns Y for convenience.
    """
    Y = _as_matrix(Y, "Y")
    B = _as_matrix(B, "B")
    S = _as_matrix(S, "S")
    if B.shape[1] != S.shape[0] or B.shape[0] != Y.shape[0] or S.shape[1] != Y.shape[1]:
        raise DimensionError(
            f"nonconformal update: Y {Y.shape}, B {B.shape}, S {S.shape}"
        )
    if ledger is not None:
        ledger.record(
            _ledger.MV_TIMES_MAT_ADD_MV,
            flops=2 * B.shape[0] * B.shape[1] * S.shape[1],
        )
    if scale != 1.0:
        Y *= scale
    if B.shape[1]:
        Y += sign * (B @ S)
    return Y
