"""Left-looking QR orthogonalization schemes behind one push interface.

Each state factorizes one column at a time: ``push`` consumes the next
column, ``finalize`` returns ``(Q, R)``.  The one-reduction schemes
(``icwy-mgs``, ``dcgs2``, ``dcgs2-hrt``) hold one unnormalized pending
column between pushes and emit the previous basis vector instead, which is
what lets them fuse all synchronizing work of a column into a single
reduction.

Scheme ids: cgs, cgs2, cgs2-lagged, mgs, icwy-mgs, dcgs2, dcgs2-hrt,
householder.
"""

import numpy as np
import scipy.linalg

from .dense import householder_qr
from .errors import BreakdownError, DimensionError, UnknownSchemeError
from .kernels import dot, mv_times_mat_add_mv, mv_trans_mv, norm2
from .ledger import SyncLedger

_EPS = np.finfo(np.float64).eps

SCHEME_IDS = (
    "cgs",
    "cgs2",
    "cgs2-lagged",
    "mgs",
    "icwy-mgs",
    "dcgs2",
    "dcgs2-hrt",
    "householder",
)

#: schemes that hold a pending column and need finalize to flush it
DELAYED_SCHEMES = ("icwy-mgs", "dcgs2", "dcgs2-hrt")


class QrState:
    """Shared storage and bookkeeping for the push-based schemes.

    ``ncols`` counts finalized orthonormal columns; the delayed subclasses
    additionally hold one pending column.  Column storage is column-major so
    the left-looking panels are contiguous.
    """

    scheme_id = None

    def __init__(self, m, n_cap, ledger=None):
        self.m = m
        self.n_cap = n_cap
        self.ledger = ledger if ledger is not None else SyncLedger()
        self._q = np.zeros((m, n_cap), order="F")
        self._r = np.zeros((n_cap, n_cap))
        self.ncols = 0
        self.npushed = 0
        # most recent column's projection coefficients and norm; on a
        # dependent-column breakdown these hold the attempted coefficients
        self.last_coeffs = None
        self.last_alpha = None

    @property
    def q(self):
        return self._q[:, : self.ncols]

    @property
    def r(self):
        return self._r[: self.npushed, : self.npushed]

    def _take(self, a):
        a = np.asarray(a, dtype=np.float64)
        if a.shape != (self.m,):
            raise DimensionError(f"column of length {self.m} expected, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite column")
        if self.npushed >= self.n_cap:
            raise DimensionError("state capacity exhausted")
        return a

    def _emit(self, qcol, coeffs, alpha):
        j = self.ncols
        self._q[:, j] = qcol
        self._r[: len(coeffs), j] = coeffs
        self._r[j, j] = alpha
        self.last_coeffs = np.asarray(coeffs, dtype=np.float64)
        self.last_alpha = alpha
        self.ncols += 1

    def adopt(self, qcol):
        """Append an externally orthonormalized column (no reductions)."""
        if self.npushed != self.ncols:
            raise DimensionError("cannot adopt while a column is pending")
        self._q[:, self.ncols] = qcol
        self._r[self.ncols, self.ncols] = 1.0
        self.ncols += 1
        self.npushed += 1

    def adopt_block(self, V):
        for k in range(V.shape[1]):
            self.adopt(V[:, k])

    def push(self, a):
        raise NotImplementedError

    def finalize(self):
        """Flush pending work and return (Q, R)."""
        return self.q.copy(), self.r.copy()

    def _guard_alpha(self, alpha, scale):
        # rounding noise in a projected column reaches sqrt(m)*eps*scale
        if not alpha > _EPS * np.sqrt(self.m) * scale:
            raise BreakdownError(
                f"column {self.npushed} is dependent at working precision "
                f"(norm {alpha:.3e} against scale {scale:.3e})",
                kind="dependent",
                column=self.npushed,
            )


class CgsState(QrState):
    """Classical Gram-Schmidt, single projection pass: 2 reductions."""

    scheme_id = "cgs"

    def push(self, a):
        a = self._take(a)
        scale = float(np.linalg.norm(a))  # local breakdown guard, not counted
        Q = self.q
        s = mv_trans_mv(Q, a[:, None], ledger=self.ledger)[:, 0]
        u = a.copy()[:, None]
        mv_times_mat_add_mv(u, Q, s[:, None], sign=-1.0, ledger=self.ledger)
        alpha = norm2(u[:, 0], ledger=self.ledger)
        self.last_coeffs, self.last_alpha = s, alpha
        self._guard_alpha(alpha, scale)
        self.npushed += 1
        self._emit(u[:, 0] / alpha, s, alpha)


class Cgs2State(QrState):
    """CGS with full reorthogonalization: 3 reductions per column."""

    scheme_id = "cgs2"

    def push(self, a):
        a = self._take(a)
        scale = float(np.linalg.norm(a))
        Q = self.q
        s = mv_trans_mv(Q, a[:, None], ledger=self.ledger)[:, 0]
        w = a.copy()[:, None]
        mv_times_mat_add_mv(w, Q, s[:, None], sign=-1.0, ledger=self.ledger)
        c = mv_trans_mv(Q, w, ledger=self.ledger)[:, 0]
        u = w
        mv_times_mat_add_mv(u, Q, c[:, None], sign=-1.0, ledger=self.ledger)
        alpha = norm2(u[:, 0], ledger=self.ledger)
        self.last_coeffs, self.last_alpha = s + c, alpha
        self._guard_alpha(alpha, scale)
        self.npushed += 1
        self._emit(u[:, 0] / alpha, s + c, alpha)


class Cgs2LaggedState(QrState):
    """CGS2 with the normalization fused into the second projection.

    The second reduction returns both the correction coefficients and the
    squared norm of the once-projected column, so the final norm comes from
    the Pythagorean identity alpha^2 = beta - c.c instead of a third pass.
    2 reductions per column.
    """

    scheme_id = "cgs2-lagged"

    def push(self, a):
        a = self._take(a)
        scale = float(np.linalg.norm(a))
        j = self.ncols
        Q = self.q
        s = mv_trans_mv(Q, a[:, None], ledger=self.ledger)[:, 0]
        w = a.copy()[:, None]
        mv_times_mat_add_mv(w, Q, s[:, None], sign=-1.0, ledger=self.ledger)
        fused = mv_trans_mv(
            np.hstack([Q, w]), w, ledger=self.ledger
        )[:, 0]
        c, beta = fused[:j], fused[j]
        self.last_coeffs, self.last_alpha = s + c, float(np.sqrt(max(beta, 0.0)))
        if not np.sqrt(max(beta, 0.0)) > _EPS * np.sqrt(self.m) * scale:
            raise BreakdownError(
                f"column {self.npushed} is dependent at working precision",
                kind="dependent",
                column=self.npushed,
            )
        alpha_sq = beta - float(c @ c)
        self.ledger.add_flops(2 * j)
        if not alpha_sq > beta * _EPS * _EPS:
            raise BreakdownError(
                f"cancellation in the lagged norm of column {self.npushed}",
                kind="pythagorean",
                column=self.npushed,
            )
        alpha = float(np.sqrt(alpha_sq))
        u = w
        mv_times_mat_add_mv(u, Q, c[:, None], sign=-1.0, ledger=self.ledger)
        self.npushed += 1
        self._emit(u[:, 0] / alpha, s + c, alpha)


class MgsState(QrState):
    """Modified Gram-Schmidt with elementary rank-1 projections.

    Column j costs j reductions: one dot per existing basis vector plus the
    normalization.
    """

    scheme_id = "mgs"

    def push(self, a):
        a = self._take(a)
        scale = float(np.linalg.norm(a))
        j = self.ncols
        u = a.copy()
        s = np.zeros(j)
        for i in range(j):
            qi = self._q[:, i]
            s[i] = dot(qi, u, ledger=self.ledger)
            mv_times_mat_add_mv(
                u[:, None], qi[:, None], [[s[i]]], sign=-1.0, ledger=self.ledger
            )
        alpha = norm2(u, ledger=self.ledger)
        self.last_coeffs, self.last_alpha = s, alpha
        self._guard_alpha(alpha, scale)
        self.npushed += 1
        self._emit(u / alpha, s, alpha)


class IcwyMgsState(QrState):
    """One-reduction MGS via the inverse compact WY projector.

    The normalization is lagged: a push holds the fully projected column
    unnormalized, and the next push's single fused reduction returns its
    exact squared norm together with the lagged row of the strictly lower
    triangular factor L and the raw projection coefficients of the incoming
    column.  The projection applies (I + L)^-1 through a unit triangular
    solve; with ``symmetric=True`` the two-term correction T = I - L - L^T
    is applied instead (the compact WY variant).  One reduction per column,
    including the finalization norm of the last pending column.
    """

    scheme_id = "icwy-mgs"

    def __init__(self, m, n_cap, ledger=None, symmetric=False):
        super().__init__(m, n_cap, ledger)
        self._l = np.zeros((n_cap, n_cap))
        self.symmetric = symmetric
        self._u = None  # pending projected column, not yet normalized
        self._y = None  # its projection coefficients
        self._uscale = 0.0

    def adopt_block(self, V):
        """Adopt orthonormal columns, seeding L with one fused Gram block."""
        start = self.ncols
        super().adopt_block(V)
        if V.shape[1] > 1:
            g = mv_trans_mv(V, V, ledger=self.ledger)
            sl = slice(start, start + V.shape[1])
            self._l[sl, sl] = np.tril(g, -1)

    def _solve_projector(self, s):
        """Apply the inverse (or symmetric) compact WY correction to s."""
        k = len(s)
        L = self._l[:k, :k]
        if k == 0:
            return s
        if self.symmetric:
            y = s - L @ s - L.T @ s
            self.ledger.add_flops(4 * k * k)
        else:
            y = scipy.linalg.solve_triangular(
                np.eye(k) + L, s, lower=True, unit_diagonal=True
            )
            self.ledger.add_flops(k * k)
        return y

    def push(self, a):
        a = self._take(a)
        if self._u is None:
            self._u = a.copy()
            self._y = np.zeros(0)
            self._uscale = float(np.linalg.norm(a))
            self.npushed += 1
            return
        j = self.ncols  # pending column index
        Q = self.q
        left = np.hstack([Q, self._u[:, None]])
        right = np.column_stack([self._u, a])
        g = mv_trans_mv(left, right, ledger=self.ledger)
        c = g[:j, 0]
        beta = float(g[j, 0])
        s = g[:j, 1]
        s_piv = float(g[j, 1])
        alpha = float(np.sqrt(max(beta, 0.0)))
        self._guard_alpha(alpha, self._uscale)
        # emit the pending column; its Gram row against Q becomes the L row
        self._l[j, :j] = c / alpha
        self._emit(self._u / alpha, self._y, alpha)
        s_full = np.append(s, s_piv / alpha)
        y = self._solve_projector(s_full)
        u = a.copy()[:, None]
        mv_times_mat_add_mv(
            u, self._q[:, : j + 1], y[:, None], sign=-1.0, ledger=self.ledger
        )
        self._u = u[:, 0]
        self._y = y
        self._uscale = float(np.linalg.norm(a))
        self.npushed += 1

    def finalize(self):
        if self._u is not None:
            alpha = norm2(self._u, ledger=self.ledger)
            self._guard_alpha(alpha, self._uscale)
            self._l[self.ncols, : self.ncols] = 0.0  # row never observed
            self._emit(self._u / alpha, self._y, alpha)
            self._u = None
            self._y = None
        return super().finalize()


class Dcgs2State(QrState):
    """Delayed CGS2: one fused reduction per column.

    The reorthogonalization and normalization of column j-1 are performed
    during the push of column j, fused with its first projection into the
    single reduction [Q, w]^T [w, a].  The norm uses the Pythagorean
    identity on the once-projected pending vector and the lagged projection
    coefficient is corrected through the unnormalized quantities.
    ``finalize`` flushes the last pending column with a plain CGS2 pass
    (two more reductions).
    """

    scheme_id = "dcgs2"

    def __init__(self, m, n_cap, ledger=None):
        super().__init__(m, n_cap, ledger)
        self._w = None  # pending once-projected column
        self._s = None  # its first-projection coefficients
        self._wscale = 0.0  # original column norm, local breakdown guard

    def _stash(self, w, s, scale):
        self._w = w
        self._s = s
        self._wscale = scale
        self.npushed += 1

    def push(self, a):
        a = self._take(a)
        if self._w is None:
            self._stash(a.copy(), np.zeros(0), float(np.linalg.norm(a)))
            return
        j = self.ncols  # pending column index
        Q = self.q
        left = np.hstack([Q, self._w[:, None]])
        right = np.column_stack([self._w, a])
        g = mv_trans_mv(left, right, ledger=self.ledger)
        c = g[:j, 0]
        beta = float(g[j, 0])
        s_new = g[:j, 1]
        s_piv = float(g[j, 1])
        alpha = self._finish_pending(Q, c, beta, s_new=s_new)
        # lagged coefficient of the new column against the just-emitted q,
        # recovered from the unnormalized pending vector
        s_piv = (s_piv - float(c @ s_new)) / alpha
        self.ledger.add_flops(2 * j)
        s_full = np.append(s_new, s_piv)
        w = a.copy()[:, None]
        mv_times_mat_add_mv(
            w, self._q[:, : j + 1], s_full[:, None], sign=-1.0, ledger=self.ledger
        )
        self._stash(w[:, 0], s_full, float(np.linalg.norm(a)))

    def _finish_pending(self, Q, c, beta, s_new):
        """Reorthogonalize, normalize, and emit the pending column."""
        j = self.ncols
        if not np.sqrt(max(beta, 0.0)) > _EPS * np.sqrt(self.m) * self._wscale:
            raise BreakdownError(
                f"column {j} is dependent at working precision",
                kind="dependent",
                column=j,
            )
        alpha_sq = beta - float(c @ c)
        self.ledger.add_flops(2 * j)
        if not alpha_sq > beta * _EPS * _EPS:
            raise BreakdownError(
                f"cancellation in the delayed norm of column {j}",
                kind="pythagorean",
                column=j,
            )
        alpha = float(np.sqrt(alpha_sq))
        u = self._w[:, None].copy()
        mv_times_mat_add_mv(u, Q, c[:, None], sign=-1.0, ledger=self.ledger)
        self._emit(u[:, 0] / alpha, self._s + c, alpha)
        return alpha

    def finalize(self):
        if self._w is not None:
            j = self.ncols
            Q = self.q
            c = mv_trans_mv(Q, self._w[:, None], ledger=self.ledger)[:, 0]
            u = self._w[:, None].copy()
            mv_times_mat_add_mv(u, Q, c[:, None], sign=-1.0, ledger=self.ledger)
            alpha = norm2(u[:, 0], ledger=self.ledger)
            self._guard_alpha(alpha, self._wscale)
            self._emit(u[:, 0] / alpha, self._s + c, alpha)
            self._w = None
            self._s = None
        return super().finalize()


class Dcgs2HrtState(Dcgs2State):
    """Delayed scheme without the post-normalization corrections.

    Runs the same fused-reduction pipeline as ``dcgs2`` but normalizes the
    pending column by its raw lagged norm sqrt(beta), never applies the
    delayed correction to the vector, and skips the lagged-coefficient
    correction.  The correction coefficients still enter R, so the computed
    basis matches single-pass CGS while the representation drifts; this is
    the behavior the delayed-reorthogonalization variant of Hernandez et al.
    exhibits and is implemented here as its defining assumption.
    """

    scheme_id = "dcgs2-hrt"

    def push(self, a):
        a = self._take(a)
        if self._w is None:
            self._stash(a.copy(), np.zeros(0), float(np.linalg.norm(a)))
            return
        j = self.ncols
        Q = self.q
        left = np.hstack([Q, self._w[:, None]])
        right = np.column_stack([self._w, a])
        g = mv_trans_mv(left, right, ledger=self.ledger)
        c = g[:j, 0]
        beta = float(g[j, 0])
        s_new = g[:j, 1]
        s_piv = float(g[j, 1])
        alpha = self._finish_pending_raw(c, beta)
        s_full = np.append(s_new, s_piv / alpha)
        w = a.copy()[:, None]
        mv_times_mat_add_mv(
            w, self._q[:, : j + 1], s_full[:, None], sign=-1.0, ledger=self.ledger
        )
        self._stash(w[:, 0], s_full, float(np.linalg.norm(a)))

    def _finish_pending_raw(self, c, beta):
        j = self.ncols
        alpha = float(np.sqrt(max(beta, 0.0)))
        self._guard_alpha(alpha, self._wscale)
        self._emit(self._w / alpha, self._s + c, alpha)
        return alpha

    def finalize(self):
        if self._w is not None:
            alpha = norm2(self._w, ledger=self.ledger)
            self._guard_alpha(alpha, self._wscale)
            self._emit(self._w / alpha, self._s, alpha)
            self._w = None
            self._s = None
        return self.q.copy(), self.r.copy()


_STATES = {
    cls.scheme_id: cls
    for cls in (
        CgsState,
        Cgs2State,
        Cgs2LaggedState,
        MgsState,
        IcwyMgsState,
        Dcgs2State,
        Dcgs2HrtState,
    )
}


def make_state(scheme, m, n_cap, ledger=None, **options):
    """Construct the push state for a scheme id."""
    try:
        cls = _STATES[scheme]
    except KeyError:
        raise UnknownSchemeError(f"unknown scheme {scheme!r}") from None
    return cls(m, n_cap, ledger=ledger, **options)


def qr_factorize(A, scheme, ledger=None, **options):
    """Factorize a full matrix with the chosen scheme; returns (Q, R).

    ``householder`` is handled directly (it is not left-looking); all other
    ids run the push interface column by column.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] < A.shape[1]:
        raise DimensionError(f"tall matrix expected, got {A.shape}")
    if scheme == "householder":
        fac = householder_qr(A, ledger=ledger)
        return fac.thin_q(), fac.r.copy()
    state = make_state(scheme, A.shape[0], A.shape[1], ledger=ledger, **options)
    for j in range(A.shape[1]):
        state.push(A[:, j])
    return state.finalize()
