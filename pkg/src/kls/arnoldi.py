"""Arnoldi expansions A V_k = V_{k+1} Hbar_k over the orthogonalization schemes.

The expansion object grows one basis column per ``step``; ``finalize``
flushes any pending delayed work and returns ``(V, Hbar)``.  On a happy
breakdown (the new direction lies in the current span) the subdiagonal is
reported as zero, the returned Hbar is square, and the expansion stops; a
breakdown is never normalized through.

The delayed variant mirrors the one-reduction QR scheme: the matrix is
applied to the unnormalized pending vector (its image is computed eagerly
at stash time so the fused reduction consumes both blocks), the
normalization uses the Pythagorean identity, and the Hessenberg column is
assembled across two iterations through the correction ledger K.
"""

import numpy as np

from .dense import householder_qr
from .errors import BreakdownError, DimensionError, UnknownSchemeError
from .kernels import dot, mv_times_mat_add_mv, mv_trans_mv, norm2
from .ledger import SyncLedger
from .ortho import make_state

_EPS = np.finfo(np.float64).eps

ARNOLDI_SCHEMES = (
    "cgs",
    "cgs2",
    "cgs2-lagged",
    "mgs",
    "icwy-mgs",
    "dcgs2",
    "dcgs2-hrt",
    "householder",
)

_IMMEDIATE = ("cgs", "cgs2", "cgs2-lagged", "mgs")


class _BaseArnoldi:
    scheme_id = None

    def __init__(self, op, capacity, ledger):
        if capacity < 2:
            raise DimensionError("capacity of at least 2 basis vectors required")
        self.op = op
        self.capacity = capacity
        self.ledger = ledger if ledger is not None else SyncLedger()
        self.m = op.shape[0]
        self._v = np.zeros((self.m, capacity), order="F")
        self._h = np.zeros((capacity, capacity - 1))
        self.nbasis = 0  # finalized orthonormal basis columns
        self.hcols = 0  # fully assembled Hessenberg columns
        self.happy = False
        self.start_norm = None

    # -- views ------------------------------------------------------------
    @property
    def basis(self):
        """Finalized orthonormal basis columns."""
        return self._v[:, : self.nbasis]

    @property
    def h(self):
        """Completed (hcols+1)-by-hcols expansion block (square if happy)."""
        rows = min(self.hcols + 1, self.nbasis)
        return self._h[:rows, : self.hcols]

    @property
    def h_extended(self):
        """Completed block with a coupling row (zero after a breakdown)."""
        return self._h[: self.hcols + 1, : self.hcols]

    @property
    def basis_extended(self):
        """hcols+1 basis columns (zero-padded after a breakdown), matching
        ``h_extended`` for mid-run residual evaluation."""
        return self._v[:, : self.hcols + 1]

    @property
    def size(self):
        """Basis columns after finalize (counts the pending column)."""
        return self.nbasis + (1 if self._has_pending() else 0)

    @property
    def order(self):
        """Expansion order after finalize (columns of Hbar)."""
        return self.size if self.happy else self.size - 1

    def _has_pending(self):
        return False

    # -- contract ----------------------------------------------------------
    def step(self):
        """Grow the expansion by one column; False once a happy breakdown hit."""
        if self.happy:
            return False
        if self.size >= self.capacity:
            raise DimensionError("expansion capacity exhausted")
        return self._step()

    def finalize(self):
        """Flush pending work; returns (V, Hbar)."""
        self._flush()
        return (
            self._v[:, : self.nbasis].copy(),
            self._h[: self.nbasis, : self.hcols].copy(),
        )

    def _step(self):
        raise NotImplementedError

    def _flush(self):
        pass

    def _mark_happy(self):
        self.happy = True
        return False


class _ImmediateArnoldi(_BaseArnoldi):
    """Schemes that finish each column within its own step.

    The start vector is normalized locally during setup: per-iteration
    reduction counts start with the first projection step, matching the
    per-column cost accounting.
    """

    def __init__(self, op, start, scheme, capacity, ledger=None):
        super().__init__(op, capacity, ledger)
        self.scheme_id = scheme
        self.engine = make_state(scheme, self.m, capacity, ledger=self.ledger)
        if start is not None:
            nrm = float(np.linalg.norm(start))
            if not nrm > 0.0:
                raise ValueError("zero start vector")
            self.start_norm = nrm
            self.engine.adopt(np.asarray(start, dtype=np.float64) / nrm)
            self._v[:, 0] = self.engine.q[:, 0]
            self.nbasis = 1

    @classmethod
    def resume(cls, op, basis, hbar, scheme, capacity, ledger=None):
        self = cls(op, None, scheme, capacity, ledger)
        k = hbar.shape[1]
        self.engine.adopt_block(np.asarray(basis, dtype=np.float64))
        self._v[:, : k + 1] = basis
        self._h[: k + 1, :k] = hbar
        self.nbasis = k + 1
        self.hcols = k
        return self

    def _step(self):
        v = self.op.apply(self._v[:, self.nbasis - 1])
        j = self.nbasis
        try:
            self.engine.push(v)
        except BreakdownError as err:
            if err.kind != "dependent":
                raise
            coeffs = self.engine.last_coeffs
            self._h[: len(coeffs), j - 1] = coeffs
            self._h[j, j - 1] = 0.0
            self.hcols = j
            return self._mark_happy()
        coeffs = self.engine.last_coeffs
        self._h[: len(coeffs), j - 1] = coeffs
        self._h[j, j - 1] = self.engine.last_alpha
        self._v[:, j] = self.engine.q[:, j]
        self.nbasis += 1
        self.hcols = j
        return True


class _IcwyArnoldi(_BaseArnoldi):
    """Lagged one-reduction MGS expansion (inverse compact WY projector).

    The pending direction is held unnormalized; the single fused reduction
    of the next step returns its exact squared norm, the lagged row of L,
    and the projection coefficients of its operator image.  The Hessenberg
    column head is written at stash time and the subdiagonal completes one
    step later.
    """

    scheme_id = "icwy-mgs"

    def __init__(self, op, start, capacity, ledger=None, symmetric=False):
        super().__init__(op, capacity, ledger)
        self.symmetric = symmetric
        self._l = np.zeros((capacity, capacity))
        self._u = None
        self._au = None
        self._uscale = 0.0
        if start is not None:
            start = np.asarray(start, dtype=np.float64)
            nrm = float(np.linalg.norm(start))
            if not nrm > 0.0:
                raise ValueError("zero start vector")
            self._u = start.copy()
            self._au = self.op.apply(self._u)
            self._uscale = nrm

    @classmethod
    def resume(cls, op, basis, hbar, capacity, ledger=None, symmetric=False):
        self = cls(op, None, capacity, ledger, symmetric=symmetric)
        basis = np.asarray(basis, dtype=np.float64)
        k = hbar.shape[1]
        self._v[:, : k + 1] = basis
        self._h[: k + 1, :k] = hbar
        self.nbasis = k + 1
        self.hcols = k
        if k + 1 > 1:
            g = mv_trans_mv(basis, basis, ledger=self.ledger)
            self._l[: k + 1, : k + 1] = np.tril(g, -1)
        return self

    def _has_pending(self):
        return self._u is not None

    def _apply_projector(self, s):
        k = len(s)
        if k == 0:
            return s
        L = self._l[:k, :k]
        if self.symmetric:
            y = s - L @ s - L.T @ s
            self.ledger.add_flops(4 * k * k)
        else:
            import scipy.linalg

            y = scipy.linalg.solve_triangular(
                np.eye(k) + L, s, lower=True, unit_diagonal=True
            )
            self.ledger.add_flops(k * k)
        return y

    def _stash(self, u, scale):
        self._u = u
        self._au = self.op.apply(u)
        self._uscale = scale

    def _step(self):
        if self._u is None:
            # resumed without pending work: prime from the last basis column
            v = self.op.apply(self._v[:, self.nbasis - 1])
            s = mv_trans_mv(self.basis, v[:, None], ledger=self.ledger)[:, 0]
            y = self._apply_projector(s)
            u = v.copy()[:, None]
            mv_times_mat_add_mv(u, self.basis, y[:, None], sign=-1.0, ledger=self.ledger)
            self._h[: self.nbasis, self.hcols] = y
            self._stash(u[:, 0], float(np.linalg.norm(v)))
            return True
        j = self.nbasis  # pending column index
        left = np.hstack([self.basis, self._u[:, None]])
        right = np.column_stack([self._u, self._au])
        g = mv_trans_mv(left, right, ledger=self.ledger)
        c = g[:j, 0]
        beta = float(g[j, 0])
        s = g[:j, 1]
        s_piv = float(g[j, 1])
        alpha = float(np.sqrt(max(beta, 0.0)))
        if not alpha > _EPS * np.sqrt(self.m) * self._uscale:
            if j > 0:
                self._h[j, j - 1] = 0.0
                self.hcols = j
            self._u = None
            return self._mark_happy()
        if self.start_norm is None:
            self.start_norm = alpha
        self._v[:, j] = self._u / alpha
        self._l[j, :j] = c / alpha
        if j > 0:
            self._h[j, j - 1] = alpha
            self.hcols = j
        self.nbasis += 1
        s_full = np.append(s, s_piv / alpha) / alpha
        y = self._apply_projector(s_full)
        u = (self._au / alpha)[:, None]
        self.ledger.add_flops(self.m)
        mv_times_mat_add_mv(
            u, self._v[:, : j + 1], y[:, None], sign=-1.0, ledger=self.ledger
        )
        self._h[: j + 1, j] = y
        self._stash(u[:, 0], float(np.linalg.norm(self._au)) / alpha)
        return True

    def _flush(self):
        if self._u is None:
            return
        j = self.nbasis
        alpha = norm2(self._u, ledger=self.ledger)
        if not alpha > _EPS * np.sqrt(self.m) * self._uscale:
            if j > 0:
                self._h[j, j - 1] = 0.0
                self.hcols = j
            self._u = None
            self._mark_happy()
            return
        self._v[:, j] = self._u / alpha
        if j > 0:
            self._h[j, j - 1] = alpha
            self.hcols = j
        self.nbasis += 1
        self._u = None


class _DelayedArnoldi(_BaseArnoldi):
    """One-reduction delayed reorthogonalization expansion.

    With ``corrected=True`` this is the stable variant: Pythagorean norm,
    lagged-coefficient correction, and the Hessenberg correction ledger
    K = T - H C / alpha whose column completes one iteration later.  With
    ``corrected=False`` all three corrections are dropped (the raw lagged
    norm normalizes the uncorrected vector) while the delayed coefficients
    still enter H, the defective variant of Hernandez et al.
    """

    def __init__(self, op, start, capacity, ledger=None, corrected=True):
        super().__init__(op, capacity, ledger)
        self.corrected = corrected
        self.scheme_id = "dcgs2" if corrected else "dcgs2-hrt"
        self._w = None
        self._aw = None
        self._wscale = 0.0
        self._k = None  # pending Hessenberg column (completes with next c)
        if start is not None:
            start = np.asarray(start, dtype=np.float64)
            nrm = float(np.linalg.norm(start))
            if not nrm > 0.0:
                raise ValueError("zero start vector")
            self._w = start.copy()
            self._aw = self.op.apply(self._w)
            self._wscale = nrm

    @classmethod
    def resume(cls, op, basis, hbar, capacity, ledger=None, corrected=True):
        self = cls(op, None, capacity, ledger, corrected=corrected)
        basis = np.asarray(basis, dtype=np.float64)
        k = hbar.shape[1]
        self._v[:, : k + 1] = basis
        self._h[: k + 1, :k] = hbar
        self.nbasis = k + 1
        self.hcols = k
        return self

    def _has_pending(self):
        return self._w is not None

    def _step(self):
        if self._w is None:
            # resumed without pending work: one priming projection of the
            # image of the (already normalized) last basis column
            v = self.op.apply(self._v[:, self.nbasis - 1])
            s = mv_trans_mv(self.basis, v[:, None], ledger=self.ledger)[:, 0]
            w = v.copy()[:, None]
            mv_times_mat_add_mv(w, self.basis, s[:, None], sign=-1.0, ledger=self.ledger)
            self._k = s
            self._w = w[:, 0]
            self._aw = self.op.apply(self._w)
            self._wscale = float(np.linalg.norm(v))
            return True
        j = self.nbasis  # pending column index
        Q = self.basis
        left = np.hstack([Q, self._w[:, None]])
        right = np.column_stack([self._w, self._aw])
        g = mv_trans_mv(left, right, ledger=self.ledger)
        c = g[:j, 0]
        beta = float(g[j, 0])
        s = g[:j, 1]
        s_piv = float(g[j, 1])
        if not np.sqrt(max(beta, 0.0)) > _EPS * np.sqrt(self.m) * self._wscale:
            # pending direction vanished: invariant subspace found
            if j > 0:
                self._h[:j, j - 1] = self._k + c
                self._h[j, j - 1] = 0.0
                self.hcols = j
            self._w = None
            return self._mark_happy()
        if self.corrected:
            alpha_sq = beta - float(c @ c)
            self.ledger.add_flops(2 * j)
            if not alpha_sq > beta * _EPS * _EPS:
                raise BreakdownError(
                    f"cancellation in the delayed norm of basis column {j}",
                    kind="pythagorean",
                    column=j,
                )
            alpha = float(np.sqrt(alpha_sq))
            u = self._w[:, None].copy()
            mv_times_mat_add_mv(u, Q, c[:, None], sign=-1.0, ledger=self.ledger)
            qnew = u[:, 0] / alpha
            t_piv = (s_piv - float(c @ s)) / (alpha * alpha)
            self.ledger.add_flops(2 * j)
        else:
            alpha = float(np.sqrt(beta))
            qnew = self._w / alpha
            t_piv = s_piv / (alpha * alpha)
        if self.start_norm is None:
            self.start_norm = alpha
        t_full = np.append(s / alpha, t_piv)
        # complete the previous Hessenberg column, then ledger the new one
        if j > 0:
            self._h[:j, j - 1] = self._k + c
            self._h[j, j - 1] = alpha
            self.hcols = j
        self._v[:, j] = qnew
        self.nbasis += 1
        if self.corrected:
            hc = self._h[: j + 1, :j] @ c
            self.ledger.add_flops(2 * (j + 1) * j)
            self._k = t_full - hc / alpha
        else:
            self._k = t_full
        vscale = float(np.linalg.norm(self._aw)) / alpha  # pre-projection norm
        w = (self._aw / alpha)[:, None]
        self.ledger.add_flops(self.m)
        mv_times_mat_add_mv(
            w, self._v[:, : j + 1], t_full[:, None], sign=-1.0, ledger=self.ledger
        )
        self._w = w[:, 0]
        self._aw = self.op.apply(self._w)
        self._wscale = vscale
        return True

    def _flush(self):
        if self._w is None:
            return
        j = self.nbasis
        Q = self.basis
        if self.corrected:
            c = mv_trans_mv(Q, self._w[:, None], ledger=self.ledger)[:, 0]
            u = self._w[:, None].copy()
            mv_times_mat_add_mv(u, Q, c[:, None], sign=-1.0, ledger=self.ledger)
            alpha = norm2(u[:, 0], ledger=self.ledger)
        else:
            c = np.zeros(j)
            u = self._w[:, None]
            alpha = norm2(self._w, ledger=self.ledger)
        if not alpha > _EPS * np.sqrt(self.m) * self._wscale:
            if j > 0:
                self._h[:j, j - 1] = self._k + c
                self._h[j, j - 1] = 0.0
                self.hcols = j
            self._w = None
            self._mark_happy()
            return
        if self.start_norm is None:
            self.start_norm = alpha
        if j > 0:
            self._h[:j, j - 1] = self._k + c
            self._h[j, j - 1] = alpha
            self.hcols = j
        self._v[:, j] = u[:, 0] / alpha
        self.nbasis += 1
        self._w = None


class _HouseholderArnoldi(_BaseArnoldi):
    """Walker-style expansion through accumulated Householder reflectors."""

    scheme_id = "householder"

    def __init__(self, op, start, capacity, ledger=None):
        super().__init__(op, capacity, ledger)
        self._refl = np.zeros((self.m, capacity), order="F")
        self._betas = np.zeros(capacity)
        self._nrefl = 0
        if start is not None:
            start = np.asarray(start, dtype=np.float64)
            nrm = float(np.linalg.norm(start))
            if not nrm > 0.0:
                raise ValueError("zero start vector")
            self.start_norm = self._push_reflector(start.copy())
            self._v[:, 0] = self._form_basis_column(0)
            self.nbasis = 1

    @classmethod
    def resume(cls, op, basis, hbar, capacity, ledger=None):
        self = cls(op, None, capacity, ledger)
        basis = np.asarray(basis, dtype=np.float64)
        k = hbar.shape[1]
        # re-encode the orthonormal basis as reflectors; R is +I to rounding
        fac = householder_qr(basis, ledger=self.ledger)
        self._refl[:, : k + 1] = fac.reflectors
        self._betas[: k + 1] = fac.betas
        self._nrefl = k + 1
        self._v[:, : k + 1] = basis
        self._h[: k + 1, :k] = hbar
        self.nbasis = k + 1
        self.hcols = k
        return self

    def _apply_forward(self, z):
        """z <- P_{r-1} ... P_0 z."""
        for i in range(self._nrefl):
            beta = self._betas[i]
            if beta == 0.0:
                continue
            v = self._refl[i:, i]
            w = beta * dot(v, z[i:], ledger=self.ledger)
            mv_times_mat_add_mv(
                z[i:, None], v[:, None], [[w]], sign=-1.0, ledger=self.ledger
            )
        return z

    def _form_basis_column(self, i):
        """q_i = P_0 ... P_i e_i."""
        z = np.zeros(self.m)
        z[i] = 1.0
        for k in range(i, -1, -1):
            beta = self._betas[k]
            if beta == 0.0:
                continue
            v = self._refl[k:, k]
            w = beta * dot(v, z[k:], ledger=self.ledger)
            mv_times_mat_add_mv(
                z[k:, None], v[:, None], [[w]], sign=-1.0, ledger=self.ledger
            )
        return z

    def _push_reflector(self, z):
        """Construct P_r zeroing z below row r; returns the pivot value."""
        r = self._nrefl
        x = z[r:]
        sigma = dot(x[1:], x[1:], ledger=self.ledger)
        v = np.zeros(self.m - r)
        v[0] = 1.0
        if sigma == 0.0:
            beta = 0.0 if x[0] >= 0.0 else 2.0
            pivot = abs(x[0])
        else:
            mu = float(np.sqrt(x[0] * x[0] + sigma))
            v0 = x[0] - mu if x[0] <= 0.0 else -sigma / (x[0] + mu)
            beta = 2.0 * v0 * v0 / (sigma + v0 * v0)
            v[1:] = x[1:] / v0
            pivot = mu
        self._refl[r:, r] = v
        self._betas[r] = beta
        self._nrefl += 1
        return pivot

    def _step(self):
        j = self.nbasis
        v = self.op.apply(self._v[:, j - 1])
        scale = float(np.linalg.norm(v))
        z = self._apply_forward(v.copy())
        self._h[:j, j - 1] = z[:j]
        tail = z[j:]
        if not float(np.linalg.norm(tail)) > _EPS * np.sqrt(self.m) * scale:
            self._h[j, j - 1] = 0.0
            self.hcols = j
            return self._mark_happy()
        pivot = self._push_reflector(z)
        self._h[j, j - 1] = pivot
        self.hcols = j
        self._v[:, j] = self._form_basis_column(j)
        self.nbasis += 1
        return True


def arnoldi(op, start, scheme, capacity, ledger=None, **options):
    """Construct an expansion for a scheme id from a start vector."""
    if scheme in _IMMEDIATE:
        return _ImmediateArnoldi(op, start, scheme, capacity, ledger)
    if scheme == "icwy-mgs":
        return _IcwyArnoldi(op, start, capacity, ledger, **options)
    if scheme == "dcgs2":
        return _DelayedArnoldi(op, start, capacity, ledger, corrected=True)
    if scheme == "dcgs2-hrt":
        return _DelayedArnoldi(op, start, capacity, ledger, corrected=False)
    if scheme == "householder":
        return _HouseholderArnoldi(op, start, capacity, ledger)
    raise UnknownSchemeError(f"unknown scheme {scheme!r}")


def resume_arnoldi(op, basis, hbar, scheme, capacity, ledger=None, **options):
    """Continue an expansion from an existing decomposition A V_k = V_{k+1} Hbar.

    ``basis`` holds k+1 orthonormal columns and ``hbar`` is (k+1)-by-k; the
    bottom coupling row may be dense (generalized Krylov-Schur form).
    """
    basis = np.asarray(basis, dtype=np.float64)
    hbar = np.asarray(hbar, dtype=np.float64)
    if basis.shape[1] != hbar.shape[0] or hbar.shape[0] != hbar.shape[1] + 1:
        raise DimensionError(
            f"expected (m, k+1) basis with (k+1, k) hbar, got {basis.shape} {hbar.shape}"
        )
    if scheme in _IMMEDIATE:
        return _ImmediateArnoldi.resume(op, basis, hbar, scheme, capacity, ledger)
    if scheme == "icwy-mgs":
        return _IcwyArnoldi.resume(op, basis, hbar, capacity, ledger, **options)
    if scheme == "dcgs2":
        return _DelayedArnoldi.resume(op, basis, hbar, capacity, ledger, corrected=True)
    if scheme == "dcgs2-hrt":
        return _DelayedArnoldi.resume(
            op, basis, hbar, capacity, ledger, corrected=False
        )
    if scheme == "householder":
        return _HouseholderArnoldi.resume(op, basis, hbar, capacity, ledger)
    raise UnknownSchemeError(f"unknown scheme {scheme!r}")


def arnoldi_expand(op, start, scheme, steps, ledger=None, **options):
    """Run a fixed-order expansion and return (V, Hbar)."""
    exp = arnoldi(op, start, scheme, capacity=steps + 1, ledger=ledger, **options)
    while exp.order < steps:
        if not exp.step():
            break
    return exp.finalize()
