"""Krylov-Schur eigenvalue solver with locking and thick restarts.

The solver expands an Arnoldi decomposition to the basis budget, Schur
decomposes the small matrix, locks Ritz blocks whose Arnoldi residual
passes the tolerance, and thick-restarts with the locked vectors plus the
best remaining Schur vectors.  Converged values are always validated by
the residual |b^T y| of the (possibly generalized) coupling row, so every
reported eigenvalue passed the test at lock time.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .arnoldi import arnoldi, resume_arnoldi
from .errors import DimensionError
from .kernels import mv_times_mat_add_mv, mv_trans_mv, norm2
from .ledger import SyncLedger
from .problems import CsrMatrix, LinearOperator
from .schur import (
    SchurForm,
    hessenberg_real_schur,
    hessenberg_reduce,
    move_blocks_front,
    schur_eigenvectors,
)


@dataclass(frozen=True)
class KrylovSchurConfig:
    """Restart policy: expand to ``max_basis``, keep ``keep`` active Schur
    vectors (default max_basis // 2) plus every locked vector."""

    max_basis: int
    keep: int = None
    tol: float = 1e-7
    max_restarts: int = 100
    scheme: str = "cgs2"

    def __post_init__(self):
        keep = self.keep if self.keep is not None else max(1, self.max_basis // 2)
        if not 1 <= keep < self.max_basis:
            raise ValueError("1 <= keep < max_basis required")
        if self.tol <= 0:
            raise ValueError("tol > 0 required")
        object.__setattr__(self, "keep", keep)


@dataclass
class EigResult:
    values: np.ndarray  # locked Ritz values (complex, conjugate pairs adjacent)
    vectors: np.ndarray  # corresponding Ritz vectors, one column per value
    residuals: np.ndarray  # Arnoldi residual of each value at lock time
    invariant_dim: int
    restarts: int
    incomplete: bool  # restart budget exhausted before the basis filled
    over_multiplicity: bool  # a value matched an exact eigenvalue already used up
    lock_history: list = field(default_factory=list)  # invariant dim per restart
    diagnostics: dict = field(default_factory=dict)


def ritz_residual(hbar, y):
    """Arnoldi residual |b^T y| from the coupling row of an extended H.

    For a Hessenberg extension the coupling row is h_{n+1,n} e_n^T, so this
    is |h_{n+1,n}| |e_n^T y|; generalized rows from Krylov-Schur restarts
    are handled identically.
    """
    hbar = np.asarray(hbar)
    k = hbar.shape[1]
    if hbar.shape[0] == k:  # invariant subspace: no coupling row
        return 0.0
    return float(abs(hbar[k, :k] @ np.asarray(y)))


@dataclass(frozen=True)
class MatchReport:
    n_matched: int
    forward_errors: np.ndarray
    assignments: list  # (computed value, matched exact value) pairs
    unmatched: list
    over_multiplicity: bool


def match_eigenvalues(computed, table, tol):
    """Greedy nearest matching against an exact spectrum with multiplicities.

    Each computed value takes the closest exact eigenvalue that still has
    multiplicity budget; a value whose nearest exact eigenvalue lies within
    tol but is already exhausted raises the over-multiplicity flag (the
    solver found the same eigenvalue too many times).
    """
    unique = np.asarray(table.unique, dtype=np.float64)
    budget = np.array(table.multiplicity, dtype=np.int64)
    assignments = []
    errors = []
    unmatched = []
    over = False
    for x in np.atleast_1d(np.asarray(computed)):
        dist = np.abs(unique - x)
        order = np.argsort(dist)
        pick = None
        for i in order:
            if dist[i] >= tol:
                break
            if budget[i] > 0:
                pick = i
                break
        if pick is not None:
            budget[pick] -= 1
            assignments.append((x, unique[pick]))
            errors.append(dist[pick])
        else:
            unmatched.append(x)
            if dist[order[0]] < tol:
                over = True
    return MatchReport(
        n_matched=len(assignments),
        forward_errors=np.array(errors),
        assignments=assignments,
        unmatched=unmatched,
        over_multiplicity=over,
    )


def _schur_active(m_block):
    """Real Schur of a dense block via Hessenberg reduction."""
    h, u = hessenberg_reduce(m_block)
    form = hessenberg_real_schur(h)
    return SchurForm(form.t, u @ form.z)


def _block_residuals(t, b_row):
    """Per-block Arnoldi residuals |b^T y| from a quasi-triangular block."""
    form = SchurForm(t, np.eye(t.shape[0]))
    blocks = form.blocks()
    vals, vecs = schur_eigenvectors(form)
    resid = np.array([abs(b_row @ vecs[:, i]) for i in range(len(blocks))])
    return blocks, vals, resid


def _fresh_direction(basis, rng, ledger):
    """Random start vector orthogonalized against a locked basis."""
    for _ in range(5):
        v = rng.standard_normal(basis.shape[0])
        v = v[:, None]
        for _ in range(2):
            s = mv_trans_mv(basis, v, ledger=ledger)
            mv_times_mat_add_mv(v, basis, s, sign=-1.0, ledger=ledger)
        nrm = norm2(v[:, 0], ledger=ledger)
        if nrm > 1e-8:
            return v[:, 0] / nrm
    raise RuntimeError("could not generate a direction outside the locked space")


def krylov_schur_run(op, cfg, seed, ledger=None, exact=None):
    """Run Krylov-Schur on a square operator.

    ``exact`` is an optional EigenvalueTable; when given, locked values are
    checked against it every cycle and over-multiplicity matches set the
    result's error flag.  The returned invariant dimension counts locked
    Schur vectors and never decreases across restarts.
    """
    m = op.shape[0]
    n_max = min(cfg.max_basis, m)
    ledger = ledger if ledger is not None else SyncLedger()
    rng = np.random.Generator(np.random.PCG64(seed))
    exp = arnoldi(op, rng.standard_normal(m), cfg.scheme, n_max + 1, ledger=ledger)

    nlock = 0
    lock_resid = []
    lock_history = []
    over_mult = False
    v_mat = None
    h_mat = None
    restarts = 0
    incomplete = False

    while True:
        while exp.order < n_max and exp.step():
            pass
        v_mat, h_mat = exp.finalize()
        k = h_mat.shape[1]
        happy = exp.happy
        mm = h_mat[:k, :k].copy()
        b_row = np.zeros(k) if happy else h_mat[k, :k].copy()

        # Schur of the active block; locked leading corner stays untouched
        na = k - nlock
        if na > 0:
            subform = _schur_active(mm[nlock:, nlock:])
            b_act = b_row[nlock:] @ subform.z
            blocks, _, resid = _block_residuals(subform.t, b_act)
            conv = resid < cfg.tol

            # keep every converged block plus the lowest-residual survivors,
            # leaving one column of expansion headroom (block aligned)
            conv_cols = int(sum(blocks[b][1] for b in range(len(blocks)) if conv[b]))
            if happy:
                unconv_budget = na
            else:
                unconv_budget = max(min(cfg.keep, k - 1 - nlock - conv_cols), 0)
            sel = np.zeros(len(blocks), dtype=bool)
            kept_unconv = 0
            for b in np.lexsort((resid, ~conv)):
                size = blocks[b][1]
                if conv[b]:
                    sel[b] = True
                elif kept_unconv + size <= unconv_budget:
                    sel[b] = True
                    kept_unconv += size
            p_active = int(sum(blocks[b][1] for b in range(len(blocks)) if sel[b]))

            # reorder: selected to the front, converged leading the selection
            move_blocks_front(subform, sel)
            b_act = b_row[nlock:] @ subform.z
            blocks, _, resid = _block_residuals(subform.t, b_act)
            move_blocks_front(subform, resid < cfg.tol)
            b_act = b_row[nlock:] @ subform.z
            blocks, _, resid = _block_residuals(subform.t, b_act)
            conv = resid < cfg.tol

            # lock the contiguous converged front and deflate its coupling
            nconv_cols = 0
            nconv_resid = []
            for b, (start, size) in enumerate(blocks):
                if start != nconv_cols or not conv[b]:
                    break
                nconv_cols += size
                nconv_resid.extend([resid[b]] * size)
            b_act[:nconv_cols] = 0.0

            mm[nlock:, nlock:] = subform.t
            if nlock:
                mm[:nlock, nlock:] = mm[:nlock, nlock:] @ subform.z
            v_act = v_mat[:, nlock:k] @ subform.z

            p = nlock + p_active
            v_keep = np.hstack([v_mat[:, :nlock], v_act])[:, :p]
            b_keep = np.concatenate([np.zeros(nlock), b_act])[:p]
            lock_resid.extend(nconv_resid)
            nlock += nconv_cols
            b_keep[:nlock] = 0.0
        else:
            p = nlock
            v_keep = v_mat[:, :p]
            b_keep = np.zeros(p)
            happy = True

        if exact is not None and nlock:
            t_lock = mm[:nlock, :nlock]
            locked_vals = SchurForm(t_lock, np.eye(nlock)).eigenvalues()
            rep = match_eigenvalues(locked_vals.real, exact, cfg.tol)
            if rep.over_multiplicity:
                over_mult = True

        mm_keep = mm[:p, :p]
        done_full = nlock >= min(m, n_max)
        restarts += 1
        lock_history.append(nlock)
        if done_full or restarts >= cfg.max_restarts:
            incomplete = not done_full
            v_mat = v_keep
            h_mat = np.vstack([mm_keep, b_keep])
            break

        # rebuild the decomposition and resume
        if happy:
            if p >= n_max:
                v_mat = v_keep
                h_mat = np.vstack([mm_keep, b_keep])
                break
            fresh = _fresh_direction(v_keep, rng, ledger)
            v_next = np.hstack([v_keep, fresh[:, None]])
            hbar = np.vstack([mm_keep, np.zeros(p)])
        else:
            v_next = np.hstack([v_keep, v_mat[:, k : k + 1]])
            hbar = np.vstack([mm_keep, b_keep])
        exp = resume_arnoldi(op, v_next, hbar, cfg.scheme, n_max + 1, ledger=ledger)

    # extract locked Ritz values and vectors
    t_lock = h_mat[:nlock, :nlock]
    if nlock:
        lock_form = SchurForm(t_lock, np.eye(nlock))
        blocks = lock_form.blocks()
        vals, vecs = schur_eigenvectors(lock_form)
        values = []
        vectors = []
        residuals = []
        for i, (start, size) in enumerate(blocks):
            z = v_mat[:, :nlock] @ vecs[:, i]
            values.append(vals[i])
            vectors.append(z)
            residuals.append(lock_resid[start])
            if size == 2:
                values.append(np.conj(vals[i]))
                vectors.append(np.conj(z))
                residuals.append(lock_resid[start + 1])
        values = np.array(values)
        vectors = np.array(vectors).T
        residuals = np.array(residuals)
    else:
        values = np.zeros(0, dtype=complex)
        vectors = np.zeros((m, 0), dtype=complex)
        residuals = np.zeros(0)

    return EigResult(
        values=values,
        vectors=vectors,
        residuals=residuals,
        invariant_dim=nlock,
        restarts=restarts,
        incomplete=incomplete,
        over_multiplicity=over_mult,
        lock_history=lock_history,
    )


def eig_diagnostics(a, full=True, max_order=3000):
    """Dense operator diagnostics: norms, conditioning, nonnormality.

    With ``full`` the left/right eigenvector bases and per-eigenvalue
    condition numbers are included (cubic-cost dense eigendecomposition).
    """
    if isinstance(a, LinearOperator):
        a = a.to_dense(max_order=max_order)
    elif isinstance(a, CsrMatrix):
        a = a.to_dense()
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[0]
    if a.ndim != 2 or a.shape[1] != n:
        raise DimensionError(f"square matrix expected, got {a.shape}")
    if n > max_order:
        raise MemoryError(f"dense diagnostics of order {n} refused (limit {max_order})")
    sv = np.linalg.svd(a, compute_uv=False)
    fro2 = float(np.sum(sv * sv))
    comm = a.T @ a - a @ a.T
    out = {
        "norm2": float(sv[0]),
        "cond": float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf,
        "nonnormality": float(np.linalg.norm(comm) / fro2),
    }
    if full:
        w, vl, vr = scipy.linalg.eig(a, left=True, right=True)
        out["cond_right"] = float(np.linalg.cond(vr))
        out["cond_left"] = float(np.linalg.cond(vl))
        overlap = np.abs(np.sum(vl.conj() * vr, axis=0))
        cond_eigs = 1.0 / np.maximum(overlap, np.finfo(float).tiny)
        out["cond_eig_max"] = float(np.max(cond_eigs))
        out["cond_eig_min"] = float(np.min(cond_eigs))
        out["eigenvalues"] = w
    return out
