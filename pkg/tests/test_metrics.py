import numpy as np
import pytest

from kls.arnoldi import arnoldi_expand
from kls.dense import householder_qr, random_orthogonal
from kls.errors import DimensionError
from kls.metrics import (
    forward_error_count,
    loss_of_orthogonality,
    representation_error_arnoldi,
    representation_error_qr,
)
from kls.problems import (
    CsrOperator,
    ManteuffelSpec,
    manteuffel_build,
    manteuffel_eigenvalues,
)


def test_loo_identity_zero():
    assert loss_of_orthogonality(np.eye(5)) == 0.0


def test_loo_duplicated_column():
    q = np.zeros((4, 2))
    q[0, 0] = 1.0
    q[0, 1] = 1.0  # duplicated unit column: two off-diagonal ones
    assert loss_of_orthogonality(q) == pytest.approx(np.sqrt(2.0))


def test_loo_householder_factor():
    rng = np.random.Generator(np.random.PCG64(5))
    q = householder_qr(rng.standard_normal((500, 50))).thin_q()
    assert loss_of_orthogonality(q) <= 1e-13


def test_rre_qr_exact_and_degenerate(rng):
    a = rng.standard_normal((30, 6))
    fac = householder_qr(a)
    q = fac.thin_q()
    assert representation_error_qr(a, q, fac.r) <= 1e-15
    assert representation_error_qr(a, q, np.zeros_like(fac.r)) == pytest.approx(1.0)


def test_metrics_invariant_under_sign_flips(rng):
    a = rng.standard_normal((40, 8))
    fac = householder_qr(a)
    q, r = fac.thin_q(), fac.r
    signs = np.array([1, -1, 1, -1, -1, 1, 1, -1], dtype=float)
    q2 = q * signs[None, :]
    r2 = r * signs[:, None]
    assert loss_of_orthogonality(q2) == pytest.approx(
        loss_of_orthogonality(q), abs=1e-15
    )
    assert representation_error_qr(a, q2, r2) == pytest.approx(
        representation_error_qr(a, q, r), abs=1e-16
    )


def test_rre_arnoldi_exact_and_perturbed(rng):
    op = CsrOperator(manteuffel_build(ManteuffelSpec(k=6)))
    v, h = arnoldi_expand(op, rng.standard_normal(op.n), "cgs2", steps=12)
    assert representation_error_arnoldi(op, v, h) <= 1e-14
    h2 = h.copy()
    h2[0, 0] += 1.0
    dense_fro = np.linalg.norm(op.to_dense())
    expected = 1.0 / dense_fro  # single-entry perturbation of unit size
    assert representation_error_arnoldi(op, v, h2) == pytest.approx(expected, rel=1e-6)


def test_rre_arnoldi_no_incremental_drift(rng):
    op = CsrOperator(manteuffel_build(ManteuffelSpec(k=6)))
    v, h = arnoldi_expand(op, rng.standard_normal(op.n), "dcgs2", steps=15)
    a1 = representation_error_arnoldi(op, v, h)
    a2 = representation_error_arnoldi(op, v.copy(), h.copy())
    assert a1 == pytest.approx(a2, abs=1e-15)


def test_rre_arnoldi_shape_guard(rng):
    with pytest.raises(DimensionError):
        representation_error_arnoldi(np.eye(4), np.ones((4, 3)), np.ones((3, 3)))


def test_forward_error_count_trivial():
    spec = ManteuffelSpec(k=3)
    table = manteuffel_eigenvalues(spec)
    assert forward_error_count(table.values.copy(), table, 1e-7) == 9
    assert forward_error_count(np.zeros(0), table, 1e-7) == 0


def test_stability_report_validation():
    from kls.metrics import StabilityReport

    rep = StabilityReport(scheme="dcgs2", step=10, loo=1e-15, rre=1e-16)
    assert rep.n_forward_converged == -1
    with pytest.raises(ValueError):
        StabilityReport(scheme="cgs", step=5, loo=-1.0, rre=0.0)
    with pytest.raises(ValueError):
        StabilityReport(
            scheme="cgs", step=5, loo=0.0, rre=0.0, n_forward_converged=9
        )
    ok = StabilityReport(
        scheme="cgs2", step=25, loo=0.0, rre=0.0,
        n_forward_converged=20, invariant_dim=22, kappa=1e4,
    )
    assert ok.invariant_dim == 22
