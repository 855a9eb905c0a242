import numpy as np
import pytest

from kls.arnoldi import ARNOLDI_SCHEMES, arnoldi, arnoldi_expand, resume_arnoldi
from kls.errors import DimensionError
from kls.ledger import SyncLedger
from kls.metrics import loss_of_orthogonality, representation_error_arnoldi
from kls.ortho import qr_factorize
from kls.problems import (
    CsrOperator,
    DenseOperator,
    ManteuffelSpec,
    manteuffel_build,
)

STABLE_SET = ("cgs2", "dcgs2", "mgs", "icwy-mgs", "householder")


@pytest.fixture(scope="module")
def manteuffel10():
    return CsrOperator(manteuffel_build(ManteuffelSpec(k=10)))


@pytest.fixture(scope="module")
def start100():
    return np.random.Generator(np.random.PCG64(77)).standard_normal(100)


@pytest.mark.parametrize("scheme", STABLE_SET)
def test_rre_invariant_on_manteuffel(scheme, manteuffel10, start100):
    v, h = arnoldi_expand(manteuffel10, start100, scheme, steps=40)
    assert v.shape == (100, 41) and h.shape == (41, 40)
    assert representation_error_arnoldi(manteuffel10, v, h) <= 1e-12
    assert not np.any(np.tril(h, -2))
    assert np.all(np.diag(h, -1) >= 0)


@pytest.mark.parametrize("scheme", ("cgs2", "dcgs2", "householder"))
def test_loo_machine_level_for_reorthogonalized(scheme, manteuffel10, start100):
    v, _ = arnoldi_expand(manteuffel10, start100, scheme, steps=40)
    assert loss_of_orthogonality(v) <= 1e-13


def test_random_operator_rre(rng):
    op = DenseOperator(rng.standard_normal((50, 50)))
    v, h = arnoldi_expand(op, rng.standard_normal(50), "dcgs2", steps=10)
    assert representation_error_arnoldi(op, v, h) <= 1e-12
    v, h = arnoldi_expand(op, rng.standard_normal(50), "cgs2", steps=5)
    assert representation_error_arnoldi(op, v, h) <= 1e-13
    assert loss_of_orthogonality(v) <= 1e-14


def test_h_agreement_dcgs2_vs_cgs2(start100, manteuffel10):
    v1, h1 = arnoldi_expand(manteuffel10, start100, "cgs2", steps=10)
    v2, h2 = arnoldi_expand(manteuffel10, start100, "dcgs2", steps=10)
    anorm = np.linalg.norm(manteuffel10.to_dense())
    assert np.max(np.abs(h1 - h2)) <= 1e-9 * anorm


def test_reduction_counts_per_step(manteuffel10, start100):
    # per-iteration synchronizations; the start normalization is setup
    per_step = {"cgs": 2, "cgs2": 3, "cgs2-lagged": 2, "mgs": None, "dcgs2": 1}
    for scheme, expect in per_step.items():
        led = SyncLedger()
        exp = arnoldi(manteuffel10, start100, scheme, capacity=12, ledger=led)
        for step in range(1, 9):
            before = led.reductions
            exp.step()
            got = led.reductions - before
            if expect is not None:
                assert got == expect, scheme
            else:  # mgs projects against the full basis incl. the start vector
                assert got == step + 1


def test_delayed_totals_steps_plus_two(manteuffel10, start100):
    for steps in (1, 5, 25):
        led = SyncLedger()
        manteuffel10.napply = 0
        v, h = arnoldi_expand(manteuffel10, start100, "dcgs2", steps=steps, ledger=led)
        assert led.reductions <= steps + 2
        assert v.shape[1] == steps + 1
        # one operator application per step plus the eager start image
        assert manteuffel10.napply == steps + 1


def test_icwy_totals_steps_plus_one(manteuffel10, start100):
    led = SyncLedger()
    arnoldi_expand(manteuffel10, start100, "icwy-mgs", steps=20, ledger=led)
    assert led.reductions == 21


def test_identity_operator_happy_breakdown():
    op = DenseOperator(np.eye(7))
    for scheme in ARNOLDI_SCHEMES:
        exp = arnoldi(op, np.ones(7), scheme, capacity=8)
        while exp.step():
            pass
        v, h = exp.finalize()
        assert exp.happy
        assert v.shape == (7, 1) and h.shape == (1, 1)
        assert h[0, 0] == pytest.approx(1.0, rel=1e-14)


def test_eigenvector_start_immediate_breakdown():
    op = DenseOperator(np.diag([1.0, 2.0, 3.0]))
    exp = arnoldi(op, np.array([1.0, 0.0, 0.0]), "cgs2", capacity=4)
    assert exp.step() is False
    v, h = exp.finalize()
    assert exp.happy
    assert h.shape == (1, 1) and h[0, 0] == pytest.approx(1.0)
    assert np.allclose(v[:, 0], [1.0, 0.0, 0.0])


def test_zero_start_rejected():
    with pytest.raises(ValueError):
        arnoldi(DenseOperator(np.eye(3)), np.zeros(3), "cgs2", capacity=3)


def test_capacity_guard(manteuffel10, start100):
    exp = arnoldi(manteuffel10, start100, "cgs2", capacity=3)
    exp.step()
    exp.step()
    with pytest.raises(DimensionError):
        exp.step()


@pytest.mark.parametrize("scheme", ("cgs2", "mgs", "icwy-mgs", "dcgs2", "householder"))
def test_resume_keeps_expansion_valid(scheme, manteuffel10, start100):
    v0, h0 = arnoldi_expand(manteuffel10, start100, "cgs2", steps=10)
    exp = resume_arnoldi(manteuffel10, v0, h0, scheme, capacity=30)
    while exp.order < 25:
        exp.step()
    v, h = exp.finalize()
    assert v.shape == (100, 26) and h.shape == (26, 25)
    assert representation_error_arnoldi(manteuffel10, v, h) <= 1e-12
    assert np.allclose(h[:11, :10], h0, atol=1e-14)


def test_resume_with_generalized_coupling_row(manteuffel10, start100):
    # dense bottom rows (thick-restart form) must expand just as cleanly
    v0, h0 = arnoldi_expand(manteuffel10, start100, "cgs2", steps=8)
    hbar = h0.copy()
    hbar[8, :] = 0.3 * np.arange(1.0, 9.0)  # synthetic coupling row
    dense = manteuffel10.to_dense()
    # build a consistent decomposition: A V8' = V9' Hbar with modified last row
    # is not exact, so instead verify only the newly appended columns satisfy
    # the relation residual restricted to new columns
    for scheme in ("cgs2", "dcgs2"):
        exp = resume_arnoldi(manteuffel10, v0, hbar, scheme, capacity=20)
        while exp.order < 14:
            exp.step()
        v, h = exp.finalize()
        new = slice(8, 14)
        resid = dense @ v[:, new] - v @ h[:, new]
        assert np.linalg.norm(resid) <= 1e-12 * np.linalg.norm(dense)


def test_resume_orthogonality_icwy_gram_seed(manteuffel10, start100):
    led = SyncLedger()
    v0, h0 = arnoldi_expand(manteuffel10, start100, "cgs2", steps=10)
    exp = resume_arnoldi(manteuffel10, v0, h0, "icwy-mgs", capacity=30, ledger=led)
    seeded = led.reductions  # one fused Gram reduction seeds L
    assert seeded == 1
    while exp.order < 20:
        exp.step()
    v, h = exp.finalize()
    assert loss_of_orthogonality(v) <= 1e-11


def test_arnoldi_flop_overhead_is_quadratic(manteuffel10, start100):
    # the Hessenberg correction costs an extra Theta(j^2) per delayed step
    n = 40
    led_a = SyncLedger()
    arnoldi_expand(manteuffel10, start100, "dcgs2", steps=n, ledger=led_a)
    led_q = SyncLedger()
    a = np.column_stack([start100] + [
        np.random.Generator(np.random.PCG64(j)).standard_normal(100)
        for j in range(n - 1)
    ])
    qr_factorize(a, "dcgs2", ledger=led_q)
    diff = led_a.flops - led_q.flops
    cubic = sum(2 * (j + 1) * j for j in range(1, n + 1))
    # matvec-free extras: H C correction (quadratic per step) plus the m-flop
    # rescale per step; everything else matches the QR kernel pattern
    assert 0.5 * cubic <= diff <= 2.0 * cubic + 4 * n * 100


def test_hrt_representation_defect_grows(manteuffel10, start100):
    v, h = arnoldi_expand(manteuffel10, start100, "dcgs2-hrt", steps=60)
    v2, h2 = arnoldi_expand(manteuffel10, start100, "dcgs2", steps=60)
    assert representation_error_arnoldi(manteuffel10, v, h) > 10 * representation_error_arnoldi(manteuffel10, v2, h2)


def test_manteuffel50_long_run_curves():
    op = CsrOperator(manteuffel_build(ManteuffelSpec(k=50)))
    start = np.random.Generator(np.random.PCG64(5)).standard_normal(op.n)
    loo = {}
    rre = {}
    for scheme in ("cgs", "mgs", "cgs2", "dcgs2", "dcgs2-hrt"):
        v, h = arnoldi_expand(op, start, scheme, steps=300)
        loo[scheme] = loss_of_orthogonality(v)
        rre[scheme] = representation_error_arnoldi(op, v, h)
    assert loo["cgs2"] <= 1e-12 and loo["dcgs2"] <= 1e-12
    assert rre["cgs2"] <= 1e-13 and rre["dcgs2"] <= 1e-13
    assert loo["dcgs2-hrt"] > 1e-8  # tracks the unstable classical curve
    assert loo["cgs"] > 1e-8
    assert loo["cgs2"] <= loo["mgs"] <= 100 * loo["cgs"]


def test_finalize_without_steps_single_column(manteuffel10, start100):
    for scheme in ("dcgs2", "icwy-mgs", "cgs2"):
        exp = arnoldi(manteuffel10, start100, scheme, capacity=4)
        v, h = exp.finalize()
        assert v.shape == (100, 1) and h.shape == (1, 0)
        assert np.linalg.norm(v[:, 0]) == pytest.approx(1.0, rel=1e-13)


def test_mid_run_extended_views(manteuffel10, start100):
    exp = arnoldi(manteuffel10, start100, "dcgs2", capacity=10)
    for _ in range(6):
        exp.step()
    q = exp.basis_extended
    h = exp.h_extended
    assert q.shape[1] == h.shape[0] == h.shape[1] + 1
    assert representation_error_arnoldi(manteuffel10, q, h) <= 1e-13
