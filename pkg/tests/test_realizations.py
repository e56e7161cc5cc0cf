import numpy as np
import pytest

from extsnyder.fock_core import FockBasis, ModelParams, PhaseSpace, commutator, interior_mask
from extsnyder.realizations import (RealizationKind, algebra_report, fit_order, realize,
                                    relation_residual, relations_for, rotation_generators,
                                    unified_component_mismatch)

LAMS = [0.05, 0.1, 0.2]


@pytest.fixture(scope="module")
def small():
    p = ModelParams(d=2, n_max=4, beta=0.7, tensor_mass=1.3, omega=1.1)
    return p, FockBasis(p)


def test_parse_aliases():
    assert RealizationKind.parse("moyal") is RealizationKind.MOYAL_DYNAMICAL
    assert RealizationKind.parse("unified") is RealizationKind.WEYL_UNIFIED
    with pytest.raises(ValueError):
        RealizationKind.parse("snyder")


def test_lambda_zero_is_canonical(small):
    p, b = small
    ph = PhaseSpace.for_params(b, p)
    for kind in RealizationKind:
        r = realize(b, p, kind, phase=ph, lam=0.0)
        assert (r.x(1) - ph.x(1)).max_abs() == 0
        assert (r.x(1, 2) - ph.x(1, 2)).max_abs() == 0


def test_weyl_coordinate_defects_are_second_order(small):
    p, b = small
    rep = algebra_report(b, p, "weyl", LAMS, margin=2)
    assert rep.passed
    for res in rep.results:
        if res.expected == "order2" and res.order is not None:
            assert abs(res.order - 2) < 0.01
    # the first-order relations hold exactly
    assert max(rep.result("mixed:x_i,p_j").residuals) <= 1e-12
    assert max(rep.result("mom:p,p").residuals) == 0


def test_weyl_defect_nonzero_at_margin_two(small):
    p, b = small
    rep = algebra_report(b, p, "weyl", LAMS, margin=2)
    assert max(rep.result("coord:x_i,x_j").residuals) > 1e-4


def test_classical_keeps_vector_heisenberg(small):
    p, b = small
    rep = algebra_report(b, p, "classical", [0.1, 0.3, 0.5], margin=2)
    assert rep.passed
    assert max(rep.result("mixed:x_i,p_j").residuals) <= 1e-12


@pytest.mark.parametrize("d,n_max", [(2, 4), (3, 2)])
def test_moyal_realization_closes_exactly(d, n_max):
    p = ModelParams(d=d, n_max=n_max, beta=0.7, tensor_mass=1.3, omega=1.1)
    b = FockBasis(p)
    rep = algebra_report(b, p, "moyal", [0.1, 0.25, 0.5], margin=2 if n_max == 4 else 1)
    assert rep.passed
    for res in rep.results:
        assert res.expected == "exact"
        assert max(res.residuals) <= res.tol


def test_flipped_sign_is_detected(small):
    p, b = small
    rep = algebra_report(b, p, "weyl", LAMS, margin=2, flip_sign=True)
    assert not rep.passed
    failing = [r.relation_id for r in rep.results if not r.passed]
    assert any(rid.startswith("mixed") or rid.startswith("cov") for rid in failing)


def test_unified_form_matches_component_form(small):
    p, b = small
    assert unified_component_mismatch(b, p, lam=0.3) < 1e-14
    p3 = ModelParams(d=3, n_max=2, beta=0.6)
    assert unified_component_mismatch(FockBasis(p3), p3, lam=0.3) < 1e-14


def test_rotation_algebra_sign():
    p = ModelParams(d=3, n_max=2)
    b = FockBasis(p)
    m = rotation_generators(PhaseSpace.for_params(b, p))
    c = commutator(m[(1, 2)], m[(2, 3)])
    # [M_12, M_23] = -i M_13, read off the rotation algebra with delta_jk on the first slot
    mask = interior_mask(b, 1)
    diff = (c + m[(1, 3)] * 1j).toarray()[np.ix_(mask, mask)]
    assert np.abs(diff).max() < 1e-12
    summed = (c - m[(1, 3)] * 1j).toarray()[np.ix_(mask, mask)]
    assert np.abs(summed).max() > 0.1


def test_covariance_relations_weyl(small):
    p, b = small
    rep = algebra_report(b, p, "weyl", LAMS, margin=2)
    for res in rep.results:
        if res.relation_id.startswith("cov:"):
            assert res.passed and max(res.residuals) <= 1e-10


def test_interior_is_truncation_free():
    """Interior blocks of relation defects do not change when n_max grows."""
    lam = 0.2
    blocks = []
    for n_max in (4, 6):
        p = ModelParams(d=2, n_max=n_max, beta=0.7, tensor_mass=1.3, omega=1.1)
        b = FockBasis(p)
        r = realize(b, p, "weyl", lam=lam)
        rel = {x.relation_id: x for x in relations_for(r, 2)}["coord:x_i,x_j"]
        (op,) = list(rel.defects())
        keep = np.flatnonzero(b.states.max(axis=1) <= 2)
        blocks.append(op.toarray()[np.ix_(keep, keep)])
    assert np.abs(blocks[0] - blocks[1]).max() < 1e-12


def test_residual_at_full_margin_is_empty():
    p = ModelParams(d=2, n_max=4)
    b = FockBasis(p)
    r = realize(b, p, "weyl", lam=0.2)
    rel = {x.relation_id: x for x in relations_for(r, 4)}["coord:x_i,x_j"]
    assert relation_residual(rel.defects, 4) == 0.0


def test_fit_order_validation():
    assert fit_order([0.1, 0.2, 0.4], [0.01, 0.04, 0.16]) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        fit_order([0.1, 0.2], [0.0, 0.1])


def test_report_serializes(small):
    p, b = small
    d = algebra_report(b, p, "moyal", [0.1], margin=2).as_dict()
    assert d["pass"] is True
    assert {"relation_id", "residual", "fitted_order", "pass"} <= set(d["relations"][0])
