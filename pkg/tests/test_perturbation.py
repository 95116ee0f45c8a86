"""Metric-family derivatives: delta fields, expansion terms, parallelism."""

import numpy as np
import pytest

import sdweyl.charts as ch
import sdweyl.perturbation as pb
from sdweyl.errors import HypothesisViolated, StencilOutsideValidity


def _es_points(n, seed=5):
    spec = ch.make_spec("EuclideanSchwarzschild")
    return spec, ch.sample_points(spec, n, np.random.default_rng(seed))


def _mass_curve(dm=0.05, **kw):
    base = ch.make_spec("EuclideanSchwarzschild")
    return ch.CurveSpec(base=base, family=("mass", dm), **kw)


def _gauge_curve(rho=30.0, **kw):
    base = ch.make_spec("EuclideanSchwarzschild")
    flow = ch.FlowSpec(center=(12.5, 5.5, 1.55, 3.14), rho=rho)
    return ch.CurveSpec(base=base, family=("gauge", flow), **kw)


def _bump_curve(base=None, amplitude=0.3, **kw):
    base = base if base is not None else ch.make_spec("EuclideanSchwarzschild")
    field = ch.ScalarField(kind="bump", amplitude=amplitude,
                           center=(12.5, 5.5, 1.55, 3.1), width=6.0)
    return ch.CurveSpec(base=base, family=("conformal_bump", field), **kw)


def test_mass_delta_metric_matches_analytic():
    # g(m) is linear in m except g_rr = 1/(1 - 2m/r); both derivatives are
    # closed-form
    dm = 0.05
    spec, pts = _es_points(8)
    df = pb.delta_fields(_mass_curve(dm), "metric", pts)
    r, th = pts[:, 1], pts[:, 2]
    f = 1.0 - 2.0 / r
    expect1 = np.zeros(df.delta.shape)
    expect1[:, 0, 0] = -2.0 / r
    expect1[:, 1, 1] = (2.0 / r) / f ** 2
    expect2 = np.zeros(df.delta.shape)
    expect2[:, 1, 1] = 8.0 / (r ** 2 * f ** 3)
    scale = np.max(np.abs(expect1))
    np.testing.assert_allclose(df.delta, dm * expect1, rtol=0,
                               atol=1e-9 * scale)
    np.testing.assert_allclose(df.delta2, dm ** 2 * expect2, rtol=0,
                               atol=1e-7 * scale)
    np.testing.assert_allclose(df.base[:, 2, 2], r ** 2, rtol=1e-13)
    assert df.stencil[0] == -2.0 * 1e-3 and df.stencil[-1] == 2.0 * 1e-3


def test_delta_scales_linearly_in_family_speed():
    spec, pts = _es_points(5)
    d1 = pb.delta_fields(_mass_curve(0.05), "metric", pts).delta
    d2 = pb.delta_fields(_mass_curve(0.10), "metric", pts).delta
    np.testing.assert_allclose(d2, 2.0 * d1, rtol=0,
                               atol=1e-8 * np.max(np.abs(d1)))


def test_omega_delta_matches_analytic():
    # Omega = (2m/r^3)^{1/3}, so dOmega/ds = dm (2/r^3)^{1/3} / (3 m^{2/3})
    dm = 0.05
    spec, pts = _es_points(6)
    df = pb.delta_fields(_mass_curve(dm), "Omega", pts)
    r = pts[:, 1]
    np.testing.assert_allclose(df.base, (2.0 / r ** 3) ** (1.0 / 3.0),
                               rtol=1e-11)
    np.testing.assert_allclose(df.delta, dm * (2.0 / r ** 3) ** (1.0 / 3.0) / 3.0,
                               rtol=1e-8)


def test_richardson_order_resolved_for_curved_quantity():
    # the trace-free Ricci of the bump family varies genuinely with s; a
    # five-point stencil at three levels should expose fourth-order decay
    spec, pts = _es_points(4)
    df = pb.delta_fields(_bump_curve(s_step=0.05), "E", pts)
    assert df.richardson_order is not None
    assert df.richardson_order > 2.5
    assert df.truncation_delta2 < 1e-5


def test_delta_fields_unknown_quantity():
    spec, pts = _es_points(2)
    with pytest.raises(ValueError):
        pb.delta_fields(_mass_curve(), "curvature", pts)


def test_stencil_respects_declared_validity():
    spec, pts = _es_points(2)
    curve = _mass_curve(s_step=0.02, s_validity=0.01)
    with pytest.raises(StencilOutsideValidity):
        pb.delta_fields(curve, "metric", pts)


def test_difference_tensor_vanishes_at_base():
    spec, pts = _es_points(6)
    out = pb.difference_tensor(_mass_curve(), 0.0, pts)
    assert np.max(np.abs(out.C)) < 1e-14
    assert out.nabla_residual < 1e-14


def test_difference_tensor_matches_christoffel_difference():
    spec, pts = _es_points(6)
    out = pb.difference_tensor(_mass_curve(), 0.2, pts)
    assert np.max(np.abs(out.C)) > 1e-4        # genuinely distinct members
    assert out.nabla_residual < 1e-12
    np.testing.assert_allclose(out.C, np.einsum("...bac->...abc", out.C),
                               rtol=0, atol=1e-14)


def test_order1_closed_mass_family():
    spec, pts = _es_points(6)
    assert pb.check_order1_closed(_mass_curve(), pts) < 1e-6


def test_order1_closed_gauge_family():
    spec, pts = _es_points(6)
    assert pb.check_order1_closed(_gauge_curve(), pts) < 1e-5


def test_einstein_gate_rejects_conformal_bump():
    spec, pts = _es_points(4)
    with pytest.raises(HypothesisViolated):
        pb.check_order1_closed(_bump_curve(), pts)
    with pytest.raises(HypothesisViolated):
        pb.check_A_expansion(_bump_curve(), pts)


def test_A_expansion_trivial_along_admissible_families():
    # admissible deformations of a conformally Kahler base keep A-hat at
    # zero through second order, and the four summands collapse with it
    spec, pts = _es_points(5)
    for curve in (_mass_curve(s_step=1e-2), _gauge_curve(s_step=1e-2)):
        rep = pb.check_A_expansion(curve, pts)
        assert np.max(np.abs(rep.A0)) < 1e-12
        assert np.max(np.abs(rep.deltaA)) < 1e-8
        assert np.max(rep.match_residual) < 1e-6


def test_A_expansion_second_order_match_and_rate():
    # ungated oracle: a conformal bump over the rescaled background makes
    # delta2A genuinely nonzero, and the residual against twice the four-term
    # sum falls at stencil order as h_s shrinks
    base = ch.make_spec("EuclideanSchwarzschild")
    import sdweyl.kahler as kh
    curve = _bump_curve(base=kh.kahler_rescale(base))
    pts = np.array([[12.5, 5.5, 1.55, 3.1],
                    [11.0, 5.0, 1.40, 2.6]])
    coarse = pb._expansion_data(curve, pts, 0.04)
    fine = pb._expansion_data(curve, pts, 0.02)
    assert np.max(np.abs(fine.delta2A)) > 1e-3
    assert np.max(fine.match_residual) < 1e-5
    order = np.log2(np.max(coarse.match_residual)
                    / np.max(fine.match_residual))
    assert order > 1.7
    for term in (fine.grad_term, fine.current_term,
                 fine.eigengap_term, fine.rotation_term):
        assert np.all(term > -1e-12)


def test_second_order_parallel_below_tol():
    spec, pts = _es_points(5)
    for curve in (_mass_curve(s_step=1e-2), _gauge_curve(s_step=1e-2)):
        rep = pb.check_second_order_parallel(curve, pts)
        assert rep.below_tol
        assert np.all(rep.norms < rep.tol)
        assert rep.exponent is None


def test_phat_algebraic_symmetries():
    import sdweyl.curvature as cv
    import sdweyl.identity as idn
    spec, pts = _es_points(6)
    jet, pack, system = idn._pipeline(spec, pts)
    p = pb.phat_tensor(pack, system, orientation=spec.orientation)
    np.testing.assert_allclose(p, -np.einsum("...abcd->...bacd", p),
                               rtol=0, atol=1e-12)
    np.testing.assert_allclose(p, np.einsum("...abcd->...cdab", p),
                               rtol=0, atol=1e-12)


def test_phat_parallel_on_rescaled_schwarzschild():
    spec, pts = _es_points(5)
    assert pb.phat_parallel_residual(spec, pts) < 1e-6
