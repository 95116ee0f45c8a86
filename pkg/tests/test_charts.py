"""Metric catalog, wrappers, and one-parameter families."""

import numpy as np
import pytest

import sdweyl.charts as ch
import sdweyl.taylor as ty
from sdweyl.errors import PointOutsideChart


def _batch_points(spec, n, seed=7):
    return ch.sample_points(spec, n, np.random.default_rng(seed))


@pytest.mark.parametrize("cid", sorted(ch.CHARTS))
def test_metric_symmetric_positive_definite(cid):
    spec = ch.make_spec(cid)
    pts = _batch_points(spec, 25)
    g = ch.evaluate_jet(spec, pts, 0).g
    np.testing.assert_allclose(g, np.swapaxes(g, -1, -2), rtol=0, atol=1e-14)
    eigs = np.linalg.eigvalsh(g)
    assert np.all(eigs > 0.0)


@pytest.mark.parametrize("cid", sorted(ch.CHARTS))
def test_jet_coefficients_match_finite_differences(cid):
    # first partials from the jet against central differences of g itself
    spec = ch.make_spec(cid)
    pts = _batch_points(spec, 4)
    jet = ch.evaluate_jet(spec, pts, 1)
    h = 1e-6 * ch.fd_scales(spec)
    for a in range(4):
        e = np.zeros(4)
        e[a] = h[a]
        gp = ch.evaluate_jet(spec, pts + e, 0).g
        gm = ch.evaluate_jet(spec, pts - e, 0).g
        fd = (gp - gm) / (2.0 * h[a])
        np.testing.assert_allclose(jet.partial(a), fd, rtol=0, atol=5e-8)


def test_sample_points_inside_domain():
    for cid in sorted(ch.CHARTS):
        spec = ch.make_spec(cid)
        chart = ch.CHARTS[cid]
        pts = _batch_points(spec, 200, seed=3)
        assert np.all(chart.domain(spec.p, pts))


def test_domain_rejects_outside_points():
    spec = ch.make_spec("EuclideanSchwarzschild")
    bad = np.array([[0.0, 1.5, 1.0, 0.0]])     # inside the horizon radius
    with pytest.raises(PointOutsideChart):
        ch.evaluate_jet(spec, bad, 1)


def test_periods_are_exact_isometries():
    for cid in ("EuclideanSchwarzschild", "TaubNUT", "EguchiHanson"):
        spec = ch.make_spec(cid)
        chart = ch.CHARTS[cid]
        periods = chart.periods(spec.p)
        pts = _batch_points(spec, 10)
        g0 = ch.evaluate_jet(spec, pts, 0).g
        for axis, period in periods.items():
            shift = np.zeros(4)
            shift[axis] = period
            g1 = ch.evaluate_jet(spec, pts + shift, 0).g
            np.testing.assert_allclose(g1, g0, rtol=0, atol=1e-12)


def test_make_spec_applies_defaults_and_overrides():
    spec = ch.make_spec("EuclideanSchwarzschild")
    assert spec.p == {"m": 1.0}
    spec2 = ch.make_spec("EuclideanSchwarzschild", m=2.5)
    assert spec2.p == {"m": 2.5}
    with pytest.raises(ValueError):
        ch.make_spec("EuclideanSchwarzschild", m=-1.0)
    with pytest.raises(PointOutsideChart):
        ch.make_spec("NoSuchChart")


def test_unknown_orientation_rejected():
    with pytest.raises(ValueError):
        ch.make_spec("Flat", orientation=2)


def test_conformal_wrapper_scales_metric():
    # the wrapped factor Omega multiplies the metric as Omega^2 g
    base = ch.make_spec("EuclideanSchwarzschild")
    field = ch.ScalarField(kind="const", value=1.7)
    spec = ch.conformal_wrap(base, field)
    pts = _batch_points(base, 8)
    g0 = ch.evaluate_jet(base, pts, 0).g
    g1 = ch.evaluate_jet(spec, pts, 0).g
    np.testing.assert_allclose(g1, 1.7 ** 2 * g0, rtol=1e-13)


def test_conformal_bump_wrapper_is_local():
    base = ch.make_spec("Flat")
    field = ch.ScalarField(kind="bump", center=(0.0, 0.0, 0.0, 0.0),
                           width=0.3, amplitude=0.5)
    spec = ch.conformal_wrap(base, field)
    near = np.array([[0.0, 0.0, 0.0, 0.0]])
    far = np.array([[0.9, 0.9, 0.9, 0.9]])
    g_near = ch.evaluate_jet(spec, near, 0).g[0]
    g_far = ch.evaluate_jet(spec, far, 0).g[0]
    assert abs(g_near[0, 0] - 1.5 ** 2) < 1e-12
    assert abs(g_far[0, 0] - 1.0) < 1e-4


def test_wrapper_order_outermost_last():
    # conformal(2) then conformal(3) must compose to (2 * 3)^2 either way
    base = ch.make_spec("Flat")
    f2 = ch.ScalarField(kind="const", value=2.0)
    f3 = ch.ScalarField(kind="const", value=3.0)
    spec = ch.conformal_wrap(ch.conformal_wrap(base, f2), f3)
    pts = np.zeros((1, 4))
    g = ch.evaluate_jet(spec, pts, 0).g[0]
    np.testing.assert_allclose(g, 36.0 * np.eye(4), rtol=1e-14)


def test_mass_family_requires_bare_schwarzschild():
    flat = ch.make_spec("Flat")
    with pytest.raises(ValueError):
        ch.CurveSpec(base=flat, family=("mass", 0.1))
    es = ch.make_spec("EuclideanSchwarzschild")
    curve = ch.CurveSpec(base=es, family=("mass", 0.1))
    moved = ch.curve_metric_spec(curve, 0.5)
    assert moved.p["m"] == pytest.approx(1.05)
    # s = 0 reproduces the base exactly
    assert ch.curve_metric_spec(curve, 0.0) == es


def test_gauge_family_is_identity_at_s_zero_and_off_support():
    es = ch.make_spec("EuclideanSchwarzschild")
    flow = ch.FlowSpec(center=(12.5, 5.5, 1.55, 3.14), rho=1.0)
    curve = ch.CurveSpec(base=es, family=("gauge", flow))
    pts = np.array([[12.5, 5.5, 1.55, 3.14], [1.0, 7.5, 0.8, 0.3]])
    g0 = ch.evaluate_jet(es, pts, 1)
    gs = ch.curve_jet(curve, 0.3, pts, 1)
    # outside the support radius the pullback acts as the identity
    np.testing.assert_array_equal(gs.coeffs[1], g0.coeffs[1])
    # inside it does not
    assert np.max(np.abs(gs.coeffs[0] - g0.coeffs[0])) > 1e-6
    np.testing.assert_array_equal(ch.curve_jet(curve, 0.0, pts, 1).coeffs,
                                  g0.coeffs)


def test_flow_velocity_compact_support():
    flow = ch.FlowSpec(center=(0.0, 0.0, 0.0, 0.0), rho=1.0)
    ctx = ty.context(1)
    inside = ty.variables(ctx, np.array([[0.2, 0.1, 0.0, -0.3]]))
    outside = ty.variables(ctx, np.array([[2.0, 0.0, 0.0, 0.0]]))
    v_in = ch.flow_velocity(flow, inside)
    v_out = ch.flow_velocity(flow, outside)
    assert any(np.max(np.abs(v.c)) > 0 for v in v_in)
    assert all(not np.any(v.c) for v in v_out)


def test_unknown_curve_family_rejected():
    es = ch.make_spec("EuclideanSchwarzschild")
    with pytest.raises(ValueError):
        ch.CurveSpec(base=es, family=("warp", 0.1))


def test_catalog_entries_cover_all_charts():
    rows = ch.catalog_entries()
    assert {r["catalog_id"] for r in rows} == set(ch.CHARTS)
    es = next(r for r in rows if r["catalog_id"] == "EuclideanSchwarzschild")
    assert es["radial"] == "r"


def test_evaluate_jet_order_cap():
    spec = ch.make_spec("Flat")
    pts = np.zeros((1, 4))
    from sdweyl.errors import UnsupportedOrder
    with pytest.raises(UnsupportedOrder):
        ch.evaluate_jet(spec, pts, ch.MAX_ORDER + 1)
