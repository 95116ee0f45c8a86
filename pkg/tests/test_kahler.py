"""(Conformally) Kahler detection via eigenform parallelism."""

import numpy as np
import pytest

import sdweyl.charts as ch
import sdweyl.curvature as cv
import sdweyl.kahler as kh
import sdweyl.selfdual as sd
import sdweyl.taylor as ty
from sdweyl.errors import ZeroLambda3


def _pts(cid, n, seed=31, **params):
    spec = ch.make_spec(cid, **params)
    return spec, ch.sample_points(spec, n, np.random.default_rng(seed))


def test_schwarzschild_is_conformally_kahler():
    spec, pts = _pts("EuclideanSchwarzschild", 12)
    v = kh.check_parallel(spec, pts)
    assert v.verdict == "ConformallyKahler"
    assert v.rel_nablaF_hat < 1e-6
    assert v.rel_nablaF_base > 1e-3     # not already parallel before rescale
    # the rescaled spectrum keeps the (-1/2, -1/2, 1) pattern
    assert v.eigen_pattern["double"]


def test_product_metric_is_kahler():
    for params in ({"a": 1.0, "b": 1.0}, {"a": 1.0, "b": 1.4}):
        spec, pts = _pts("ProductS2xS2", 12, **params)
        v = kh.check_parallel(spec, pts)
        assert v.verdict == "Kahler", params
        assert v.rel_nablaF_base < 1e-8


def test_taubnut_and_eguchihanson_conformally_kahler():
    # hyperkahler on one side; the curved side is conformally Kahler
    for cid in ("TaubNUT", "EguchiHanson"):
        spec, pts = _pts(cid, 10)
        v = kh.check_parallel(spec, pts)
        assert v.verdict == "ConformallyKahler", cid


def test_eguchihanson_reverse_orientation_degenerate():
    # the anti-self-dual side is flat: no simple top eigenvalue anywhere
    spec = ch.make_spec("EguchiHanson", orientation=-1)
    pts = ch.sample_points(spec, 8, np.random.default_rng(2))
    with pytest.raises(ZeroLambda3):
        kh.check_parallel(spec, pts)


def test_generic_bump_is_generic():
    spec, pts = _pts("GenericBump", 10, amp=0.2)
    v = kh.check_parallel(spec, pts)
    assert v.verdict == "Generic"
    assert v.rel_nablaF_hat > 1e-3


def test_flat_raises_zero_lambda3():
    spec, pts = _pts("Flat", 5)
    with pytest.raises(ZeroLambda3):
        kh.check_parallel(spec, pts)


def test_eigenscale_factor_matches_closed_form():
    # on Schwarzschild lambda_3 = 2m/r^3, so Omega^2 = (2m)^{2/3} r^{-2}
    # with an analytic r-derivative -2 (2m)^{2/3} r^{-3}
    spec, pts = _pts("EuclideanSchwarzschild", 6)
    ctx = ty.context(1)
    g_t = ch.metric_coeffs(spec, pts, ty.context(3))
    om2 = kh.eigenscale_factor(ctx, g_t, spec.orientation)
    r = pts[:, 1]
    i0 = int(np.flatnonzero((ctx.exponents == (0, 0, 0, 0)).all(axis=1))[0])
    ir = int(np.flatnonzero((ctx.exponents == (0, 1, 0, 0)).all(axis=1))[0])
    np.testing.assert_allclose(om2[..., i0], 2.0 ** (2.0 / 3.0) / r ** 2,
                               rtol=1e-11)
    np.testing.assert_allclose(om2[..., ir],
                               -2.0 * 2.0 ** (2.0 / 3.0) / r ** 3, rtol=1e-9)


def test_kahler_rescale_appends_outer_wrapper():
    spec = ch.make_spec("EuclideanSchwarzschild")
    hat = kh.kahler_rescale(spec)
    assert hat.wrappers[-1][0] == "eigenscale"
    assert hat.wrappers[:-1] == spec.wrappers
    # rescaled metric = lambda_3^{2/3} times the base metric, pointwise
    pts = ch.sample_points(spec, 6, np.random.default_rng(9))
    g0 = ch.evaluate_jet(spec, pts, 0).g
    g1 = ch.evaluate_jet(hat, pts, 0).g
    lam3 = 2.0 / pts[:, 1] ** 3
    np.testing.assert_allclose(g1, lam3[:, None, None] ** (2.0 / 3.0) * g0,
                               rtol=1e-10)


def test_rescaled_top_eigenvalue_is_unity_scale():
    # lambdahat_3 = lambda_3^{1/3} on the rescaled metric
    spec, pts = _pts("EuclideanSchwarzschild", 8)
    hat = kh.kahler_rescale(spec)
    pack = cv.CurvaturePack(ch.evaluate_jet(hat, pts, 2))
    system = sd.weyl_plus_system(pack, orientation=spec.orientation)
    lam3 = 2.0 / pts[:, 1] ** 3
    np.testing.assert_allclose(system.lambdas[..., 2], lam3 ** (1.0 / 3.0),
                               rtol=1e-9)


def test_almost_complex_structure_squares_to_minus_one():
    spec, pts = _pts("ProductS2xS2", 8)
    J = kh.almost_complex_J(spec, pts)
    JJ = np.einsum("...ab,...bc->...ac", J, J)
    np.testing.assert_allclose(JJ, np.broadcast_to(-np.eye(4), JJ.shape),
                               rtol=0, atol=1e-10)


def test_verdicts_invariant_under_constant_scaling():
    base = ch.make_spec("EuclideanSchwarzschild")
    scaled = ch.conformal_wrap(base, ch.ScalarField(kind="const", value=3.0))
    pts = ch.sample_points(base, 8, np.random.default_rng(13))
    assert kh.check_parallel(scaled, pts).verdict == "ConformallyKahler"
