"""Decay diagnostics for the rescaled geometry along asymptotic ends.

The eigenvalue rescaling ties the rescaled field strengths to powers of the
conformal factor Omega = lambda_3^(1/3) through exact pointwise norm
identities; on charts with an asymptotically flat end the factor itself
falls off like 1/r, which the fitting helpers here measure along radial
rays.  The boundary estimator integrates the flux 3-form built from the
second parameter-derivative of the rescaled eigenform over surfaces of
constant radius, resolving the rate at which the surface terms of the
divergence identity die off.
"""

import dataclasses

import numpy as np

from . import charts as ch
from . import curvature as cv
from . import kahler as kh
from . import perturbation as pb
from . import selfdual as sd
from . import taylor as ty
from .errors import PointOutsideChart, ZeroLambda3

SELECTORS = ("Omega", "Fhat", "epshat", "ginvhat", "lam3hat_inv", "Phat")

_D2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0


@dataclasses.dataclass
class DecayReport:
    """Log-log fit of one field norm along a radial ray."""

    field_name: str
    radii: np.ndarray
    norms: np.ndarray
    fitted_exponent: float
    fit_residual: float


@dataclasses.dataclass
class BoundarySample:
    """Flux data on one constant-radius surface."""

    r: float
    integrand_norm: float
    surface_estimate: float


def _strip(spec):
    wrappers = spec.wrappers
    while wrappers and wrappers[-1][0] == "eigenscale":
        wrappers = wrappers[:-1]
    return dataclasses.replace(spec, wrappers=wrappers)


def _base_system(spec, points):
    jet = ch.evaluate_jet(spec, points, 2)
    pack = cv.CurvaturePack(jet)
    system = sd.weyl_plus_system(pack, orientation=spec.orientation)
    lam3 = system.lambdas[..., 2]
    if np.any(lam3 <= 0.0):
        raise ZeroLambda3("decay diagnostics need a positive top eigenvalue")
    return jet, pack, system, lam3


def _hatted_system(spec, points):
    hat = spec if any(w[0] == "eigenscale" for w in spec.wrappers) \
        else kh.kahler_rescale(spec)
    jet = ch.evaluate_jet(hat, points, 2)
    pack = cv.CurvaturePack(jet)
    system = sd.weyl_plus_system(pack, orientation=hat.orientation)
    eps = cv.volume_form(ty.context(0), jet.coeffs[..., :1],
                         hat.orientation)[..., 0]
    return pack, system, eps


def _relative(lhs, rhs):
    return float(np.max(np.abs(lhs - rhs)) / max(np.max(np.abs(rhs)), 1e-300))


def norm_identities_check(spec, points):
    """Pointwise norm identities tying rescaled fields to powers of Omega.

    Measured against the unrescaled metric g: the rescaled eigenform has
    norm sqrt(2) Omega^2, the rescaled volume form sqrt(24) Omega^4, and
    the rescaled inverse metric 2 / Omega^2.  The `form_scaling` entry
    checks the eigenform itself against Omega^2 times the unrescaled one,
    which is what makes the first identity more than a normalization.
    """
    points = np.asarray(points, dtype=float)
    base = _strip(spec)
    bjet, bpack, bsys, lam3 = _base_system(base, points)
    om2 = lam3 ** (2.0 / 3.0)
    g = bpack.g
    ginv = bpack.ginv
    hpack, hsys, heps = _hatted_system(base, points)
    fhat = hsys.eigenforms[..., 2, :, :]

    nf = np.sqrt(np.einsum("...ac,...bd,...ab,...cd->...",
                           ginv, ginv, fhat, fhat))
    neps = np.sqrt(np.einsum("...ae,...bf,...cg,...dh,...abcd,...efgh->...",
                             ginv, ginv, ginv, ginv, heps, heps))
    nginv = np.sqrt(np.einsum("...ac,...bd,...ab,...cd->...",
                              g, g, hpack.ginv, hpack.ginv))

    f0 = bsys.eigenforms[..., 2, :, :]
    scaled = om2[..., None, None] * f0
    sgn = np.where(np.sum(fhat * scaled, axis=(-2, -1)) < 0.0, -1.0, 1.0)
    return {
        "form": _relative(nf, np.sqrt(2.0) * om2),
        "volume": _relative(neps, np.sqrt(24.0) * om2 ** 2),
        "inverse": _relative(nginv, 2.0 / om2),
        "form_scaling": _relative(fhat, sgn[..., None, None] * scaled),
    }


def fit_exponent(radii, values):
    """Least-squares slope of log(values) against log(radii), with the rms
    of the fit residuals."""
    radii = np.asarray(radii, dtype=float)
    values = np.asarray(values, dtype=float)
    if radii.size < 2:
        raise ValueError("need at least two radii to fit an exponent")
    if np.any(radii <= 0.0) or np.any(values <= 0.0):
        raise ValueError("exponent fits need positive radii and values")
    x = np.log(radii)
    y = np.log(values)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return float(slope), float(np.sqrt(np.mean(resid ** 2)))


def _ray_points(spec, radii):
    chart = ch.CHARTS[spec.catalog_id]
    if chart.radial_index is None:
        lo, hi = chart.box(spec.p)
        _base_system(spec, 0.5 * (lo + hi)[None])
        raise PointOutsideChart(
            f"{spec.catalog_id} has no radial coordinate to fit along")
    lo, hi = chart.box(spec.p)
    pts = np.tile(0.5 * (lo + hi), (len(radii), 1))
    pts[:, chart.radial_index] = radii
    return pts


def decay_fit(spec, selector, radii):
    """Fitted radial decay exponent of one field norm.

    All norms are taken with respect to the unrescaled metric at points
    along the ray through the chart box centre.
    """
    if selector not in SELECTORS:
        raise ValueError(f"unknown selector {selector!r}; expected one of {SELECTORS}")
    radii = np.asarray(radii, dtype=float)
    base = _strip(spec)
    pts = _ray_points(base, radii)
    bjet, bpack, bsys, lam3 = _base_system(base, pts)
    if selector == "Omega":
        values = lam3 ** (1.0 / 3.0)
    elif selector == "lam3hat_inv":
        values = lam3 ** (-1.0 / 3.0)
    else:
        g = bpack.g
        ginv = bpack.ginv
        hpack, hsys, heps = _hatted_system(base, pts)
        if selector == "Fhat":
            fhat = hsys.eigenforms[..., 2, :, :]
            values = np.sqrt(np.einsum("...ac,...bd,...ab,...cd->...",
                                       ginv, ginv, fhat, fhat))
        elif selector == "epshat":
            values = np.sqrt(np.einsum(
                "...ae,...bf,...cg,...dh,...abcd,...efgh->...",
                ginv, ginv, ginv, ginv, heps, heps))
        elif selector == "ginvhat":
            values = np.sqrt(np.einsum("...ac,...bd,...ab,...cd->...",
                                       g, g, hpack.ginv, hpack.ginv))
        else:
            p = pb.phat_tensor(hpack, hsys, orientation=base.orientation)
            values = np.sqrt(np.einsum(
                "...ae,...bf,...cg,...dh,...abcd,...efgh->...",
                g, g, g, g, p, p))
    slope, rms = fit_exponent(radii, values)
    return DecayReport(field_name=selector, radii=radii, norms=values,
                       fitted_exponent=slope, fit_residual=rms)


def _antisym3(t):
    return (t
            + np.einsum("...abc->...bca", t)
            + np.einsum("...abc->...cab", t)
            - np.einsum("...abc->...bac", t)
            - np.einsum("...abc->...acb", t)
            - np.einsum("...abc->...cba", t)) / 6.0


def _alpha_values(curve, coords, h_x, h_s):
    """The boundary 3-form built from the second s-derivative of the
    rescaled eigenform, at batched coords.

    alpha_abc = -(3/2) antisym[ Fhat_ab epshat_cklm ghat^kd ghat^le
    ghat^mf d_d(delta2 Fhat)_ef ]; every eigenform evaluation on the joint
    space-s stencil is sign-aligned against the background form at the
    stencil centre.
    """
    hat = pb._rescaled_member(curve, 0.0)
    jet = ch.evaluate_jet(hat, coords, 2)
    pack = cv.CurvaturePack(jet)
    system = sd.weyl_plus_system(pack, orientation=hat.orientation)
    f0 = system.eigenforms[..., 2, :, :]
    eps0 = cv.volume_form(ty.context(0), jet.coeffs[..., :1],
                          hat.orientation)[..., 0]

    legs = np.empty((2, 4) + coords.shape)
    for a in range(4):
        off = np.zeros(4)
        off[a] = h_x[a]
        legs[0, a] = coords + off
        legs[1, a] = coords - off
    flat = legs.reshape((8,) + coords.shape)

    raws = [pb._rescaled_form_values(curve, k * h_s, flat)
            for k in (-2, -1, 0, 1, 2)]
    # identical members (a deformation supported away from this surface)
    # have an exactly zero second derivative; short-circuit before the
    # stencil weights can leave rounding residue
    if all(np.array_equal(raw, raws[2]) for raw in raws):
        return np.zeros(coords.shape[:-1] + (4, 4, 4))
    d2 = 0.0
    for w, raw in zip(_D2, raws):
        d2 = d2 + w * pb._aligned(raw, raw, f0[None])
    d2 = (d2 / h_s ** 2).reshape((2, 4) + coords.shape[:-1] + (4, 4))
    grad = np.moveaxis(d2[0] - d2[1], 0, -3) / (2.0 * h_x)[:, None, None]

    core = np.einsum("...cklm,...kd,...le,...mf,...def->...c",
                     eps0, pack.ginv, pack.ginv, pack.ginv, grad)
    return -1.5 * _antisym3(np.einsum("...ab,...c->...abc", f0, core))


def boundary_integral_estimate(curve, r_list, resolution=32, x_step=0.05,
                               s_step=None, chunk=256):
    """Flux of the second-derivative boundary form through constant-radius
    surfaces.

    Midpoint product quadrature over the three non-radial coordinates, with
    periodic axes covering a full period and polar axes padded away from
    their coordinate degeneracies.  Returns one sample per radius with the
    maximum pointwise integrand (sqrt(6) |alpha / mu| for the unit-normal
    3-form mu) and the quadrature total.
    """
    base = curve.base
    chart = ch.CHARTS[base.catalog_id]
    if chart.radial_index is None:
        raise PointOutsideChart("boundary flux needs a chart with a radial end")
    rad = chart.radial_index
    periods = chart.periods(base.p) if chart.periods is not None else {}
    axes = [a for a in range(4) if a != rad]
    h_x = x_step * ch.fd_scales(base)
    h_s = s_step if s_step is not None else curve.s_step

    mids, deltas = [], []
    for a in axes:
        if a in periods:
            lo, width = 0.0, periods[a]
        else:
            pad = 2.0 * h_x[a]
            lo, width = pad, np.pi - 2.0 * pad
        d = width / resolution
        mids.append(lo + (np.arange(resolution) + 0.5) * d)
        deltas.append(d)
    grid = np.stack(np.meshgrid(*mids, indexing="ij"), axis=-1).reshape(-1, 3)
    weight = float(np.prod(deltas))
    i, j, k = axes

    out = []
    for r in r_list:
        nodes = np.empty((grid.shape[0], 4))
        nodes[:, rad] = r
        for col, a in enumerate(axes):
            nodes[:, a] = grid[:, col]
        fmax = 0.0
        total = 0.0
        for start in range(0, nodes.shape[0], chunk):
            block = nodes[start:start + chunk]
            alpha = _alpha_values(curve, block, h_x, h_s)
            jet0 = ch.evaluate_jet(base, block, 0)
            g0 = jet0.g
            ginv0 = np.linalg.inv(g0)
            eps0 = cv.volume_form(ty.context(0), jet0.coeffs,
                                  base.orientation)[..., 0]
            nvec = ginv0[..., :, rad] / np.sqrt(ginv0[..., rad, rad])[..., None]
            mu = np.einsum("...d,...dabc->...abc", nvec, eps0)
            f = alpha[..., i, j, k] / mu[..., i, j, k]
            fmax = max(fmax, float(np.sqrt(6.0) * np.max(np.abs(f))))
            total += float(np.sum(alpha[..., i, j, k])) * weight
        out.append(BoundarySample(r=float(r), integrand_norm=fmax,
                                  surface_estimate=total))
    return out
