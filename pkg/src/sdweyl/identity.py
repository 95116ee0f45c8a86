"""Certification of the divergence identity for the top self-dual eigenform.

Given a metric evaluated as a jet, the self-dual Weyl operator carries a
distinguished eigen-2-form F (top eigenvalue lambda_3).  This module builds
the current j^a = nabla_b F^{ba}, the flux vector V^a = F^{ab} j_b, and the
two scalars A and B whose sum equals nabla_a V^a; it then certifies the
balance numerically on a point sample.

The division of labor for derivatives is fixed by eigenvector gauge: first
derivatives of eigen-data come from analytic perturbation of the eigenvalue
problem (never from differencing eigenvectors), while any second derivative
is a central difference of an analytically evaluated, gauge-even field
(V, lambda_3, or lambda_3^{-1} W+), so sign choices can never leak into a
stencil.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from . import charts as ch
from . import curvature as cv
from . import selfdual as sd
from . import taylor as ty
from .errors import (DegenerateEigenvalue, InsufficientJetOrder,
                     PointOutsideChart, StencilOutsideChart, ZeroLambda3)

DEFAULT_STEP = 1e-3     # relative to per-coordinate chart scales
STEP_FLOOR = 1e-5
ORDER_BAND = (1.7, 2.5)
_TINY = 1e-300


@dataclasses.dataclass
class SpectralGradient:
    """First derivatives of the top eigen-data, all indices covariant."""

    dlambda3: np.ndarray    # (..., a)
    gamma31: np.ndarray     # (..., a)
    gamma32: np.ndarray     # (..., a)
    nablaF: np.ndarray      # (..., a, b, c) = nabla_a F_bc


@dataclasses.dataclass
class IdentityReport:
    """Per-point balance record for divV = A + B."""

    point: np.ndarray
    divV: float
    A: float
    B: float
    residual: float
    fd_step: float
    observed_order: float | None
    gap: float = 0.0
    lambda3: float = 0.0
    history: tuple = ()


def _require_simple_top(system):
    if not np.all(system.simple_top):
        lam3 = np.atleast_1d(system.lambdas[..., 2])
        wnorm = np.sqrt(np.maximum(
            4.0 * (system.lambdas ** 2).sum(axis=-1), 0.0))
        # a spectrum that is zero outright is a vanishing-eigenvalue
        # condition, not a crossing between distinct branches
        if np.any(np.abs(lam3) <= 1e-10 * np.maximum(1.0, np.atleast_1d(wnorm))):
            raise ZeroLambda3(
                "self-dual Weyl spectrum vanishes; the eigenform current "
                "is undefined without a positive top eigenvalue")
        bad = int(np.count_nonzero(~np.atleast_1d(system.simple_top)))
        raise DegenerateEigenvalue(
            f"top eigenvalue not simple at {bad} point(s); refusing to "
            "differentiate eigen-data across a crossing")


def _require_nonzero_lambda3(system):
    lam3 = np.atleast_1d(system.lambdas[..., 2])
    wnorm = np.sqrt(np.maximum(4.0 * (system.lambdas ** 2).sum(axis=-1), 0.0))
    if np.any(np.abs(lam3) <= 1e-10 * np.maximum(1.0, np.atleast_1d(wnorm))):
        raise ZeroLambda3("vanishing top eigenvalue; 1/lambda_3 undefined")


def spectral_gradient(system, pack, jet=None):
    """Analytic first derivatives of lambda_3 and its eigenform.

    Differentiating the eigen-relation gives the covector of lambda_3 and the
    connection coefficients pairing F^3 with the other two eigenforms; the
    full nabla_a F^3_bc is then reassembled in that basis.
    """
    del jet
    _require_simple_top(system)
    ctx = system.ctx
    if ctx.order < 1:
        raise InsufficientJetOrder("need one Taylor order beyond curvature")
    nwp = cv.covariant_derivative(ctx, system.wplus_t, 4, pack.gamma_t)[..., 0]
    ginv = pack.ginv
    F = system.eigenforms
    Fup = np.einsum("...ac,...bd,...icd->...iab", ginv, ginv, F)
    applied = np.einsum("...eabcd,...cd->...eab", nwp, Fup[..., 2, :, :])
    proj = np.einsum("...iab,...eab->...ei", Fup, applied)
    lam = system.lambdas
    dlambda3 = 0.25 * proj[..., 2]
    gamma31 = proj[..., 0] / (4.0 * (lam[..., 2] - lam[..., 0]))[..., None]
    gamma32 = proj[..., 1] / (4.0 * (lam[..., 2] - lam[..., 1]))[..., None]
    nablaF = (gamma31[..., :, None, None] * F[..., None, 0, :, :]
              + gamma32[..., :, None, None] * F[..., None, 1, :, :])
    return SpectralGradient(dlambda3=dlambda3, gamma31=gamma31,
                            gamma32=gamma32, nablaF=nablaF)


def current_and_V(sg, system, jet):
    """j^a = nabla_b F^{ba} and V^a = F^{ab} j_b, contravariant components."""
    g = jet.g
    ginv = np.linalg.inv(g)
    j = np.einsum("...bm,...an,...bmn->...a", ginv, ginv, sg.nablaF)
    F3 = system.eigenforms[..., 2, :, :]
    V = np.einsum("...am,...mc,...c->...a", ginv, F3, j)
    return j, V


def term_A(sg, system, jet):
    """The pointwise quadratic term of the balance."""
    _require_nonzero_lambda3(system)
    g = jet.g
    ginv = np.linalg.inv(g)
    j, _ = current_and_V(sg, system, jet)
    jsq = np.einsum("...ab,...a,...b->...", g, j, j)
    ndf2 = np.einsum("...am,...bn,...co,...abc,...mno->...",
                     ginv, ginv, ginv, sg.nablaF, sg.nablaF)
    g31 = np.einsum("...ab,...a,...b->...", ginv, sg.gamma31, sg.gamma31)
    g32 = np.einsum("...ab,...a,...b->...", ginv, sg.gamma32, sg.gamma32)
    lam = system.lambdas
    l1, l2, l3 = lam[..., 0], lam[..., 1], lam[..., 2]
    return (jsq + ndf2 / 12.0
            + ((l1 - l2) ** 2 - 2.0 * (l1 * g31 + l2 * g32)) / (3.0 * l3))


def _pipeline(spec, coords, order=3, derivatives=0):
    """Jet, curvature, and eigensystem at batched coordinates."""
    coords = np.asarray(coords, dtype=float)
    ctx = ty.context(order)
    jet = ch.MetricJet(coords, ch.metric_coeffs(spec, coords, ctx), ctx,
                       spec=spec)
    pack = cv.CurvaturePack(jet, derivatives=derivatives)
    system = sd.weyl_plus_system(pack, orientation=spec.orientation)
    return jet, pack, system


def _codifferential_field(spec, coords):
    """d* of the gauge-even field lambda_3^{-1} W+, plus lambda_3, at coords.

    Everything here is analytic from order-3 jets: the eigenvalue jet comes
    from its characteristic cubic, so no eigenvector is ever differentiated.
    """
    jet, pack, system = _pipeline(spec, coords)
    _require_simple_top(system)
    _require_nonzero_lambda3(system)
    ctx = pack.ctx
    lam_t = sd.lambda3_taylor(ctx, system.wplus_t, pack.ginv_t,
                              system.lambdas[..., 2])
    inv_t = ty.reciprocal(ctx, lam_t)
    z_t = ty.mul(ctx, inv_t[..., None, None, None, None, :], system.wplus_t)
    nz = cv.covariant_derivative(ctx, z_t, 4, pack.gamma_t)[..., 0]
    u = -np.einsum("...ef,...efbcd->...bcd", pack.ginv, nz)
    return u, system.lambdas[..., 2]


def _stencil(coords, h):
    """Coordinates displaced by +-h along each axis: shape (2, 4) + base."""
    coords = np.asarray(coords, dtype=float)
    out = np.empty((2, 4) + coords.shape)
    for a in range(4):
        for s, sign in enumerate((1.0, -1.0)):
            out[s, a] = coords
            out[s, a][..., a] += sign * h[a]
    return out


def term_B(pack, system, jet, fd_step=None):
    """B = -(1/6) <F (x) F, dd*(lambda_3^{-1} W+)>.

    The codifferential layer is analytic; only the outer antisymmetrized
    derivative is a central difference, taken on the gauge-even field.
    """
    spec = jet.spec
    if spec is None:
        raise ValueError("jet must carry its originating metric spec")
    coords = np.asarray(jet.point, dtype=float)
    scales = ch.fd_scales(spec)
    h = (DEFAULT_STEP if fd_step is None else fd_step) * scales
    sten = _stencil(coords, h)
    try:
        u_all, lam_all = _codifferential_field(
            spec, sten.reshape((2 * 4,) + coords.shape))
        u0, _ = _codifferential_field(spec, coords)
    except PointOutsideChart as exc:
        raise StencilOutsideChart(str(exc)) from exc
    del lam_all  # nonzero everywhere or _codifferential_field has raised
    u_all = u_all.reshape((2, 4) + coords.shape[:-1] + (4, 4, 4))
    dU = np.moveaxis((u_all[0] - u_all[1]), 0, -4) \
        / (2.0 * h)[:, None, None, None]
    # covariantize: nabla_a U_bcd = d_a U_bcd - Gamma^e_ab U_ecd - ...
    gam = pack.gamma
    covU = (dU
            - np.einsum("...eab,...ecd->...abcd", gam, u0)
            - np.einsum("...eac,...bed->...abcd", gam, u0)
            - np.einsum("...ead,...bce->...abcd", gam, u0))
    D = covU - np.einsum("...bacd->...abcd", covU)
    ginv = pack.ginv
    F3 = system.eigenforms[..., 2, :, :]
    F3up = np.einsum("...ac,...bd,...cd->...ab", ginv, ginv, F3)
    return -np.einsum("...ab,...cd,...abcd->...", F3up, F3up, D) / 6.0


def _density_field(spec, coords):
    """sqrt(det g) V^a at coords, plus the local top eigenvalue."""
    jet, pack, system = _pipeline(spec, coords)
    _require_simple_top(system)
    _require_nonzero_lambda3(system)
    sg = spectral_gradient(system, pack)
    _, v = current_and_V(sg, system, jet)
    root = np.sqrt(np.linalg.det(jet.g))
    return root[..., None] * v, system.lambdas[..., 2]


def divergence_V(spec, coords, fd_step=None):
    """nabla_a V^a by central differencing of the density-weighted flux."""
    coords = np.asarray(coords, dtype=float)
    scales = ch.fd_scales(spec)
    h = (DEFAULT_STEP if fd_step is None else fd_step) * scales
    sten = _stencil(coords, h)
    try:
        dens, _ = _density_field(spec, sten.reshape((2 * 4,) + coords.shape))
    except PointOutsideChart as exc:
        raise StencilOutsideChart(str(exc)) from exc
    dens = dens.reshape((2, 4) + coords.shape[:-1] + (4,))
    jet = ch.MetricJet(coords, ch.metric_coeffs(spec, coords, ty.context(0)),
                       ty.context(0), spec=spec)
    root = np.sqrt(np.linalg.det(jet.g))
    acc = 0.0
    for a in range(4):
        acc = acc + (dens[0, a, ..., a] - dens[1, a, ..., a]) / (2.0 * h[a])
    return acc / root


def divergence_first_order(sg, system, pack):
    """The divergence of V expressed through first-order spectral data.

    Equal to A + B for every metric; serves as a fully analytic cross-check
    of the differenced divergence and of the B assembly.
    """
    jet = pack.jet
    g = jet.g
    ginv = np.linalg.inv(g)
    j, _ = current_and_V(sg, system, jet)
    jsq = np.einsum("...ab,...a,...b->...", g, j, j)
    ndf2 = np.einsum("...am,...bn,...co,...abc,...mno->...",
                     ginv, ginv, ginv, sg.nablaF, sg.nablaF)
    return jsq - 0.25 * ndf2 + system.lambdas[..., 2] - pack.scalar / 6.0


def verify_main_identity(spec, points, fd_steps=None):
    """Certify divV = A + B on a batch of points; one report per point.

    Central steps start at DEFAULT_STEP x chart scales and halve until the
    Richardson order estimate of the residual stabilizes, the residual
    saturates, or the step floor is reached.  divV and B are extrapolated
    from the two finest steps.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    jet, pack, system = _pipeline(spec, points, derivatives=1)
    _require_simple_top(system)
    _require_nonzero_lambda3(system)
    sg = spectral_gradient(system, pack)
    a_val = term_A(sg, system, jet)

    if fd_steps is None:
        auto = True
        steps = [DEFAULT_STEP]
    else:
        auto = False
        steps = list(fd_steps)
    history = []      # rows: (h, divV, B, residual) arrays over points

    def _evaluate(h):
        div = divergence_V(spec, points, fd_step=h)
        b = term_B(pack, system, jet, fd_step=h)
        return div, b, np.abs(div - a_val - b)

    k = 0
    while True:
        h = steps[k]
        div_h, b_h, res_h = _evaluate(h)
        history.append((h, div_h, b_h, res_h))
        k += 1
        if not auto:
            if k >= len(steps):
                break
            continue
        if len(history) >= 2:
            prev, cur = history[-2][3], history[-1][3]
            scale = np.maximum(np.abs(a_val) + np.abs(b_h), 1.0)
            saturated = np.all(cur <= 1e-11 * scale)
            with np.errstate(divide="ignore", invalid="ignore"):
                order = np.log2(np.maximum(prev, _TINY)
                                / np.maximum(cur, _TINY))
            stable = np.all((order >= ORDER_BAND[0]) & (order <= ORDER_BAND[1]))
            if saturated or stable or steps[k - 1] * 0.5 < STEP_FLOOR:
                break
        steps.append(steps[-1] * 0.5)

    h_fine, div_fine, b_fine, _ = history[-1]
    if len(history) >= 2:
        _, div_prev, b_prev, res_prev = history[-2]
        div_ext = (4.0 * div_fine - div_prev) / 3.0
        b_ext = (4.0 * b_fine - b_prev) / 3.0
        res_fine = history[-1][3]
        with np.errstate(divide="ignore", invalid="ignore"):
            order = np.log2(np.maximum(res_prev, _TINY)
                            / np.maximum(res_fine, _TINY))
    else:
        div_ext, b_ext, order = div_fine, b_fine, None

    residual = np.abs(div_ext - a_val - b_ext)
    reports = []
    for i in range(points.shape[0]):
        obs = None if order is None else float(order[i])
        hist = tuple((hh, float(dv[i]), float(bb[i]), float(rr[i]))
                     for hh, dv, bb, rr in history)
        reports.append(IdentityReport(
            point=points[i], divV=float(div_ext[i]), A=float(a_val[i]),
            B=float(b_ext[i]), residual=float(residual[i]),
            fd_step=float(h_fine), observed_order=obs,
            gap=float(system.gap[i]), lambda3=float(system.lambdas[i, 2]),
            history=hist))
    return reports


# ---------------------------------------------------------------------------
# Laplace-de Rham machinery on analytic test fields


def _pack_entries(entries, ctx, batch):
    """Nested sequences of Tay/number -> coefficient array, rank inferred."""
    first = entries
    rank = 0
    while isinstance(first, (list, tuple)):
        rank += 1
        first = first[0]
    shape = batch + (4,) * rank + (ctx.size,)
    out = np.zeros(shape)
    for idx in np.ndindex(*(4,) * rank):
        e = entries
        for i in idx:
            e = e[i]
        if isinstance(e, ty.Tay):
            out[(...,) + idx + (slice(None),)] = e.c
        else:
            out[(...,) + idx + (0,)] = e
    return out, rank


def _field_taylor(testfield, jet):
    """Evaluate a closed-form tensor field on the jet's Taylor variables."""
    ctx = jet.ctx
    coords = np.asarray(jet.point, dtype=float)
    xs = ty.variables(ctx, coords)
    batch = coords.shape[:-1]
    arr, rank = _pack_entries(testfield(*xs), ctx, batch)
    if rank not in (2, 4):
        raise ValueError("test field must be a 2-form or a double-2-form")
    arr = 0.5 * (arr - _swap_form(arr, rank))
    if rank == 4:
        arr = 0.5 * (arr - np.einsum("...abdct->...abcdt", arr))
    return arr, rank


def _swap_form(arr, rank):
    if rank == 2:
        return np.einsum("...bat->...abt", arr)
    return np.einsum("...bacdt->...abcdt", arr)


def _laplacian(field_t, rank, jet):
    """(dd* + d*d) of an antisymmetric-pair Taylor field, pointwise values.

    `rank` 2 treats the field as a 2-form; `rank` 4 as a 2-form with two
    spectator indices, with d and d* acting on the first pair only.
    """
    k = jet.ctx.order
    if k < 2:
        raise InsufficientJetOrder("two derivative layers need jet order >= 2")
    ctx = jet.ctx
    c1 = ty.context(k - 1)
    ginv_t = ty.inverse44(ctx, jet.coeffs)
    gam = cv.christoffel(ctx, jet.coeffs, ginv_t)
    ginv1 = ty.truncate(ginv_t, c1)
    ginv0 = ginv_t[..., 0]
    sp = "cd" if rank == 4 else ""

    nf = cv.covariant_derivative(ctx, field_t, rank, gam)          # at k-1
    u_t = -ty.emul(c1, f"...ef,...efb{sp}->...b{sp}", ginv1, nf)
    du = cv.covariant_derivative(c1, u_t, rank - 1, gam)[..., 0]
    ddstar = du - np.einsum(f"...ba{sp}->...ab{sp}", du)

    df = (nf
          + np.einsum(f"...abe{sp}t->...eab{sp}t", nf)
          + np.einsum(f"...bea{sp}t->...eab{sp}t", nf))
    ndf = cv.covariant_derivative(c1, df, rank + 1, gam)[..., 0]
    dstard = -np.einsum(f"...mf,...mfab{sp}->...ab{sp}", ginv0, ndf)
    return ddstar + dstard, nf


def weitzenbock_check(testfield, jet):
    """Residual of the curvature form of the Laplace-de Rham operator.

    For a 2-form:  (dd* + d*d)F = -box F - R_ab^{cd} F_cd - 2 R_[a^c F_b]c;
    for a double-2-form the analogous four-term curvature expression acts on
    the first pair.  Returns the max relative residual over the batch.
    """
    field_t, rank = _field_taylor(testfield, jet)
    pack = cv.CurvaturePack(jet)
    lhs, nf = _laplacian(field_t, rank, jet)
    ctx1 = ty.context(jet.ctx.order - 1)
    gam = pack.gamma_t
    nnf = cv.covariant_derivative(ctx1, nf, rank + 1, gam)[..., 0]
    ginv = pack.ginv
    sp = "cd" if rank == 4 else ""
    box = np.einsum(f"...ef,...efab{sp}->...ab{sp}", ginv, nnf)
    f0 = field_t[..., 0]
    riem = pack.riemann
    ric_mix = np.einsum("...ae,...eb->...ab", pack.ricci, ginv)   # R_a^b
    riem_up2 = np.einsum("...abef,...ec,...fd->...abcd", riem, ginv, ginv)
    if rank == 2:
        rhs = (-box
               - np.einsum("...abcd,...cd->...ab", riem_up2, f0)
               - np.einsum("...ac,...bc->...ab", ric_mix, f0)
               + np.einsum("...bc,...ac->...ab", ric_mix, f0))
    else:
        t2 = np.einsum("...ae,...ebcd->...abcd", ric_mix, f0)
        t2 = t2 - np.einsum("...bacd->...abcd", t2)
        t3 = np.einsum("...abef,...efcd->...abcd", riem_up2, f0)
        rmix = np.einsum("...abfc,...be->...aefc", riem, ginv)    # R_a^e_fc
        zmix = np.einsum("...ebpd,...pf->...ebfd", f0, ginv)      # Z_eb^f_d
        x1 = np.einsum("...aefc,...ebfd->...abcd", rmix, zmix)
        t4 = (x1 - np.einsum("...bacd->...abcd", x1)
              - np.einsum("...abdc->...abcd", x1)
              + np.einsum("...badc->...abcd", x1))
        rhs = -box + t2 - t3 + t4
    scale = max(np.max(np.abs(lhs)), np.max(np.abs(rhs)), _TINY)
    return float(np.max(np.abs(lhs - rhs)) / scale)


def _star_taylor(ctx, g_t, ginv_t, orientation):
    """epsilon with the last index pair raised, as a Taylor array."""
    eps = cv.volume_form(ctx, ty.truncate(g_t, ctx), orientation)
    gi = ty.truncate(ginv_t, ctx)
    up1 = ty.emul(ctx, "...abed,...ec->...abcd", eps, gi)
    return ty.emul(ctx, "...abcf,...fd->...abcd", up1, gi)


def sd_laplacian_check(beta, jet):
    """Residual of the half-curvature form on self-dual projections.

    Builds F+ = (beta + *beta)/2 from a closed-form 2-form (or the first-pair
    projection of a double-2-form) and checks (dd* + d*d)F+ = 2 (dd* F+)^+.
    """
    orientation = jet.spec.orientation if jet.spec is not None else 1
    field_t, rank = _field_taylor(beta, jet)
    ctx = jet.ctx
    ginv_t = ty.inverse44(ctx, jet.coeffs)
    eps_up = _star_taylor(ctx, jet.coeffs, ginv_t, orientation)
    sp = "cd" if rank == 4 else ""
    star = 0.5 * ty.emul(ctx, f"...abef,...ef{sp}->...ab{sp}",
                         eps_up, field_t)
    fplus_t = 0.5 * (field_t + star)

    k = jet.ctx.order
    c1 = ty.context(k - 1)
    gam = cv.christoffel(ctx, jet.coeffs, ginv_t)
    ginv1 = ty.truncate(ginv_t, c1)
    lhs, _ = _laplacian(fplus_t, rank, jet)

    nf = cv.covariant_derivative(ctx, fplus_t, rank, gam)
    u_t = -ty.emul(c1, f"...ef,...efb{sp}->...b{sp}", ginv1, nf)
    du = cv.covariant_derivative(c1, u_t, rank - 1, gam)[..., 0]
    ddstar = du - np.einsum(f"...ba{sp}->...ab{sp}", du)
    eps0 = eps_up[..., 0]
    proj = 0.5 * (ddstar + 0.5 * np.einsum(
        f"...abef,...ef{sp}->...ab{sp}", eps0, ddstar))
    rhs = 2.0 * proj
    scale = max(np.max(np.abs(lhs)), np.max(np.abs(rhs)), _TINY)
    return float(np.max(np.abs(lhs - rhs)) / scale)


def conformal_divergence_check(spec, points):
    """Dual-path residual for the rescaled codifferential relation.

    With ghat = lambda_3^{2/3} g, the contracted derivative of the hatted
    field lambdahat_3^{-1} What+ must reproduce the unhatted contraction
    lambdahat_3^{-1} g^{ef} nabla_f W+_{ebcd}; both sides are evaluated
    analytically through entirely separate pipelines.
    """
    from . import kahler as kh

    points = np.asarray(points, dtype=float)
    jet, pack, system = _pipeline(spec, points)
    _require_simple_top(system)
    lam3 = system.lambdas[..., 2]
    if np.any(lam3 <= 0.0):
        raise ZeroLambda3("conformal factor needs a positive top eigenvalue")
    nwp = cv.covariant_derivative(pack.ctx, system.wplus_t, 4,
                                  pack.gamma_t)[..., 0]
    lamhat = lam3 ** (1.0 / 3.0)
    rhs = np.einsum("...ef,...febcd->...bcd", pack.ginv, nwp) \
        / lamhat[..., None, None, None]

    ctx3 = ty.context(3)
    ghat_t = kh.rescaled_coeffs(spec, points, ctx3)
    jhat = ch.MetricJet(points, ghat_t, ctx3)
    phat = cv.CurvaturePack(jhat)
    shat = sd.weyl_plus_system(phat, orientation=spec.orientation)
    _require_simple_top(shat)
    lam_t = sd.lambda3_taylor(phat.ctx, shat.wplus_t, phat.ginv_t,
                              shat.lambdas[..., 2])
    z_t = ty.mul(phat.ctx, ty.reciprocal(phat.ctx, lam_t)
                 [..., None, None, None, None, :], shat.wplus_t)
    nz = cv.covariant_derivative(phat.ctx, z_t, 4, phat.gamma_t)[..., 0]
    lhs = np.einsum("...ef,...febcd->...bcd", phat.ginv, nz)
    # On Einstein backgrounds both contractions vanish identically, and on
    # parallel ones even the derivative tensors do; the residual is measured
    # against the largest participant, falling back to the field itself.
    scale = max(np.max(np.abs(nz)),
                np.max(np.abs(nwp)) / np.min(lamhat),
                np.max(np.abs(z_t[..., 0])), _TINY)
    return float(np.max(np.abs(lhs - rhs)) / scale)


def flux_threeform(spec, coords):
    """The 3-form F wedge *dF and the dual of V, both pointwise.

    The two agree identically; their shared exterior derivative provides an
    independent route to divV (a plain curl, no connection terms).
    """
    jet, pack, system = _pipeline(spec, coords)
    _require_simple_top(system)
    sg = spectral_gradient(system, pack)
    _, v = current_and_V(sg, system, jet)
    ginv = pack.ginv
    eps0 = cv.volume_form(pack.ctx, ty.truncate(jet.coeffs, pack.ctx),
                          spec.orientation)[..., 0]
    nf = sg.nablaF
    df = (nf + np.einsum("...abe->...eab", nf)
          + np.einsum("...bea->...eab", nf))
    dfup = np.einsum("...am,...bn,...co,...mno->...abc", ginv, ginv, ginv, df)
    sdf = np.einsum("...abc,...abcd->...d", dfup, eps0) / 6.0
    F3 = system.eigenforms[..., 2, :, :]
    w3 = (np.einsum("...ab,...c->...abc", F3, sdf)
          + np.einsum("...bc,...a->...abc", F3, sdf)
          + np.einsum("...ca,...b->...abc", F3, sdf))
    starv = np.einsum("...a,...abcd->...bcd", v, eps0)
    return w3, starv


def threeform_divergence_check(spec, points, fd_step=None):
    """Compare divV against the exterior derivative of F wedge *dF.

    The left route differences density-weighted vector components; the right
    route differences 3-form components with alternating signs.  Agreement is
    a coordinate-free consistency test of the divergence.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    scales = ch.fd_scales(spec)
    h = (DEFAULT_STEP if fd_step is None else fd_step) * scales
    div = divergence_V(spec, points, fd_step=fd_step)
    jet0, pack0, _ = _pipeline(spec, points, order=2)
    root = np.sqrt(np.linalg.det(jet0.g))
    sten = _stencil(points, h)
    try:
        w3, _ = flux_threeform(spec, sten.reshape((2 * 4,) + points.shape))
    except PointOutsideChart as exc:
        raise StencilOutsideChart(str(exc)) from exc
    w3 = w3.reshape((2, 4) + points.shape[:-1] + (4, 4, 4))
    comp = np.zeros(points.shape[:-1])
    others = [(1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)]
    for a in range(4):
        b, c, d = others[a]
        sign = (-1.0) ** a
        comp = comp + sign * (w3[0, a, ..., b, c, d]
                              - w3[1, a, ..., b, c, d]) / (2.0 * h[a])
    lhs = div * root
    scale = np.maximum(np.maximum(np.abs(lhs), np.abs(comp)), _TINY)
    return float(np.max(np.abs(lhs - comp) / scale))
