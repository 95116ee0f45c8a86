"""Tetrads, the Hodge star, the self-dual 2-form basis, and the W+ eigensystem.

The self-dual Weyl operator acts on 2-forms as F_ab -> W+_ab^cd F_cd; its
matrix in the orthonormal self-dual basis (normalized to <S^i,S^j> = 2 d_ij)
has eigenvalues 2*lambda_i.  Eigenvalues are returned ascending, so lambda_3
is the largest.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from . import curvature as cv
from . import taylor as ty
from .errors import DegenerateEigenvalue, DegenerateMetric

SIMPLE_TOP_FACTOR = 1e-7
SIGN_THRESHOLD = 1e-8
_EPS3 = np.zeros((3, 3, 3))
for _i, _j, _k in [(0, 1, 2), (1, 2, 0), (2, 0, 1)]:
    _EPS3[_i, _j, _k] = 1.0
    _EPS3[_i, _k, _j] = -1.0


@dataclasses.dataclass
class Tetrad:
    """Orthonormal frame e (rows e_mu^a) and coframe theta (columns th^mu_a)."""

    e: np.ndarray
    theta: np.ndarray


@dataclasses.dataclass
class TwoForm:
    components: np.ndarray
    sd_coords: np.ndarray = None


def orthonormal_tetrad(g, orientation=1):
    """Gram-Schmidt frame on the coordinate basis in fixed coordinate order.

    Equivalent to inverting the Cholesky factor of g.  For orientation -1 the
    last leg is negated so the frame is always positively oriented with
    respect to the declared volume form.
    """
    g = np.asarray(g, dtype=float)
    if not np.all(np.isfinite(g)):
        raise DegenerateMetric("metric components are not finite")
    try:
        chol = np.linalg.cholesky(g)
    except np.linalg.LinAlgError as exc:
        raise DegenerateMetric("metric is not positive-definite") from exc
    e = np.linalg.inv(chol)
    theta = chol.copy()
    if orientation == -1:
        e[..., 3, :] = -e[..., 3, :]
        theta[..., :, 3] = -theta[..., :, 3]
    return Tetrad(e=e, theta=theta)


def sd_basis(tetrad):
    """The three self-dual basis 2-forms S^i_ab, normalized to |S^i|^2 = 2."""
    th = tetrad.theta  # th[..., a, mu]
    wedge = np.einsum("...am,...bn->...mnab", th, th)
    wedge = wedge - np.einsum("...mnba->...mnab", wedge)  # (th^m ^ th^n)_ab
    out = np.empty(th.shape[:-2] + (3, 4, 4))
    for i, (j, k) in enumerate([(2, 3), (3, 1), (1, 2)]):
        out[..., i, :, :] = (wedge[..., 0, i + 1, :, :] + wedge[..., j, k, :, :])
    return out / np.sqrt(2.0)


def volume_eps(g, orientation=1):
    ctx0 = ty.context(0)
    return cv.volume_form(ctx0, g[..., None], orientation)[..., 0]


def hodge_star(f, g, ginv, orientation=1):
    """(*F)_ab = 1/2 eps_ab^cd F_cd for a batched 2-form array."""
    eps = volume_eps(g, orientation)
    comp = f.components if isinstance(f, TwoForm) else f
    up = np.einsum("...ce,...df,...ef->...cd", ginv, ginv, comp)
    out = 0.5 * np.einsum("...abcd,...cd->...ab", eps, up)
    return TwoForm(out) if isinstance(f, TwoForm) else out


def _row_cross_vec(m, mu):
    """Unit null vector of (m - mu) from the largest row cross product."""
    res = m - mu[..., None, None] * np.eye(3)
    crosses = np.stack([np.cross(res[..., j, :], res[..., k, :])
                        for j, k in [(0, 1), (0, 2), (1, 2)]], axis=-2)
    norms = np.linalg.norm(crosses, axis=-1)
    best = np.argmax(norms, axis=-1)
    pick = np.take_along_axis(crosses, best[..., None, None], axis=-2)[..., 0, :]
    nrm = np.linalg.norm(pick, axis=-1, keepdims=True)
    return pick / np.where(nrm > 0.0, nrm, 1.0)


def sym3x3_eig(m, polish=True):
    """Closed-form eigensystem of batched symmetric 3x3 matrices.

    Trigonometric solution of the characteristic cubic, one Newton polish on
    well-separated roots, eigenvectors by cross products of rows; ascending
    eigenvalue order, eigenvectors in rows.
    """
    m = np.asarray(m, dtype=float)
    q = np.trace(m, axis1=-2, axis2=-1) / 3.0
    a = m - q[..., None, None] * np.eye(3)
    p2 = np.einsum("...ij,...ij->...", a, a) / 6.0
    p = np.sqrt(np.maximum(p2, 0.0))
    safe = np.where(p > 0.0, p, 1.0)
    b = a / safe[..., None, None]
    detb = np.linalg.det(b)
    phi = np.arccos(np.clip(detb / 2.0, -1.0, 1.0)) / 3.0
    # roots of the normalized cubic, descending: 2cos(phi) >= 2cos(phi+4pi/3)
    # >= 2cos(phi+2pi/3)
    mu3 = q + 2.0 * p * np.cos(phi)
    mu1 = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    mu2 = 3.0 * q - mu1 - mu3
    w = np.stack([mu1, mu2, mu3], axis=-1)

    if polish:
        # one Newton step on det(m - mu) where the root is well conditioned
        c2 = -3.0 * q
        c1 = np.einsum("...ij,...ij->...", m, m)
        c1 = 0.5 * ((3.0 * q) ** 2 - c1)
        c0 = -np.linalg.det(m)
        scale = np.maximum(np.abs(w).max(axis=-1), 1.0)
        for i in range(3):
            mu = w[..., i]
            pv = ((mu + c2) * mu + c1) * mu + c0
            dpv = (3.0 * mu + 2.0 * c2) * mu + c1
            ok = np.abs(dpv) > 1e-6 * scale ** 2
            w[..., i] = np.where(ok, mu - pv / np.where(ok, dpv, 1.0), mu)

        # near-double pairs lose half the digits through the characteristic
        # polynomial; recover them by deflating the separated eigenvector and
        # solving the remaining 2x2 block with the stable radical formula
        for lo, hi in [(0, 1), (1, 2)]:
            pair_gap = w[..., hi] - w[..., lo]
            far = 3 - lo - hi
            far_gap = np.minimum(np.abs(w[..., far] - w[..., lo]),
                                 np.abs(w[..., far] - w[..., hi]))
            close = (pair_gap < 1e-4 * scale) & (far_gap > 1e-3 * scale)
            if not np.any(close):
                continue
            vf = _row_cross_vec(m, w[..., far])
            axis_pick = np.argmin(np.abs(vf), axis=-1)
            u1 = np.eye(3)[axis_pick]
            u1 = u1 - np.einsum("...i,...i->...", u1, vf)[..., None] * vf
            u1 = u1 / np.linalg.norm(u1, axis=-1, keepdims=True)
            u2 = np.cross(vf, u1)
            b11 = np.einsum("...i,...ij,...j->...", u1, m, u1)
            b22 = np.einsum("...i,...ij,...j->...", u2, m, u2)
            b12 = np.einsum("...i,...ij,...j->...", u1, m, u2)
            mid = 0.5 * (b11 + b22)
            rad = np.hypot(0.5 * (b11 - b22), b12)
            w[..., lo] = np.where(close, mid - rad, w[..., lo])
            w[..., hi] = np.where(close, mid + rad, w[..., hi])

    scale = np.maximum(np.abs(w).max(axis=-1), 1.0)
    v3 = _row_cross_vec(m, w[..., 2])
    # degenerate operator (all roots equal): fall back to coordinate axes
    null3 = np.linalg.norm(v3, axis=-1) < 0.5
    v3 = np.where(null3[..., None], np.array([0.0, 0.0, 1.0]), v3)
    v1 = _row_cross_vec(m, w[..., 0])
    lower_gap = (w[..., 1] - w[..., 0]) > 1e-12 * scale
    # nearly equal lower pair: complete v3 to a basis deterministically
    overlap = np.abs(np.einsum("...i,...i->...", v1, v3))
    use_cross = lower_gap & (np.linalg.norm(v1, axis=-1) > 0.5) & (overlap < 1e-6)
    axis_pick = np.argmin(np.abs(v3), axis=-1)
    unit = np.eye(3)[axis_pick]
    alt = unit - np.einsum("...i,...i->...", unit, v3)[..., None] * v3
    alt = alt / np.linalg.norm(alt, axis=-1, keepdims=True)
    v1 = np.where(use_cross[..., None], v1, alt)
    # re-orthogonalize v1 against v3 and close the triple
    v1 = v1 - np.einsum("...i,...i->...", v1, v3)[..., None] * v3
    v1 = v1 / np.linalg.norm(v1, axis=-1, keepdims=True)
    v2 = np.cross(v3, v1)
    vecs = np.stack([v1, v2, v3], axis=-2)
    return w, vecs


def _fix_signs(vecs):
    # nonnegative inner product with the first reference basis element whose
    # overlap clears the threshold
    coord0 = vecs[..., 0]
    coord1 = vecs[..., 1]
    coord2 = vecs[..., 2]
    use0 = np.abs(coord0) >= SIGN_THRESHOLD
    use1 = ~use0 & (np.abs(coord1) >= SIGN_THRESHOLD)
    ref = np.where(use0, coord0, np.where(use1, coord1, coord2))
    return vecs * np.where(ref < 0.0, -1.0, 1.0)[..., None]


class SDWeylSystem:
    """Eigen-data of the self-dual Weyl operator at batched points."""

    def __init__(self, lambdas, eigenforms, sd_coords, gap, simple_top,
                 wplus, sigma, tetrad, wmat, wplus_t=None, ctx=None):
        self.lambdas = lambdas
        self.eigenforms = eigenforms
        self.sd_coords = sd_coords
        self.gap = gap
        self.simple_top = simple_top
        self.wplus = wplus
        self.sigma = sigma
        self.tetrad = tetrad
        self.wmat = wmat
        self.wplus_t = wplus_t
        self.ctx = ctx


def weyl_plus_taylor(ctx, g_t, ginv_t, weyl_t, orientation=1):
    """W+_abcd = 1/2 (W + *W)_abcd as a Taylor array."""
    eps = cv.volume_form(ctx, ty.truncate(g_t, ctx), orientation)
    eps_up = ty.emul(ctx, "...abcf,...fd->...abcd", ty.emul(
        ctx, "...abed,...ec->...abcd", eps, ty.truncate(ginv_t, ctx)),
        ty.truncate(ginv_t, ctx))
    dual = 0.5 * ty.emul(ctx, "...abef,...efcd->...abcd", eps_up, weyl_t)
    return 0.5 * (weyl_t + dual)


def weyl_plus_matrix(wplus, sigma, ginv):
    """Matrix of the operator in the S basis; eigenvalues are 2*lambda_i."""
    sig_up = np.einsum("...ac,...bd,...icd->...iab", ginv, ginv, sigma)
    return 0.5 * np.einsum("...iab,...abcd,...jcd->...ij", sig_up, wplus, sig_up)


def weyl_plus_system(pack, tetrad=None, orientation=1):
    """Eigensystem of W+ from a curvature pack."""
    if tetrad is None:
        tetrad = orthonormal_tetrad(pack.g, orientation)
    ctx = pack.ctx
    wp_t = weyl_plus_taylor(ctx, pack.g_t, pack.ginv_t, pack.weyl_t, orientation)
    wplus = wp_t[..., 0]
    sigma = sd_basis(tetrad)
    wmat = weyl_plus_matrix(wplus, sigma, pack.ginv)
    mu, vecs = sym3x3_eig(wmat)
    vecs = _fix_signs(vecs)
    lambdas = 0.5 * mu
    eigenforms = np.einsum("...ik,...kab->...iab", vecs, sigma)
    wnorm = np.sqrt(np.maximum(4.0 * (lambdas ** 2).sum(axis=-1), 0.0))
    gap = np.minimum(lambdas[..., 2] - lambdas[..., 1],
                     lambdas[..., 1] - lambdas[..., 0])
    simple_top = (mu[..., 2] - mu[..., 1]) > SIMPLE_TOP_FACTOR * np.maximum(1.0, wnorm)
    return SDWeylSystem(lambdas=lambdas, eigenforms=eigenforms, sd_coords=vecs,
                        gap=gap, simple_top=simple_top, wplus=wplus,
                        sigma=sigma, tetrad=tetrad, wmat=wmat,
                        wplus_t=wp_t, ctx=ctx)


def lambda3_taylor(ctx, wp_t, ginv_t, seed):
    """Taylor expansion of the top eigenvalue via its characteristic cubic.

    The eigenvalues 2*lambda_i of the W+ map are roots of a cubic whose
    coefficients are basis-free traces of powers of the map; Newton iteration
    in truncated arithmetic lifts the pointwise root `seed` (= lambda_3 values)
    to a jet.  Differentiation therefore never touches eigenvector gauge.
    """
    ginv_t = ty.truncate(ginv_t, ctx)
    up1 = ty.emul(ctx, "...abed,...ec->...abcd", wp_t, ginv_t)
    up2 = ty.emul(ctx, "...abcf,...fd->...abcd", up1, ginv_t)
    # p_k = tr of the k-th power of the map on 2-forms; with both index pairs
    # antisymmetric, the operator trace is the plain pair contraction.
    p1 = ty.emul(ctx, "...abab->...", up2)
    sq = ty.emul(ctx, "...abcd,...cdef->...abef", up2, up2)
    p2 = ty.emul(ctx, "...abab->...", sq)
    p3 = ty.emul(ctx, "...abcd,...cdab->...", sq, up2)
    e1 = p1
    e2 = 0.5 * (ty.mul(ctx, e1, p1) - p2)
    e3 = (p3 - ty.mul(ctx, e1, p2) + ty.mul(ctx, e2, p1)) / 3.0
    mu = np.zeros(np.broadcast_shapes(seed.shape + (1,), e1.shape), dtype=float)
    mu[..., 0] = 2.0 * seed
    # f'(mu_3) = (mu_3 - mu_1)(mu_3 - mu_2) ~ the squared top-eigenvalue scale
    # times the relative gap; scaling by seed^2 keeps the degeneracy guard
    # meaningful however small the curvature is.
    dscale = np.maximum(np.abs(2.0 * seed), 1e-150) ** 2
    for _ in range(max(1, int(np.ceil(np.log2(ctx.order + 1))))):
        musq = ty.mul(ctx, mu, mu)
        f = ty.mul(ctx, musq, mu) - ty.mul(ctx, e1, musq) \
            + ty.mul(ctx, e2, mu) - e3
        fp = 3.0 * musq - 2.0 * ty.mul(ctx, e1, mu) + e2
        if np.any(np.abs(fp[..., 0]) <= 1e-9 * dscale):
            raise DegenerateEigenvalue(
                "top eigenvalue too close to the rest for jet lifting")
        mu = mu - ty.mul(ctx, f, ty.reciprocal(ctx, fp))
    return 0.5 * mu
