"""Curvature tensors and covariant derivatives from metric jets.

Sign convention: the Riemann tensor is defined through the commutator
(nabla_a nabla_b - nabla_b nabla_a) v_c = R_abc^d v_d, so

    R_abc^d = -d_a Gamma^d_bc + d_b Gamma^d_ac
              + Gamma^e_ac Gamma^d_be - Gamma^e_bc Gamma^d_ae.

All tensors are stored fully covariant; raising is explicit.  Every quantity
keeps a trailing Taylor axis whose order is the jet order minus the number of
derivatives spent, so curvature of an order-k jet can itself be
differentiated analytically k-2 more times.
"""

from __future__ import annotations

import itertools

import numpy as np

from . import taylor as ty
from .errors import InsufficientJetOrder

_LETTERS = "bcdfghijklm"


def christoffel(ctx, g, ginv):
    """Gamma^d_ab as a Taylor array at one order below the metric."""
    c1 = ty.context(ctx.order - 1)
    dg = ty.deriv_all(ctx, g)  # (..., i, j, a, T')
    s = (np.einsum("...cbat->...cabt", dg) + dg
         - np.einsum("...abct->...cabt", dg))
    return 0.5 * ty.emul(c1, "...dc,...cab->...dab", ty.truncate(ginv, c1), s)


def covariant_derivative(ctx, field, rank, gamma):
    """nabla of an all-covariant Taylor tensor field; derivative index first.

    `field` has shape (batch..., [4]*rank, T) at `ctx`; `gamma` is
    Gamma^d_ab at order >= ctx.order - 1.  The result has shape
    (batch..., 4, [4]*rank, T') one Taylor order down.
    """
    if ctx.order < 1:
        raise InsufficientJetOrder("field jet too shallow for a covariant derivative")
    octx = ty.context(ctx.order - 1)
    out = np.stack([ty.deriv(ctx, field, a) for a in range(4)], axis=-2 - rank)
    gam = ty.truncate(gamma, octx)
    fld = ty.truncate(field, octx)
    idx = _LETTERS[:rank]
    for i in range(rank):
        src = idx[:i] + "e" + idx[i + 1:]
        out -= ty.emul(octx, f"...ea{idx[i]},...{src}->...a{idx}", gam, fld)
    return out


class CurvaturePack:
    """Riemann, Ricci, scalar, Weyl, and trace-free Ricci at batched points.

    Attributes ending in _t are Taylor coefficient arrays; the plain names
    give the pointwise values.  `derivatives=1` also populates nabla_weyl
    and nabla_E (analytically, never by differencing curvature values).
    """

    def __init__(self, jet, derivatives=0):
        k = jet.ctx.order
        if k < 2 + derivatives:
            raise InsufficientJetOrder(
                f"jet order {k} cannot support curvature with {derivatives} "
                "covariant derivative(s)")
        self.jet = jet
        ctx = jet.ctx
        c1 = ty.context(k - 1)
        c2 = ty.context(k - 2)
        self.ctx = c2
        g = jet.coeffs
        self.g_t = g
        self.ginv_t = ty.inverse44(ctx, g)
        self.gamma_t = christoffel(ctx, g, self.ginv_t)

        dgam = ty.deriv_all(c1, self.gamma_t)  # (..., d, a, b, deriv, T'')
        gam2 = ty.truncate(self.gamma_t, c2)
        mixed = (-np.einsum("...dbcat->...abcdt", dgam)
                 + np.einsum("...dacbt->...abcdt", dgam)
                 + ty.emul(c2, "...eac,...dbe->...abcd", gam2, gam2)
                 - ty.emul(c2, "...ebc,...dae->...abcd", gam2, gam2))
        g2 = ty.truncate(g, c2)
        ginv2 = ty.truncate(self.ginv_t, c2)
        self.riemann_t = ty.emul(c2, "...abce,...ed->...abcd", mixed, g2)
        self.ricci_t = np.einsum("...abcbt->...act", mixed)
        self.scalar_t = ty.emul(c2, "...ac,...ac->...", ginv2, self.ricci_t)
        self.trace_free_ricci_t = self.ricci_t - 0.25 * ty.emul(
            c2, "...,...ab->...ab", self.scalar_t, g2)

        grc = ty.emul(c2, "...ac,...db->...abcd", g2, self.ricci_t)
        gg = ty.emul(c2, "...ac,...db->...abcd", g2, g2)
        ricci_part = 0.5 * (grc
                            - np.einsum("...abdct->...abcdt", grc)
                            - np.einsum("...bacdt->...abcdt", grc)
                            + np.einsum("...badct->...abcdt", grc))
        scal_part = (1.0 / 6.0) * ty.emul(
            c2, "...,...abcd->...abcd", self.scalar_t,
            gg - np.einsum("...abdct->...abcdt", gg))
        self.weyl_t = self.riemann_t - ricci_part + scal_part

        self.nabla_weyl_t = None
        self.nabla_E_t = None
        if derivatives >= 1:
            self.nabla_weyl_t = covariant_derivative(c2, self.weyl_t, 4, self.gamma_t)
            self.nabla_E_t = covariant_derivative(c2, self.trace_free_ricci_t, 2,
                                                  self.gamma_t)

    @property
    def g(self):
        return self.g_t[..., 0]

    @property
    def ginv(self):
        return self.ginv_t[..., 0]

    @property
    def gamma(self):
        return self.gamma_t[..., 0]

    @property
    def riemann(self):
        return self.riemann_t[..., 0]

    @property
    def ricci(self):
        return self.ricci_t[..., 0]

    @property
    def scalar(self):
        return self.scalar_t[..., 0]

    @property
    def weyl(self):
        return self.weyl_t[..., 0]

    @property
    def trace_free_ricci(self):
        return self.trace_free_ricci_t[..., 0]

    @property
    def nabla_weyl(self):
        return None if self.nabla_weyl_t is None else self.nabla_weyl_t[..., 0]

    @property
    def nabla_E(self):
        return None if self.nabla_E_t is None else self.nabla_E_t[..., 0]


def curvature_pack(jet, derivatives=0):
    return CurvaturePack(jet, derivatives)


def volume_form(ctx, g, orientation=1):
    """epsilon_abcd = orientation * sqrt(det g) * [abcd] as a Taylor array."""
    root = ty.sqrt_(ctx, ty.det44(ctx, g))
    sym = np.zeros((4, 4, 4, 4))
    for perm in itertools.permutations(range(4)):
        sign = 1
        for i in range(4):
            for j in range(i + 1, 4):
                if perm[i] > perm[j]:
                    sign = -sign
        sym[perm] = sign
    return orientation * np.einsum("abcd,...t->...abcdt", sym, root)
