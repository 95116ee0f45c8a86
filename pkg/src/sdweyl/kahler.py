"""Conformal rescaling by the top eigenvalue and Kahler-structure detection.

The scale factor Omega = lambda_3^{1/3} turns a metric whose self-dual Weyl
operator has a distinguished positive eigenvalue into a candidate Kahler
metric: the rescaled top eigenform is tested for parallelism.  The rescaled
metric is an ordinary MetricSpec (an `eigenscale` wrapper), so every
downstream consumer — jets, curvature, eigen-data, reports — works on it
unchanged.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from . import charts as ch
from . import curvature as cv
from . import identity as idn
from . import selfdual as sd
from . import taylor as ty
from .errors import DegenerateEigenvalue, ZeroLambda3

DEFAULT_TOL = 1e-6
DOUBLE_TOL = 1e-6


@dataclasses.dataclass
class KahlerVerdict:
    """Classification of a metric sample by parallelism of its eigenform."""

    verdict: str            # Kahler | ConformallyKahler | Degenerate | Generic
    max_dF: float           # sup |dF|_g on the rescaled metric
    max_nablaF: float       # sup |nabla F|_g on the rescaled metric
    eigen_pattern: dict     # rescaled eigenvalue structure
    rel_nablaF_base: float = np.inf    # scale-free sup before rescaling
    rel_nablaF_hat: float = np.inf     # scale-free sup after rescaling
    worst_point: np.ndarray | None = None
    tol: float = DEFAULT_TOL


def eigenscale_factor(ctx, g_t, orientation):
    """Omega^2 = lambda_3^{2/3} as a Taylor scalar, from metric coefficients.

    `g_t` must carry two orders beyond `ctx`; the eigenvalue jet comes from
    its characteristic cubic, so the factor is analytic to all orders.
    """
    jet = ch.MetricJet(None, g_t, ty.context(ctx.order + 2))
    pack = cv.CurvaturePack(jet)
    system = sd.weyl_plus_system(pack, orientation=orientation)
    lam3 = system.lambdas[..., 2]
    wnorm = np.sqrt(np.maximum(4.0 * (system.lambdas ** 2).sum(axis=-1), 0.0))
    if np.any(lam3 <= 1e-10 * np.maximum(1.0, wnorm)):
        raise ZeroLambda3(
            "eigenvalue scale factor needs a strictly positive top eigenvalue")
    if not np.all(system.simple_top):
        raise DegenerateEigenvalue(
            "eigenvalue scale factor needs a simple top eigenvalue")
    lam_t = sd.lambda3_taylor(pack.ctx, system.wplus_t, pack.ginv_t, lam3)
    return ty.powf(pack.ctx, lam_t, 2.0 / 3.0)


def kahler_rescale(spec):
    """The metric scaled by lambda_3^{2/3}, as a wrapped MetricSpec."""
    wrapped = dataclasses.replace(
        spec, wrappers=spec.wrappers + (("eigenscale", None),))
    chart = ch.CHARTS[spec.catalog_id]
    lo, hi = chart.box(spec.p)
    probe = 0.5 * (np.asarray(lo) + np.asarray(hi))
    ch.metric_coeffs(wrapped, probe, ty.context(0))   # eager lambda_3 > 0 check
    return wrapped


def almost_complex_J(spec, point):
    """J^a_b = sqrt(2) F_bc g^{ca} of the rescaled metric; J^2 = -1."""
    coords = np.asarray(point.coords if isinstance(point, ch.ChartPoint)
                        else point, dtype=float)
    hat = spec if any(w[0] == "eigenscale" for w in spec.wrappers) \
        else kahler_rescale(spec)
    jet, pack, system = idn._pipeline(hat, coords, order=2)
    if not np.all(system.simple_top):
        raise DegenerateEigenvalue("almost-complex structure needs a simple "
                                   "top eigenvalue")
    f3 = system.eigenforms[..., 2, :, :]
    return np.sqrt(2.0) * np.einsum("...bc,...ca->...ab", f3, pack.ginv)


def _parallelism(spec, points):
    """Sups of |nabla F| and |dF| plus eigen-structure on one metric."""
    jet, pack, system = idn._pipeline(spec, points)
    lam = system.lambdas
    lam3 = lam[..., 2]
    wnorm = np.sqrt(np.maximum(4.0 * (lam ** 2).sum(axis=-1), 0.0))
    if np.any(lam3 <= 1e-10 * np.maximum(1.0, wnorm)):
        raise ZeroLambda3("parallelism check needs a positive top eigenvalue")
    if not np.all(system.simple_top):
        return None   # caller reports Degenerate
    sg = idn.spectral_gradient(system, pack)
    ginv = pack.ginv
    ndf2 = np.einsum("...am,...bn,...co,...abc,...mno->...",
                     ginv, ginv, ginv, sg.nablaF, sg.nablaF)
    nf_norm = np.sqrt(np.maximum(ndf2, 0.0))
    df = (sg.nablaF + np.einsum("...abe->...eab", sg.nablaF)
          + np.einsum("...bea->...eab", sg.nablaF))
    df2 = np.einsum("...am,...bn,...co,...abc,...mno->...",
                    ginv, ginv, ginv, df, df)
    df_norm = np.sqrt(np.maximum(df2, 0.0))
    scale = np.sqrt(wnorm) * np.sqrt(2.0)
    rel = nf_norm / np.maximum(scale, 1e-300)
    pattern = {
        "pair_split": float(np.max(np.abs(lam[..., 0] - lam[..., 1]) / lam3)),
        "minus_half": float(np.max(np.abs(lam[..., 0] + 0.5 * lam3) / lam3)),
    }
    pattern["double"] = bool(pattern["pair_split"] <= DOUBLE_TOL
                             and pattern["minus_half"] <= DOUBLE_TOL)
    worst = int(np.argmax(np.atleast_1d(rel)))
    return {"max_nablaF": float(np.max(nf_norm)),
            "max_dF": float(np.max(df_norm)),
            "rel": float(np.max(rel)),
            "pattern": pattern,
            "worst": worst}


def check_parallel(spec, points, tol=DEFAULT_TOL):
    """Classify a metric sample by (conformal) parallelism of the eigenform.

    Kahler when the unrescaled eigenform is already parallel; otherwise the
    metric is rescaled by lambda_3^{2/3} and retested.  The threshold is
    relative to the scale sqrt(|W+|) |F|, so verdicts are invariant under
    constant metric scalings.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    base = _parallelism(spec, points)
    if base is None:
        return KahlerVerdict(verdict="Degenerate", max_dF=np.inf,
                             max_nablaF=np.inf, eigen_pattern={}, tol=tol)
    hat_spec = kahler_rescale(spec)
    hat = _parallelism(hat_spec, points)
    if hat is None:
        return KahlerVerdict(verdict="Degenerate", max_dF=np.inf,
                             max_nablaF=np.inf,
                             eigen_pattern=base["pattern"], tol=tol)
    if base["rel"] <= tol:
        verdict = "Kahler"
    elif hat["rel"] <= tol:
        verdict = "ConformallyKahler"
    else:
        verdict = "Generic"
    return KahlerVerdict(
        verdict=verdict, max_dF=hat["max_dF"], max_nablaF=hat["max_nablaF"],
        eigen_pattern=hat["pattern"], rel_nablaF_base=base["rel"],
        rel_nablaF_hat=hat["rel"], worst_point=points[hat["worst"]], tol=tol)


def rescaled_coeffs(spec, coords, ctx):
    """Taylor coefficients of the rescaled metric at batched coordinates."""
    return ch.metric_coeffs(kahler_rescale(spec), coords, ctx)
