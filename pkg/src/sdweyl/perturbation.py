"""Parameter derivatives of derived fields along one-parameter metric families.

A family g(s) anchored at a distinguished background carries every derived
object along with it: curvature, eigen-data of the self-dual Weyl operator,
the rescaled geometry, and the divergence-identity terms.  This module
extracts first and second s-derivatives of those objects by central
differences of analytically evaluated family members, and runs the
structural checks available when the background is Einstein and the top
eigenform is parallel after rescaling: closedness of the linearized
eigenform, the positive second-order expansion of the A-term, and
second-order parallelism of the almost-complex structure.

Eigenform-valued quantities are defined only up to a sign at each point, so
every stencil evaluation is aligned against the s = 0 form at the stencil
centre before differencing.  The two lowest eigenvalues are degenerate on
the rescaled background and their sorted branches cross at s = 0; the slope
difference is therefore recovered from the even part of the sorted gap,
which is insensitive to branch relabelling.
"""

import dataclasses

import numpy as np

from . import charts as ch
from . import curvature as cv
from . import identity as idn
from . import kahler as kh
from . import selfdual as sd
from . import taylor as ty
from .errors import HypothesisViolated, ZeroLambda3

# five-point central weights on nodes (-2, -1, 0, 1, 2) * step
_D1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_D2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0

QUANTITIES = ("metric", "E", "Fhat", "Omega", "Ahat", "Bhat", "nablaFhat", "J")

DEFAULT_GATE_TOL = 1e-6
_TINY = 1e-300


@dataclasses.dataclass
class DeltaFields:
    """First and second s-derivatives of one derived field at fixed points."""

    quantity: str
    base: np.ndarray
    delta: np.ndarray
    delta2: np.ndarray
    stencil: tuple
    richardson_order: float
    truncation_delta: float
    truncation_delta2: float


@dataclasses.dataclass
class DifferenceTensor:
    """Connection difference C_ab^c between a family member and the base."""

    C: np.ndarray
    nabla_residual: float


@dataclasses.dataclass
class AExpansionReport:
    """Second-order expansion data for the A-term along an admissible family.

    grad_term, current_term, eigengap_term and rotation_term are the four
    nonnegative summands whose combination the second derivative of A must
    reproduce; match_residual is |delta2A - 2 * sum| pointwise.
    """

    A0: np.ndarray
    deltaA: np.ndarray
    delta2A: np.ndarray
    grad_term: np.ndarray
    current_term: np.ndarray
    eigengap_term: np.ndarray
    rotation_term: np.ndarray
    match_residual: np.ndarray
    s_step: float


@dataclasses.dataclass
class ParallelReport:
    """Norms of the covariant derivative of J along the family."""

    s_values: tuple
    norms: np.ndarray
    exponent: float
    below_tol: bool
    tol: float


def _member(curve, s):
    return ch.curve_metric_spec(curve, s)


def _rescaled_member(curve, s):
    """The family member carrying the eigenvalue rescaling.

    A base that is already eigenvalue-rescaled defines a family of rescaled
    metrics directly; otherwise each member is rescaled individually.
    """
    member = _member(curve, s)
    if any(w[0] == "eigenscale" for w in curve.base.wrappers):
        return member
    return kh.kahler_rescale(member)


def _rescaled_form_values(curve, s, coords):
    """Top eigenform of the rescaled member at batched coords, raw sign."""
    spec = _rescaled_member(curve, s)
    jet = ch.evaluate_jet(spec, coords, 2)
    pack = cv.CurvaturePack(jet)
    system = sd.weyl_plus_system(pack, orientation=spec.orientation)
    idn._require_simple_top(system)
    return system.eigenforms[..., 2, :, :]


def _eval_quantity(curve, quantity, s, coords):
    """One family member's field value, plus the gauge form when the value
    carries the eigenform's sign ambiguity."""
    if quantity == "metric":
        return ch.evaluate_jet(_member(curve, s), coords, 0).g, None
    if quantity == "E":
        jet = ch.evaluate_jet(_member(curve, s), coords, 2)
        return cv.CurvaturePack(jet).trace_free_ricci, None
    if quantity == "Omega":
        spec = _member(curve, s)
        jet = ch.evaluate_jet(spec, coords, 2)
        system = sd.weyl_plus_system(cv.CurvaturePack(jet),
                                     orientation=spec.orientation)
        lam3 = system.lambdas[..., 2]
        if np.any(lam3 <= 0.0):
            raise ZeroLambda3("rescaling factor needs a positive top eigenvalue")
        return lam3 ** (1.0 / 3.0), None
    spec = _rescaled_member(curve, s)
    if quantity == "Fhat":
        form = _rescaled_form_values(curve, s, coords)
        return form, form
    if quantity == "J":
        jet = ch.evaluate_jet(spec, coords, 2)
        pack = cv.CurvaturePack(jet)
        system = sd.weyl_plus_system(pack, orientation=spec.orientation)
        idn._require_simple_top(system)
        form = system.eigenforms[..., 2, :, :]
        j = np.sqrt(2.0) * np.einsum("...bc,...ca->...ab", form, pack.ginv)
        return j, form
    if quantity == "nablaFhat":
        jet, pack, system = idn._pipeline(spec, coords, derivatives=1)
        sg = idn.spectral_gradient(system, pack)
        return sg.nablaF, system.eigenforms[..., 2, :, :]
    if quantity == "Ahat":
        jet, pack, system = idn._pipeline(spec, coords, derivatives=1)
        sg = idn.spectral_gradient(system, pack)
        return idn.term_A(sg, system, jet), None
    if quantity == "Bhat":
        jet, pack, system = idn._pipeline(spec, coords)
        return idn.term_B(pack, system, jet), None
    raise ValueError(f"unknown quantity {quantity!r}; expected one of {QUANTITIES}")


def _aligned(value, gauge, ref_gauge):
    """Flip the eigenform-carried sign so `gauge` matches `ref_gauge`."""
    if gauge is None:
        return value
    inner = np.sum(gauge * ref_gauge, axis=(-2, -1))
    sgn = np.where(inner < 0.0, -1.0, 1.0)
    return value * sgn.reshape(sgn.shape + (1,) * (value.ndim - sgn.ndim))


def _maxabs(arr):
    return float(np.max(np.abs(arr))) if np.size(arr) else 0.0


def delta_fields(curve, quantity, point):
    """First and second s-derivatives of a derived field at fixed points.

    Evaluates the family on a nine-node s-stencil and differences with
    five-point central weights at three step levels; the coarser levels feed
    the observed-order and truncation estimates.
    """
    coords = np.asarray(point, dtype=float)
    h = curve.s_step
    svals = [0.0]
    for lev in (0.25, 0.5, 1.0, 2.0):
        svals += [lev * h, -lev * h]
    raw = {s: _eval_quantity(curve, quantity, s, coords) for s in svals}
    ref = raw[0.0][1]
    T = {s: _aligned(v, q, ref) for s, (v, q) in raw.items()}

    def d1(step):
        return sum(w * T[k * step] for w, k in zip(_D1, (-2, -1, 0, 1, 2))) / step

    def d2(step):
        return sum(w * T[k * step]
                   for w, k in zip(_D2, (-2, -1, 0, 1, 2))) / step ** 2

    d1h, d1h2, d1h4 = d1(h), d1(h / 2), d1(h / 4)
    d2h, d2h2, d2h4 = d2(h), d2(h / 2), d2(h / 4)
    coarse = _maxabs(d1h - d1h2) + _maxabs(d2h - d2h2)
    fine = _maxabs(d1h2 - d1h4) + _maxabs(d2h2 - d2h4)
    # rounding floor of the finest-level stencils; an observed order is only
    # meaningful while the level differences sit above it
    tmax = max(_maxabs(v) for v in T.values())
    eps = np.finfo(float).eps * tmax
    noise = 10.0 * (1.5 * eps / (h / 4) + 5.0 * eps / (h / 4) ** 2)
    if fine > noise:
        order = float(np.log2(max(coarse, _TINY) / fine))
    else:
        order = None
    return DeltaFields(
        quantity=quantity,
        base=T[0.0],
        delta=d1h4,
        delta2=d2h4,
        stencil=tuple(sorted(svals)),
        richardson_order=order,
        truncation_delta=_maxabs(d1h2 - d1h4),
        truncation_delta2=_maxabs(d2h2 - d2h4),
    )


def difference_tensor(curve, s, point):
    """Connection difference of the member at s against the s = 0 member.

    C_ab^c is assembled from the covariant derivative of the member metric
    with respect to the base connection; the returned residual compares it
    against the direct difference of Christoffel symbols.
    """
    coords = np.asarray(point, dtype=float)
    base_jet = ch.evaluate_jet(_member(curve, 0.0), coords, 2)
    member_jet = ch.evaluate_jet(_member(curve, s), coords, 2)
    ctx = base_jet.ctx
    ginv0_t = ty.inverse44(ctx, base_jet.coeffs)
    gamma0_t = cv.christoffel(ctx, base_jet.coeffs, ginv0_t)
    ng = cv.covariant_derivative(ctx, member_jet.coeffs, 2, gamma0_t)[..., 0]
    ginvs = ty.inverse44(ctx, member_jet.coeffs)[..., 0]
    sym = (np.einsum("...abd->...abd", ng)
           + np.einsum("...bad->...abd", ng)
           - np.einsum("...dab->...abd", ng))
    C = 0.5 * np.einsum("...cd,...abd->...abc", ginvs, sym)

    gammas = cv.christoffel(ctx, member_jet.coeffs, ty.inverse44(ctx, member_jet.coeffs))
    diff = np.einsum("...cab->...abc", (gammas - gamma0_t)[..., 0])
    return DifferenceTensor(C=C, nabla_residual=_maxabs(C - diff))


def _einstein_gate(curve, points, tol):
    """Require the base to be Einstein and the deformation trace-free-Ricci
    flat to first order; the checks below assume both."""
    df = delta_fields(curve, "E", points)
    base = _maxabs(df.base)
    first = _maxabs(df.delta)
    if base > tol or first > tol:
        raise HypothesisViolated(
            f"family fails the Einstein-deformation hypotheses: "
            f"|E(0)|={base:.3e}, |dE/ds|={first:.3e}, tol={tol:g}")


def _form_stencil_values(curve, coords, h_s):
    """Aligned eigenform values on the five-node s-stencil, per coordinate."""
    ref = _rescaled_form_values(curve, 0.0, coords)
    out = {}
    for k in (-2, -1, 0, 1, 2):
        raw = _rescaled_form_values(curve, k * h_s, coords) if k else ref
        out[k] = _aligned(raw, raw, ref)
    return out, ref


def delta2_form(curve, coords, h_s=None):
    """Second s-derivative of the rescaled top eigenform at batched coords.

    All stencil members are sign-aligned against the s = 0 evaluation at the
    same coordinates, making the result a smooth tensor field in x suitable
    for spatial differencing.
    """
    h_s = curve.s_step if h_s is None else h_s
    coords = np.asarray(coords, dtype=float)
    ref = _rescaled_form_values(curve, 0.0, coords)
    total = _D2[2] * ref
    for w, k in zip((_D2[0], _D2[1], _D2[3], _D2[4]), (-2, -1, 1, 2)):
        raw = _rescaled_form_values(curve, k * h_s, coords)
        total = total + w * _aligned(raw, raw, ref)
    return total / h_s ** 2


def check_order1_closed(curve, points, tol=None, gate_tol=DEFAULT_GATE_TOL):
    """Maximum norm of the exterior derivative of the linearized eigenform.

    The first s-derivative of the rescaled top form is differenced in space
    on a central stencil; all eigenform evaluations are aligned against the
    s = 0 form at the stencil centre so the spatial differences act on a
    smooth field.
    """
    points = np.asarray(points, dtype=float)
    _einstein_gate(curve, points, gate_tol)
    h_s = curve.s_step
    steps = 1e-3 * ch.fd_scales(curve.base)

    base_jet = ch.evaluate_jet(_rescaled_member(curve, 0.0), points, 2)
    pack = cv.CurvaturePack(base_jet)
    ref = _rescaled_form_values(curve, 0.0, points)

    legs = np.empty((2, 4) + points.shape)
    for a in range(4):
        off = np.zeros(4)
        off[a] = steps[a]
        legs[0, a] = points + off
        legs[1, a] = points - off
    flat = legs.reshape((8,) + points.shape)

    dF = {}
    for k in (-1, 1):
        vals = _rescaled_form_values(curve, k * h_s, flat)
        dF[k] = _aligned(vals, vals, ref[None])
    delta_legs = (dF[1] - dF[-1]) / (2.0 * h_s)
    delta_legs = delta_legs.reshape((2, 4) + points.shape[:-1] + (4, 4))
    grad = np.moveaxis(delta_legs[0] - delta_legs[1], 0, -3) \
        / (2.0 * steps)[:, None, None]
    ext = (grad
           + np.einsum("...abc->...cab", grad)
           + np.einsum("...abc->...bca", grad))
    n2 = np.einsum("...ad,...be,...cf,...abc,...def->...",
                   pack.ginv, pack.ginv, pack.ginv, ext, ext)
    return float(np.max(np.sqrt(np.abs(n2))))


def _pair_gap_slope(curve, points, h_s):
    """|d(lam2 - lam1)/ds| at s = 0 from the even part of the sorted gap."""

    def gap(s):
        spec = _rescaled_member(curve, s)
        jet = ch.evaluate_jet(spec, points, 2)
        system = sd.weyl_plus_system(cv.CurvaturePack(jet),
                                     orientation=spec.orientation)
        return system.lambdas[..., 1] - system.lambdas[..., 0]

    def even(step):
        return (gap(step) + gap(-step)) / (2.0 * step)

    return (4.0 * even(h_s) - even(2.0 * h_s)) / 3.0


def _expansion_data(curve, points, h_s):
    """Ungated second-order expansion data for the A-term."""
    points = np.asarray(points, dtype=float)
    vals = {}
    for k in (-2, -1, 0, 1, 2):
        spec = _rescaled_member(curve, k * h_s)
        jet, pack, system = idn._pipeline(spec, points, derivatives=1)
        sg = idn.spectral_gradient(system, pack)
        jcur, _ = idn.current_and_V(sg, system, jet)
        vals[k] = {
            "A": idn.term_A(sg, system, jet),
            "j": jcur,
            "nF": sg.nablaF,
            "form": system.eigenforms[..., 2, :, :],
        }
        if k == 0:
            g0 = pack.g
            ginv0 = pack.ginv
            lam3 = system.lambdas[..., 2]
    ref = vals[0]["form"]
    for k in vals:
        sgn_src = vals[k]["form"]
        vals[k]["j"] = _aligned(vals[k]["j"], sgn_src, ref)
        vals[k]["nF"] = _aligned(vals[k]["nF"], sgn_src, ref)

    def d1(field):
        return sum(w * vals[k][field]
                   for w, k in zip(_D1, (-2, -1, 0, 1, 2))) / h_s

    def d2(field):
        return sum(w * vals[k][field]
                   for w, k in zip(_D2, (-2, -1, 0, 1, 2))) / h_s ** 2

    dj = d1("j")
    dnF = d1("nF")
    current_term = np.einsum("...ab,...a,...b->...", g0, dj, dj)
    grad_norm2 = np.einsum("...ad,...be,...cf,...abc,...def->...",
                           ginv0, ginv0, ginv0, dnF, dnF)
    grad_term = grad_norm2 / 12.0
    rotation_term = 0.5 * grad_norm2 / 3.0
    eigengap_term = _pair_gap_slope(curve, points, h_s) ** 2 / (3.0 * lam3)
    delta2A = d2("A")
    total = grad_term + current_term + eigengap_term + rotation_term
    return AExpansionReport(
        A0=vals[0]["A"],
        deltaA=d1("A"),
        delta2A=delta2A,
        grad_term=grad_term,
        current_term=current_term,
        eigengap_term=eigengap_term,
        rotation_term=rotation_term,
        match_residual=np.abs(delta2A - 2.0 * total),
        s_step=h_s,
    )


def check_A_expansion(curve, points, s_step=None, gate_tol=DEFAULT_GATE_TOL):
    """Second-order expansion of the A-term along an admissible family.

    The background value and first derivative must vanish; the second
    derivative must reproduce twice the sum of the four nonnegative
    summands, each of which is reported separately.
    """
    points = np.asarray(points, dtype=float)
    _einstein_gate(curve, points, gate_tol)
    return _expansion_data(curve, points, s_step or curve.s_step)


def check_second_order_parallel(curve, points, tol=1e-8, s_step=None,
                                gate_tol=DEFAULT_GATE_TOL):
    """Decay of the covariant derivative of J along the family.

    Each member's almost-complex structure is differentiated with the
    member's own connection; the norms over s in {h, 2h, 4h} either stay
    below `tol` or fit a slope of at least two in log-log.
    """
    points = np.asarray(points, dtype=float)
    _einstein_gate(curve, points, gate_tol)
    h = s_step or curve.s_step
    svals = (h, 2.0 * h, 4.0 * h)
    norms = []
    for s in svals:
        spec = _rescaled_member(curve, s)
        jet, pack, system = idn._pipeline(spec, points, derivatives=1)
        sg = idn.spectral_gradient(system, pack)
        nj = np.sqrt(2.0) * np.einsum("...ebc,...ca->...eab",
                                      sg.nablaF, pack.ginv)
        n2 = np.einsum("...ef,...ad,...bg,...eab,...fdg->...",
                       pack.ginv, pack.g, pack.ginv, nj, nj)
        norms.append(float(np.max(np.sqrt(np.abs(n2)))))
    norms = np.asarray(norms)
    if np.all(norms <= tol):
        return ParallelReport(s_values=svals, norms=norms, exponent=None,
                              below_tol=True, tol=tol)
    slope = np.polyfit(np.log(svals), np.log(np.maximum(norms, _TINY)), 1)[0]
    return ParallelReport(s_values=svals, norms=norms, exponent=float(slope),
                          below_tol=False, tol=tol)


def phat_tensor(pack, system, orientation=1):
    """The projector-like tensor P^abcd built from the top eigenform.

    P^abcd = F^ab F^cd - (g^ac g^bd - g^ad g^bc + eps^abcd) / 6, with all
    raisings done by the metric the system was built from.
    """
    ginv = pack.ginv
    form = system.eigenforms[..., 2, :, :]
    fup = np.einsum("...ac,...bd,...cd->...ab", ginv, ginv, form)
    eps = cv.volume_form(ty.context(0), pack.g_t[..., :1], orientation)[..., 0]
    eps_up = np.einsum("...ae,...bf,...cg,...dh,...efgh->...abcd",
                       ginv, ginv, ginv, ginv, eps)
    gg = (np.einsum("...ac,...bd->...abcd", ginv, ginv)
          - np.einsum("...ad,...bc->...abcd", ginv, ginv))
    return (np.einsum("...ab,...cd->...abcd", fup, fup)
            - (gg + eps_up) / 6.0)


def phat_parallel_residual(spec, points, fd_step=None):
    """Max |covariant derivative of P| on the rescaled background.

    P is evaluated on spatial stencils and covariantized with the rescaled
    connection; on a background with parallel top eigenform the result is
    zero up to the differencing error.
    """
    points = np.asarray(points, dtype=float)
    if not any(w[0] == "eigenscale" for w in spec.wrappers):
        spec = kh.kahler_rescale(spec)
    jet, pack, system = idn._pipeline(spec, points)
    steps = (fd_step if fd_step is not None else 1e-4) * ch.fd_scales(spec)

    def values(coords):
        vjet = ch.evaluate_jet(spec, coords, 2)
        vpack = cv.CurvaturePack(vjet)
        vsys = sd.weyl_plus_system(vpack, orientation=spec.orientation)
        idn._require_simple_top(vsys)
        return phat_tensor(vpack, vsys, orientation=spec.orientation)

    legs = np.empty((2, 4) + points.shape)
    for a in range(4):
        off = np.zeros(4)
        off[a] = steps[a]
        legs[0, a] = points + off
        legs[1, a] = points - off
    p = values(legs.reshape((8,) + points.shape))
    p = p.reshape((2, 4) + points.shape[:-1] + (4,) * 4)
    grad = np.moveaxis(p[0] - p[1], 0, -5) \
        / (2.0 * steps)[:, None, None, None, None]
    p0 = phat_tensor(pack, system, orientation=spec.orientation)
    gam = pack.gamma
    nabla = (grad
             + np.einsum("...aem,...mbcd->...eabcd", gam, p0)
             + np.einsum("...bem,...amcd->...eabcd", gam, p0)
             + np.einsum("...cem,...abmd->...eabcd", gam, p0)
             + np.einsum("...dem,...abcm->...eabcd", gam, p0))
    return _maxabs(nabla) / max(_maxabs(p0), _TINY)
