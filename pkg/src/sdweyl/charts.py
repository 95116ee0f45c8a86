"""Coordinate charts, the metric catalog, and jet evaluation of metric components.

Every catalog entry fixes one preferred chart; components are closed-form
expressions evaluated through the truncated Taylor arithmetic, so jets are
exact to rounding at any supported order.  Wrappers (conformal rescaling,
pullback along an explicit diffeomorphism family, conformal bump) compose on
top of any base entry.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from . import taylor as ty
from .errors import (NonPositiveConformalFactor, PointOutsideChart,
                     StencilOutsideValidity, UnsupportedOrder)

MAX_ORDER = 4


@dataclasses.dataclass(frozen=True)
class ChartPoint:
    coords: tuple
    chart_id: str


@dataclasses.dataclass(frozen=True)
class ScalarField:
    """Closed-form positive scalar field used as a conformal factor or bump.

    kind 'const': value.  kind 'power': value * x_radial^exponent.  kind
    'bump': 1 + amplitude * exp(-|x-center|^2 / width^2).  kind 'gauss':
    amplitude * exp(-|x-center|^2 / width^2) without the offset.
    """

    kind: str = "const"
    value: float = 1.0
    exponent: float = 0.0
    center: tuple = (0.0, 0.0, 0.0, 0.0)
    width: float = 1.0
    amplitude: float = 0.0


@dataclasses.dataclass(frozen=True)
class FlowSpec:
    """Compactly supported vector field x -> poly(x) * bump(|x-center|/rho)."""

    center: tuple = (0.0, 0.0, 0.0, 0.0)
    rho: float = 1.0
    const_coeffs: tuple = (0.3, -0.2, 0.25, 0.15)
    lin_coeffs: tuple = ((0.1, -0.05, 0.0, 0.2),
                         (0.0, 0.15, -0.1, 0.05),
                         (-0.2, 0.0, 0.1, 0.1),
                         (0.05, 0.1, 0.0, -0.15))


@dataclasses.dataclass(frozen=True)
class MetricSpec:
    catalog_id: str
    params: tuple = ()
    orientation: int = 1
    wrappers: tuple = ()

    def __post_init__(self):
        if self.catalog_id not in CHARTS:
            raise PointOutsideChart(f"unknown catalog id {self.catalog_id!r}")
        for name, val in self.params:
            if val <= 0:
                raise ValueError(f"parameter {name} must be positive, got {val}")
        if self.orientation not in (1, -1):
            raise ValueError("orientation must be +1 or -1")

    @property
    def p(self):
        return dict(self.params)


def make_spec(catalog_id, orientation=1, wrappers=(), **params):
    if catalog_id not in CHARTS:
        raise PointOutsideChart(f"unknown catalog id {catalog_id!r}")
    chart = CHARTS[catalog_id]
    merged = dict(chart.defaults)
    merged.update(params)
    return MetricSpec(catalog_id, tuple(sorted(merged.items())), orientation,
                      tuple(wrappers))


@dataclasses.dataclass(frozen=True)
class CurveSpec:
    """One-parameter metric family anchored at a base spec at s=0."""

    base: MetricSpec
    family: tuple  # ('mass', dm) | ('gauge', FlowSpec) | ('conformal_bump', ScalarField)
    s_step: float = 1e-3
    s_width: int = 5
    s_validity: float = 1.0

    def __post_init__(self):
        kind = self.family[0]
        if kind not in ("mass", "gauge", "conformal_bump"):
            raise ValueError(f"unknown curve family {kind!r}")
        if kind == "mass" and (self.base.catalog_id != "EuclideanSchwarzschild"
                               or self.base.wrappers):
            raise ValueError("mass family requires a bare EuclideanSchwarzschild base")


class MetricJet:
    """Metric components and their coordinate partials at batched points."""

    def __init__(self, coords, coeffs, ctx, spec=None):
        self.point = coords
        self.coeffs = coeffs
        self.ctx = ctx
        self.order = ctx.order
        self.spec = spec

    @property
    def g(self):
        return self.coeffs[..., 0]

    def partial(self, *axes):
        """True mixed partial d_axes g_ab, axes a tuple of coordinate indices."""
        alpha = [0, 0, 0, 0]
        for a in axes:
            alpha[a] += 1
        t = self.ctx.index[tuple(alpha)]
        return self.coeffs[..., t] * self.ctx.factorials[t]

    def partials(self, depth):
        """All order-`depth` partials as an array with `depth` leading 4-axes."""
        if depth == 0:
            return self.g
        shape = self.coeffs.shape[:-3] + (4,) * depth + (4, 4)
        out = np.empty(shape)
        for axes in np.ndindex(*(4,) * depth):
            out[(...,) + axes + (slice(None), slice(None))] = self.partial(*axes)
        return out


# ---------------------------------------------------------------------------
# catalog charts


@dataclasses.dataclass(frozen=True)
class Chart:
    coord_names: tuple
    components: object
    domain: object
    box: object          # params -> (lo, hi) canonical sampling box
    fd_scale: object     # params -> per-coordinate step scales
    defaults: dict
    radial_index: int = None
    periods: object = None      # params -> {axis: period} for fibered directions
    half_flat_orientation: int = None


def _flat_components(par, x):
    return [[1.0 if i == j else 0.0 for j in range(4)] for i in range(4)]


def _schwarzschild_components(par, x):
    m = par["m"]
    _, r, th, _ = x
    f = 1.0 - 2.0 * m / r
    s2 = ty.sin(th) ** 2
    return [[f, 0.0, 0.0, 0.0],
            [0.0, 1.0 / f, 0.0, 0.0],
            [0.0, 0.0, r ** 2, 0.0],
            [0.0, 0.0, 0.0, r ** 2 * s2]]


def _taubnut_components(par, x):
    n = par["n"]
    _, r, th, _ = x
    v = 1.0 + 2.0 * n / r
    gtt = 4.0 * n ** 2 / v
    c = ty.cos(th)
    gtp = gtt * c
    return [[gtt, 0.0, 0.0, gtp],
            [0.0, v, 0.0, 0.0],
            [0.0, 0.0, v * r ** 2, 0.0],
            [gtp, 0.0, 0.0, v * (r * ty.sin(th)) ** 2 + gtt * c ** 2]]


def _eguchihanson_components(par, x):
    a = par["a"]
    r, th, _, _ = x
    d = 1.0 - (a / r) ** 4
    q = r ** 2 * 0.25
    c = ty.cos(th)
    gps = q * d * c
    return [[1.0 / d, 0.0, 0.0, 0.0],
            [0.0, q, 0.0, 0.0],
            [0.0, 0.0, q * (ty.sin(th) ** 2 + d * c ** 2), gps],
            [0.0, 0.0, gps, q * d]]


def _sphere4_components(par, x):
    a = par["a"]
    chi, th, ph, _ = x
    s1 = ty.sin(chi) ** 2
    s2 = s1 * ty.sin(th) ** 2
    return [[a ** 2, 0.0, 0.0, 0.0],
            [0.0, a ** 2 * s1, 0.0, 0.0],
            [0.0, 0.0, a ** 2 * s2, 0.0],
            [0.0, 0.0, 0.0, a ** 2 * s2 * ty.sin(ph) ** 2]]


def _products2xs2_components(par, x):
    a, b = par["a"], par["b"]
    th1, _, th2, _ = x
    return [[a ** 2, 0.0, 0.0, 0.0],
            [0.0, a ** 2 * ty.sin(th1) ** 2, 0.0, 0.0],
            [0.0, 0.0, b ** 2, 0.0],
            [0.0, 0.0, 0.0, b ** 2 * ty.sin(th2) ** 2]]


_BUMP_C1 = np.array([[1.0, 0.3, 0.0, 0.2],
                     [0.3, -0.5, 0.4, 0.0],
                     [0.0, 0.4, 0.7, 0.1],
                     [0.2, 0.0, 0.1, -0.3]])
_BUMP_C2 = np.array([[-0.4, 0.1, 0.5, 0.0],
                     [0.1, 0.8, 0.0, -0.3],
                     [0.5, 0.0, -0.6, 0.2],
                     [0.0, -0.3, 0.2, 0.9]])


def _genericbump_components(par, x):
    amp = par["amp"]
    c1 = (0.3, -0.2, 0.1, 0.0)
    c2 = (-0.4, 0.5, 0.0, 0.2)
    b1 = ty.exp(-sum((x[a] - c1[a]) ** 2 for a in range(4)) / 1.2 ** 2)
    b2 = ((1.0 + 0.5 * x[0] - 0.3 * x[2])
          * ty.exp(-sum((x[a] - c2[a]) ** 2 for a in range(4)) / 1.5 ** 2))
    rows = []
    for i in range(4):
        rows.append([(1.0 if i == j else 0.0)
                     + amp * (_BUMP_C1[i, j] * b1 + _BUMP_C2[i, j] * b2)
                     for j in range(4)])
    return rows


def _angles_interior(th_list, margin=0.0):
    ok = np.ones(np.shape(th_list[0]), dtype=bool)
    for th in th_list:
        ok &= (th > margin) & (th < math.pi - margin)
    return ok


CHARTS = {
    "Flat": Chart(
        coord_names=("x0", "x1", "x2", "x3"),
        components=_flat_components,
        domain=lambda par, c: np.ones(c.shape[:-1], dtype=bool),
        box=lambda par: (np.array([-1.0] * 4), np.array([1.0] * 4)),
        fd_scale=lambda par: np.ones(4),
        defaults={},
    ),
    "EuclideanSchwarzschild": Chart(
        coord_names=("tau", "r", "theta", "phi"),
        components=_schwarzschild_components,
        domain=lambda par, c: (c[..., 1] > 2.0 * par["m"]) & _angles_interior([c[..., 2]]),
        box=lambda par: (np.array([0.0, 3.0 * par["m"], 0.5, 0.0]),
                         np.array([8.0 * math.pi * par["m"], 8.0 * par["m"],
                                   math.pi - 0.5, 2.0 * math.pi])),
        fd_scale=lambda par: np.array([par["m"], par["m"], 1.0, 1.0]),
        defaults={"m": 1.0},
        radial_index=1,
        periods=lambda par: {0: 8.0 * math.pi * par["m"], 3: 2.0 * math.pi},
    ),
    "TaubNUT": Chart(
        coord_names=("tau", "r", "theta", "phi"),
        components=_taubnut_components,
        domain=lambda par, c: (c[..., 1] > 0.0) & _angles_interior([c[..., 2]]),
        box=lambda par: (np.array([0.0, 1.0 * par["n"], 0.5, 0.0]),
                         np.array([4.0 * math.pi, 6.0 * par["n"],
                                   math.pi - 0.5, 2.0 * math.pi])),
        fd_scale=lambda par: np.array([1.0, par["n"], 1.0, 1.0]),
        defaults={"n": 1.0},
        radial_index=1,
        periods=lambda par: {0: 4.0 * math.pi, 3: 2.0 * math.pi},
        half_flat_orientation=-1,
    ),
    "EguchiHanson": Chart(
        coord_names=("r", "theta", "phi", "psi"),
        components=_eguchihanson_components,
        domain=lambda par, c: (c[..., 0] > par["a"]) & _angles_interior([c[..., 1]]),
        box=lambda par: (np.array([1.2 * par["a"], 0.5, 0.0, 0.0]),
                         np.array([4.0 * par["a"], math.pi - 0.5,
                                   2.0 * math.pi, 2.0 * math.pi])),
        fd_scale=lambda par: np.array([par["a"], 1.0, 1.0, 1.0]),
        defaults={"a": 1.0},
        radial_index=0,
        periods=lambda par: {2: 2.0 * math.pi, 3: 2.0 * math.pi},
        half_flat_orientation=-1,
    ),
    "Sphere4": Chart(
        coord_names=("chi", "theta", "phi", "psi"),
        components=_sphere4_components,
        domain=lambda par, c: _angles_interior([c[..., 0], c[..., 1], c[..., 2]]),
        box=lambda par: (np.array([0.5, 0.5, 0.5, 0.0]),
                         np.array([math.pi - 0.5] * 3 + [2.0 * math.pi])),
        fd_scale=lambda par: np.ones(4),
        defaults={"a": 1.0},
    ),
    "ProductS2xS2": Chart(
        coord_names=("theta1", "phi1", "theta2", "phi2"),
        components=_products2xs2_components,
        domain=lambda par, c: _angles_interior([c[..., 0], c[..., 2]]),
        box=lambda par: (np.array([0.5, 0.0, 0.5, 0.0]),
                         np.array([math.pi - 0.5, 2.0 * math.pi,
                                   math.pi - 0.5, 2.0 * math.pi])),
        fd_scale=lambda par: np.ones(4),
        defaults={"a": 1.0, "b": 1.0},
    ),
    "GenericBump": Chart(
        coord_names=("x0", "x1", "x2", "x3"),
        components=_genericbump_components,
        domain=lambda par, c: np.ones(c.shape[:-1], dtype=bool),
        box=lambda par: (np.array([-1.2] * 4), np.array([1.2] * 4)),
        fd_scale=lambda par: np.ones(4),
        defaults={"amp": 0.15},
    ),
}


# ---------------------------------------------------------------------------
# scalar fields and flows


def field_value(field, chart, xs):
    """Evaluate a ScalarField spec on Taylor coordinates."""
    if field.kind == "const":
        return field.value
    if field.kind == "power":
        r = xs[chart.radial_index]
        return field.value * r ** field.exponent
    if field.kind in ("bump", "gauss"):
        g = field.amplitude * ty.exp(
            -sum((xs[a] - field.center[a]) ** 2 for a in range(4)) / field.width ** 2)
        return g + 1.0 if field.kind == "bump" else g
    raise ValueError(f"unknown scalar field kind {field.kind!r}")


def flow_velocity(flow, xs):
    """The vector field of a FlowSpec on Taylor coordinates; exact zero outside
    the support ball."""
    ctx = xs[0].ctx
    rho2 = flow.rho ** 2
    t0 = sum((xs[a].c[..., 0] - flow.center[a]) ** 2 for a in range(4)) / rho2
    inside = t0 < 1.0
    # clamp outside points to the bump center so the 1/(1-t) pole is never hit
    safe = [ty.Tay(ctx, np.where(inside[..., None], xs[a].c,
                                 ty.constant(ctx, flow.center[a], t0.shape)))
            for a in range(4)]
    t = sum((safe[a] - flow.center[a]) ** 2 for a in range(4)) / rho2
    bump = ty.exp(1.0 - 1.0 / (1.0 - t))
    mask = inside.astype(float)
    out = []
    for c in range(4):
        poly = flow.const_coeffs[c] + sum(flow.lin_coeffs[c][d] * safe[d]
                                          for d in range(4))
        out.append(ty.Tay(ctx, (poly * bump).c * mask[..., None]))
    return out


# ---------------------------------------------------------------------------
# jet evaluation


_WRAPPER_COST = {"pullback": 1, "eigenscale": 2,
                 "conformal": 0, "conformal_bump": 0}


def _order_cost(wrappers):
    return sum(_WRAPPER_COST[w[0]] for w in wrappers)


def _assemble(spec, wrappers, xs):
    """Metric coefficient array at the Taylor coordinates xs.

    Returns coefficients at order(xs) minus the total order cost of
    `wrappers`: each pullback spends one order on the Jacobian, and each
    eigenscale spends two on the curvature behind its scale factor.
    """
    chart = CHARTS[spec.catalog_id]
    ctx = xs[0].ctx
    if not wrappers:
        return ty.pack44(chart.components(spec.p, xs), ctx, xs[0].c.shape[:-1])
    kind = wrappers[-1]
    if kind[0] == "eigenscale":
        from . import kahler as kh

        inner = _assemble(spec, wrappers[:-1], xs)
        ictx = ty.context(ctx.order - _order_cost(wrappers))
        om2 = kh.eigenscale_factor(ictx, inner, spec.orientation)
        return ty.emul(ictx, "...,...ij->...ij", om2,
                       ty.truncate(inner, ictx))
    if kind[0] in ("conformal", "conformal_bump"):
        inner = _assemble(spec, wrappers[:-1], xs)
        ictx = ty.context(ctx.order - _order_cost(wrappers))
        if kind[0] == "conformal":
            om = field_value(kind[1], chart, xs)
        else:
            om = 1.0 + kind[2] * field_value(kind[1], chart, xs)
        if not isinstance(om, ty.Tay):
            om = ty.Tay(ctx, ty.constant(ctx, om, xs[0].c.shape[:-1]))
        if np.any(om.c[..., 0] <= 0.0):
            raise NonPositiveConformalFactor(
                "conformal factor must be strictly positive on the chart domain")
        om2 = ty.truncate((om * om).c, ictx)
        return ty.emul(ictx, "...,...ij->...ij", om2, inner)
    if kind[0] == "pullback":
        flow, s = kind[1], kind[2]
        xi = flow_velocity(flow, xs)
        ys = [xs[c] + s * xi[c] for c in range(4)]
        gy = _assemble(spec, wrappers[:-1], ys)
        ictx = ty.context(ctx.order - _order_cost(wrappers))
        jac = np.stack([np.stack([ty.deriv(ctx, ys[c].c, a)
                                  for a in range(4)], axis=-2)
                        for c in range(4)], axis=-3)  # (..., c, a, T')
        jac = ty.truncate(jac, ictx)
        gy = ty.truncate(gy, ictx)
        half = ty.emul(ictx, "...ca,...cd->...ad", jac, gy)
        return ty.emul(ictx, "...db,...ad->...ab", jac, half)
    raise ValueError(f"unknown wrapper {kind[0]!r}")


def metric_coeffs(spec, coords, ctx):
    """Taylor coefficients of the metric at batched coordinates, any order."""
    coords = np.asarray(coords, dtype=float)
    chart = CHARTS[spec.catalog_id]
    ok = chart.domain(spec.p, coords)
    if not np.all(ok):
        bad = int(np.size(ok) - np.count_nonzero(ok))
        raise PointOutsideChart(
            f"{bad} point(s) outside the {spec.catalog_id} chart domain")
    top = ty.context(ctx.order + _order_cost(spec.wrappers))
    xs = ty.variables(top, coords)
    return _assemble(spec, spec.wrappers, xs)


def evaluate_jet(spec, point, order):
    """Public jet evaluation; order capped at MAX_ORDER."""
    if order > MAX_ORDER or order < 0:
        raise UnsupportedOrder(f"jet order {order} outside supported range 0..{MAX_ORDER}")
    coords = np.asarray(point.coords if isinstance(point, ChartPoint) else point,
                        dtype=float)
    ctx = ty.context(order)
    return MetricJet(coords, metric_coeffs(spec, coords, ctx), ctx, spec=spec)


def fd_scales(spec):
    """Per-coordinate step scales for finite differencing on this chart."""
    return np.asarray(CHARTS[spec.catalog_id].fd_scale(spec.p), dtype=float)


def conformal_wrap(spec, omega):
    """Wrap a spec with a conformal factor given as a ScalarField."""
    if omega.kind == "const" and omega.value <= 0:
        raise NonPositiveConformalFactor("constant conformal factor must be positive")
    if omega.kind == "bump" and abs(omega.amplitude) >= 1.0:
        raise NonPositiveConformalFactor("bump amplitude must stay below 1")
    return dataclasses.replace(spec, wrappers=spec.wrappers + (("conformal", omega),))


def curve_metric_spec(curve, s):
    """The family member at parameter s as a plain MetricSpec."""
    kind = curve.family[0]
    if abs(s) > curve.s_validity:
        raise StencilOutsideValidity(
            f"|s|={abs(s):g} exceeds the declared validity {curve.s_validity:g}")
    base = curve.base
    if kind == "mass":
        m = base.p["m"] + s * curve.family[1]
        return make_spec("EuclideanSchwarzschild", base.orientation, m=m)
    if kind == "gauge":
        return dataclasses.replace(
            base, wrappers=base.wrappers + (("pullback", curve.family[1], s),))
    return dataclasses.replace(
        base, wrappers=base.wrappers + (("conformal_bump", curve.family[1], s),))


def curve_jet(curve, s, point, order):
    return evaluate_jet(curve_metric_spec(curve, s), point, order)


def sample_points(spec, n, rng):
    """Deterministic uniform samples in the chart's canonical box."""
    chart = CHARTS[spec.catalog_id]
    lo, hi = chart.box(spec.p)
    return lo + (hi - lo) * rng.uniform(size=(n, 4))


def catalog_entries():
    rows = []
    for cid, chart in CHARTS.items():
        rows.append({
            "catalog_id": cid,
            "coords": "/".join(chart.coord_names),
            "params": ",".join(f"{k}={v:g}" for k, v in sorted(chart.defaults.items())),
            "radial": chart.coord_names[chart.radial_index]
            if chart.radial_index is not None else "-",
            "half_flat_orientation": chart.half_flat_orientation or 0,
        })
    return rows
