"""Truncated multivariate Taylor arithmetic in four variables, batched over points.

Coefficient arrays carry the Taylor axis last: ``arr[..., t]`` is the monomial
coefficient of x^alpha(t) in the expansion around the base point.  Exponent
tuples alpha(t) are enumerated by total degree, reverse-lexicographic within a
degree, so lower orders are prefixes of higher orders: truncation is a slice
and order lifting is zero padding.  All operations are elementwise over the
leading batch axes.
"""

from __future__ import annotations

import functools
import itertools
import math

import numpy as np

NVARS = 4


class Context:
    """Precomputed index tables for one truncation order."""

    def __init__(self, order):
        self.order = order
        exps = []
        for deg in range(order + 1):
            block = [e for e in itertools.product(range(deg, -1, -1), repeat=NVARS)
                     if sum(e) == deg]
            block.sort(reverse=True)
            exps.extend(block)
        self.exponents = np.array(exps, dtype=np.int64)
        self.size = len(exps)
        self.index = {tuple(e): t for t, e in enumerate(exps)}
        self.degree = self.exponents.sum(axis=1)

        # product table: pairs (i, j) grouped by output monomial, sorted so
        # np.add.reduceat can segment-sum them; the (t, 0) pair keeps every
        # segment nonempty
        pairs = []
        for t, et in enumerate(exps):
            for i, ei in enumerate(exps):
                rem = tuple(a - b for a, b in zip(et, ei))
                if min(rem) < 0:
                    continue
                pairs.append((t, i, self.index[rem]))
        pairs.sort()
        self.pair_i = np.array([p[1] for p in pairs], dtype=np.intp)
        self.pair_j = np.array([p[2] for p in pairs], dtype=np.intp)
        outs = np.array([p[0] for p in pairs])
        self.seg_starts = np.searchsorted(outs, np.arange(self.size))

        # derivative extraction: position and factor of the source coefficient
        # for each monomial of the order-1 lower context
        if order > 0:
            prev_size = len([e for e in exps if sum(e) <= order - 1])
            self.dsrc = np.empty((NVARS, prev_size), dtype=np.intp)
            self.dfac = np.empty((NVARS, prev_size))
            for a in range(NVARS):
                for t in range(prev_size):
                    beta = list(exps[t])
                    beta[a] += 1
                    self.dsrc[a, t] = self.index[tuple(beta)]
                    self.dfac[a, t] = beta[a]

        self.factorials = np.array(
            [math.prod(math.factorial(int(e)) for e in row) for row in self.exponents])


@functools.lru_cache(maxsize=None)
def context(order):
    if order < 0:
        raise ValueError("taylor order must be nonnegative")
    return Context(order)


def value(arr):
    """Constant term of a coefficient array."""
    return arr[..., 0]


def truncate(arr, ctx_to):
    return arr[..., : ctx_to.size]


def lift(arr, ctx_to):
    pad = ctx_to.size - arr.shape[-1]
    if pad < 0:
        raise ValueError("lift target order is lower than source")
    widths = [(0, 0)] * (arr.ndim - 1) + [(0, pad)]
    return np.pad(arr, widths)


def mul(ctx, a, b):
    """Truncated product of two coefficient arrays."""
    prod = a[..., ctx.pair_i] * b[..., ctx.pair_j]
    return np.add.reduceat(prod, ctx.seg_starts, axis=-1)


def emul(ctx, spec, a, b=None):
    """einsum over tensor indices with Taylor products on the trailing axis.

    ``spec`` covers the tensor axes only, e.g. '...ij,...jk->...ik'; the
    Taylor axis is appended internally.  With one operand the call is a plain
    trace/transpose carried pointwise across coefficients.
    """
    lhs, out = spec.split("->")
    if b is None:
        return np.einsum(f"{lhs}P->{out}P", a)
    sa, sb = lhs.split(",")
    prod = np.einsum(f"{sa}P,{sb}P->{out}P",
                     a[..., ctx.pair_i], b[..., ctx.pair_j])
    return np.add.reduceat(prod, ctx.seg_starts, axis=-1)


def deriv(ctx, arr, axis_var):
    """Coefficient array of the partial derivative; drops one order."""
    return arr[..., ctx.dsrc[axis_var]] * ctx.dfac[axis_var]


def deriv_all(ctx, arr):
    """All four partials, stacked on a new axis before the Taylor axis."""
    return np.stack([deriv(ctx, arr, a) for a in range(NVARS)], axis=-2)


def identity44(ctx, batch_shape=()):
    out = np.zeros(batch_shape + (4, 4, ctx.size))
    for i in range(4):
        out[..., i, i, 0] = 1.0
    return out


def inverse44(ctx, m):
    """Taylor inverse of a batched 4x4 matrix via Newton iteration."""
    x = np.zeros_like(m)
    x[..., 0] = np.linalg.inv(m[..., 0])
    if ctx.order == 0:
        return x
    eye2 = 2.0 * identity44(ctx, m.shape[:-3])
    # quadratic convergence in nilpotent degree: 2^n - 1 >= order
    for _ in range(math.ceil(math.log2(ctx.order + 1))):
        x = emul(ctx, "...ij,...jk->...ik", x, eye2 - emul(ctx, "...ij,...jk->...ik", m, x))
    return x


def det44(ctx, m):
    """Taylor determinant of a batched 4x4 matrix by permutation expansion."""
    out = 0.0
    for perm in itertools.permutations(range(4)):
        sign = 1.0
        for i in range(4):
            for j in range(i + 1, 4):
                if perm[i] > perm[j]:
                    sign = -sign
        term = m[..., 0, perm[0], :]
        for col in (1, 2, 3):
            term = mul(ctx, term, m[..., col, perm[col], :])
        out = out + sign * term
    return out


def compose(ctx, u, series):
    """Evaluate sum_m series[m] * (u - u0)^m by Horner on the nilpotent part."""
    du = u.copy()
    du[..., 0] = 0.0
    out = np.zeros_like(u)
    out[..., 0] = series[-1]
    for s in series[-2::-1]:
        out = mul(ctx, out, du)
        out[..., 0] += s
    return out


def _ratio_series(u0, order, s0, ratio):
    series = [np.asarray(s0)]
    for m in range(1, order + 1):
        series.append(series[-1] * ratio(m))
    return series


def powf(ctx, u, p):
    u0 = u[..., 0]
    return compose(ctx, u, _ratio_series(u0, ctx.order, u0 ** p,
                                         lambda m: (p - m + 1) / (m * u0)))


def reciprocal(ctx, u):
    return powf(ctx, u, -1.0)


def sqrt_(ctx, u):
    return powf(ctx, u, 0.5)


def exp_(ctx, u):
    u0 = u[..., 0]
    return compose(ctx, u, _ratio_series(u0, ctx.order, np.exp(u0), lambda m: 1.0 / m))


def log_(ctx, u):
    u0 = u[..., 0]
    series = [np.log(u0)]
    for m in range(1, ctx.order + 1):
        series.append((-1.0) ** (m - 1) / (m * u0 ** m))
    return compose(ctx, u, series)


def sin_(ctx, u):
    u0 = u[..., 0]
    cycle = [np.sin(u0), np.cos(u0), -np.sin(u0), -np.cos(u0)]
    series = [cycle[m % 4] / math.factorial(m) for m in range(ctx.order + 1)]
    return compose(ctx, u, series)


def cos_(ctx, u):
    u0 = u[..., 0]
    cycle = [np.cos(u0), -np.sin(u0), -np.cos(u0), np.sin(u0)]
    series = [cycle[m % 4] / math.factorial(m) for m in range(ctx.order + 1)]
    return compose(ctx, u, series)


class Tay:
    """Scalar Taylor series with operator overloading, for chart formulas."""

    __slots__ = ("ctx", "c")

    def __init__(self, ctx, c):
        self.ctx = ctx
        self.c = c

    def _coerce(self, other):
        if isinstance(other, Tay):
            return other.c
        out = np.zeros(np.broadcast_shapes(np.shape(other), self.c.shape[:-1])
                       + (self.ctx.size,))
        out[..., 0] = other
        return out

    def __add__(self, other):
        return Tay(self.ctx, self.c + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Tay(self.ctx, self.c - self._coerce(other))

    def __rsub__(self, other):
        return Tay(self.ctx, self._coerce(other) - self.c)

    def __neg__(self):
        return Tay(self.ctx, -self.c)

    def __mul__(self, other):
        if isinstance(other, Tay):
            return Tay(self.ctx, mul(self.ctx, self.c, other.c))
        return Tay(self.ctx, self.c * np.asarray(other)[..., None])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tay):
            return self * Tay(self.ctx, reciprocal(self.ctx, other.c))
        return Tay(self.ctx, self.c / np.asarray(other)[..., None])

    def __rtruediv__(self, other):
        return Tay(self.ctx, reciprocal(self.ctx, self.c)) * other

    def __pow__(self, p):
        # integer powers by squaring so negative bases stay exact
        if isinstance(p, int) or (isinstance(p, float) and p == int(p) and abs(p) <= 16):
            n = int(p)
            if n < 0:
                return (self ** (-n)).__rtruediv__(1.0)
            out = Tay(self.ctx, constant(self.ctx, 1.0, self.c.shape[:-1]))
            base = self
            while n:
                if n & 1:
                    out = out * base
                base = base * base
                n >>= 1
            return out
        return Tay(self.ctx, powf(self.ctx, self.c, p))


def constant(ctx, v, batch_shape=()):
    out = np.zeros(np.broadcast_shapes(np.shape(v), batch_shape) + (ctx.size,))
    out[..., 0] = v
    return out


def variables(ctx, coords):
    """Taylor seeds of the four coordinate functions around each batch point."""
    coords = np.asarray(coords, dtype=float)
    seeds = []
    for a in range(NVARS):
        c = np.zeros(coords.shape[:-1] + (ctx.size,))
        c[..., 0] = coords[..., a]
        if ctx.order >= 1:
            c[..., 1 + a] = 1.0
        seeds.append(Tay(ctx, c))
    return seeds


def sin(x):
    return Tay(x.ctx, sin_(x.ctx, x.c)) if isinstance(x, Tay) else np.sin(x)


def cos(x):
    return Tay(x.ctx, cos_(x.ctx, x.c)) if isinstance(x, Tay) else np.cos(x)


def exp(x):
    return Tay(x.ctx, exp_(x.ctx, x.c)) if isinstance(x, Tay) else np.exp(x)


def log(x):
    return Tay(x.ctx, log_(x.ctx, x.c)) if isinstance(x, Tay) else np.log(x)


def sqrt(x):
    return Tay(x.ctx, sqrt_(x.ctx, x.c)) if isinstance(x, Tay) else np.sqrt(x)


def pack44(entries, ctx=None, batch=()):
    """Assemble a batched 4x4 Taylor matrix from Tay or numeric entries."""
    for row in entries:
        for e in row:
            if isinstance(e, Tay):
                ctx = e.ctx
                batch = np.broadcast_shapes(batch, e.c.shape[:-1])
    out = np.zeros(batch + (4, 4, ctx.size))
    for i, row in enumerate(entries):
        for j, e in enumerate(row):
            if isinstance(e, Tay):
                out[..., i, j, :] = e.c
            else:
                out[..., i, j, 0] = e
    return out
