"""Uniform tensor grids on boxes, finite differences and trapezoid quadrature."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import dsl
from .errors import AlignmentError, DimensionError, InputError

ALIGN_TOL = 1e-9  # in units of grid spacing


@dataclass(frozen=True)
class GridDomain:
    lo: tuple
    hi: tuple
    resolution: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        res = np.atleast_1d(self.resolution)
        if len(res) == 1 and len(lo) > 1:
            res = np.repeat(res, len(lo))
        res = tuple(int(r) for r in res)
        if not (len(lo) == len(hi) == len(res)) or not 1 <= len(lo) <= 3:
            raise DimensionError("grid needs matching lo, hi, resolution with 1 <= n <= 3")
        if not all(a < b for a, b in zip(lo, hi)):
            raise InputError("grid needs lo < hi componentwise")
        if min(res) < 3:
            raise InputError("grid needs at least 3 nodes per axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "resolution", res)

    @classmethod
    def box(cls, lo, hi, nodes):
        return cls(lo, hi, nodes)

    @property
    def n(self):
        return len(self.lo)

    @property
    def shape(self):
        return self.resolution

    @property
    def spacing(self):
        return tuple((b - a) / (r - 1) for a, b, r in zip(self.lo, self.hi, self.resolution))

    @cached_property
    def axes(self):
        return tuple(np.linspace(a, b, r) for a, b, r in zip(self.lo, self.hi, self.resolution))

    @cached_property
    def points(self):
        """Node coordinates, shape ``(N, n)`` in C order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @property
    def size(self):
        return int(np.prod(self.resolution))

    def index_box(self, lo, hi):
        """Node index ranges ``(start, stop)`` of an aligned sub-box.

        Raises :class:`AlignmentError` when a corner is not on a node or the
        sub-box leaves the grid.
        """
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if lo.shape != (self.n,) or hi.shape != (self.n,):
            raise DimensionError(f"sub-box corners need {self.n} coordinates")
        ranges = []
        for axis, (a, b) in enumerate(zip(lo, hi)):
            step = self.spacing[axis]
            ia = (a - self.lo[axis]) / step
            ib = (b - self.lo[axis]) / step
            for v, corner in ((ia, a), (ib, b)):
                if abs(v - round(v)) > ALIGN_TOL:
                    raise AlignmentError(f"sub-box corner {corner} is not on a node of axis {axis}")
            ia, ib = int(round(ia)), int(round(ib))
            if ia < 0 or ib > self.resolution[axis] - 1 or ia >= ib:
                raise AlignmentError(f"sub-box [{a}, {b}] on axis {axis} is empty or leaves the grid")
            ranges.append((ia, ib + 1))
        return tuple(ranges)

    def refine(self, factor=2):
        return GridDomain(self.lo, self.hi, tuple((r - 1) * factor + 1 for r in self.resolution))

    def coarsen(self, factor=2):
        if any((r - 1) % factor for r in self.resolution):
            raise InputError(f"resolution {self.resolution} cannot be coarsened by {factor}")
        return GridDomain(self.lo, self.hi, tuple((r - 1) // factor + 1 for r in self.resolution))

    def to_json(self):
        return {"lo": list(self.lo), "hi": list(self.hi), "resolution": list(self.resolution)}

    @classmethod
    def from_json(cls, obj):
        try:
            return cls(obj["lo"], obj["hi"], obj["resolution"])
        except KeyError as exc:
            raise InputError(f"grid spec is missing {exc}") from None


@dataclass(frozen=True)
class Box:
    """Axis-aligned sub-box used as an integration region."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(v) for v in np.atleast_1d(self.lo)))
        object.__setattr__(self, "hi", tuple(float(v) for v in np.atleast_1d(self.hi)))

    def to_json(self):
        return {"lo": list(self.lo), "hi": list(self.hi)}

    @classmethod
    def from_json(cls, obj):
        return cls(obj["lo"], obj["hi"])

    def label(self):
        return "x".join(f"[{a:g},{b:g}]" for a, b in zip(self.lo, self.hi))


def whole(domain: GridDomain):
    return Box(domain.lo, domain.hi)


@dataclass(frozen=True)
class GridFunction:
    domain: GridDomain
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.domain.shape:
            raise DimensionError(f"values have shape {v.shape}, grid is {self.domain.shape}")
        if not np.all(np.isfinite(v)):
            bad = tuple(int(i) for i in np.argwhere(~np.isfinite(v))[0])
            raise InputError(f"grid function is not finite at node {bad}")
        object.__setattr__(self, "values", v)

    def __add__(self, other):
        if isinstance(other, GridFunction):
            return GridFunction(self.domain, self.values + other.values)
        return GridFunction(self.domain, self.values + other)

    def __mul__(self, k):
        return GridFunction(self.domain, self.values * k)

    __rmul__ = __mul__

    def flat(self):
        return self.values.ravel()

    def to_json(self):
        return {"domain": self.domain.to_json(), "values": self.values.tolist()}

    @classmethod
    def from_json(cls, obj):
        return cls(GridDomain.from_json(obj["domain"]), np.asarray(obj["values"], dtype=float))

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"x{i + 1}" for i in range(self.domain.n)] + ["value"])
        for p, v in zip(self.domain.points, self.flat()):
            w.writerow([repr(float(c)) for c in p] + [repr(float(v))])
        return buf.getvalue()


@dataclass(frozen=True)
class GridVectorField:
    domain: GridDomain
    values: np.ndarray = field(repr=False)  # shape (*resolution, k)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape[:-1] != self.domain.shape:
            raise DimensionError(f"values have shape {v.shape}, grid is {self.domain.shape}")
        object.__setattr__(self, "values", v)

    @property
    def components(self):
        return self.values.shape[-1]

    def flat(self):
        return self.values.reshape(-1, self.components)


def sample(domain: GridDomain, expr):
    """Evaluate ``expr`` (DSL text in ``x1..xn`` or a callable) at every node."""
    if isinstance(expr, str):
        e = dsl.Expression(expr)
        if dsl.uses(e.tree, "u") or dsl.uses(e.tree, "z"):
            raise InputError(f"{expr!r}: a grid function may only depend on x1..x{domain.n}")
        vals = e(x=domain.points)
    elif callable(expr):
        vals = np.broadcast_to(np.asarray(expr(domain.points), dtype=float), (domain.size,))
    else:
        vals = np.full(domain.size, float(expr))
    vals = np.asarray(vals, dtype=float).reshape(domain.shape)
    if not np.all(np.isfinite(vals)):
        bad = tuple(int(i) for i in np.argwhere(~np.isfinite(vals))[0])
        raise InputError(f"sampled function is not finite at node {bad}")
    return GridFunction(domain, vals)


def gradient_fd(u: GridFunction):
    """Euclidean gradient by finite differences.

    Central differences at interior nodes and second-order one-sided
    differences at boundary nodes; exact on quadratics along each axis.
    """
    d = u.domain
    if len(d.axes) == 1:
        parts = [np.gradient(u.values, d.spacing[0], edge_order=2)]
    else:
        parts = np.gradient(u.values, *d.spacing, edge_order=2)
    return GridVectorField(d, np.stack(parts, axis=-1))


def x_gradient(u: GridFunction, field_):
    """``Xu = C(x) Du`` at every node; ``m`` components."""
    d = u.domain
    if field_.n != d.n:
        raise DimensionError(f"field lives in R^{field_.n} but the grid is {d.n}-dimensional")
    if not np.all(field_.contains(np.array([d.lo, d.hi]))):
        raise DimensionError(f"grid box {d.lo}..{d.hi} is not inside the domain of {field_.name}")
    du = gradient_fd(u).flat()
    xu = np.einsum("kmn,kn->km", field_.matrices(d.points), du)
    return GridVectorField(d, xu.reshape(d.shape + (field_.m,)))


def axis_weights(domain: GridDomain, box: Box | None = None):
    """Per-axis trapezoid factors (1 inside, 1/2 on the faces, 0 outside)."""
    ranges = domain.index_box(box.lo, box.hi) if box is not None else tuple((0, r) for r in domain.resolution)
    out = []
    for (a, b), r in zip(ranges, domain.resolution):
        w = np.zeros(r)
        w[a:b] = 1.0
        w[a] = w[b - 1] = 0.5
        out.append(w)
    return out


def trapezoid_weights(domain: GridDomain, box: Box | None = None):
    """Nodal weights of the tensor trapezoid rule over ``box``.

    Computed as ``prod(spacing) * prod(factors)``; the factors are powers of
    one half, so splitting a box along a node plane gives weights that add
    up exactly.
    """
    base = math.prod(domain.spacing)
    factors = axis_weights(domain, box)
    w = factors[0]
    for f in factors[1:]:
        w = np.multiply.outer(w, f)
    return base * w


def integrate(g: GridFunction, box: Box | None = None):
    """Tensor trapezoid rule; exact for multilinear integrands."""
    w = trapezoid_weights(g.domain, box)
    return math.fsum((w * g.values).ravel())


def dilate(domain: GridDomain, box: Box, layers=1):
    """Boolean node mask of ``box`` grown by ``layers`` nodes on each side."""
    ranges = domain.index_box(box.lo, box.hi)
    mask = np.zeros(domain.shape, dtype=bool)
    sl = tuple(slice(max(a - layers, 0), min(b + layers, r)) for (a, b), r in zip(ranges, domain.resolution))
    mask[sl] = True
    return mask


# Linear operators used by the minimizer ------------------------------------------

def difference_matrix(nodes, spacing):
    """1-D sparse matrix of :func:`gradient_fd` along one axis."""
    from scipy import sparse

    rows, cols, vals = [], [], []
    half = 0.5 / spacing
    for i in range(1, nodes - 1):
        rows += [i, i]
        cols += [i - 1, i + 1]
        vals += [-half, half]
    last = nodes - 1
    rows += [0, 0, 0, last, last, last]
    cols += [0, 1, 2, last - 2, last - 1, last]
    vals += [-3 * half, 4 * half, -half, half, -4 * half, 3 * half]
    return sparse.csr_matrix((vals, (rows, cols)), shape=(nodes, nodes))


def gradient_operators(domain: GridDomain):
    """Sparse matrices ``D_i`` with ``(D_i @ u.ravel())`` the ``i``-th partial."""
    from scipy import sparse

    ops = []
    for axis in range(domain.n):
        mats = [sparse.identity(r, format="csr") for r in domain.resolution]
        mats[axis] = difference_matrix(domain.resolution[axis], domain.spacing[axis])
        op = mats[0]
        for m in mats[1:]:
            op = sparse.kron(op, m, format="csr")
        ops.append(op)
    return ops


def gauss_operators(domain: GridDomain):
    """Multilinear finite-element evaluation at two Gauss points per cell and axis.

    Returns ``(points, weights, value_op, grad_ops)``: the quadrature points
    ``(G, n)``, their weights, the sparse map from nodal values to values at
    the points, and one sparse map per axis to the partial derivatives. The
    rule integrates products of multilinear functions exactly.
    """
    from scipy import sparse

    t = np.array([0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0)])
    vals, ders, coords, wts = [], [], [], []
    for axis, r in enumerate(domain.resolution):
        step = domain.spacing[axis]
        cells = r - 1
        rows = np.arange(2 * cells)
        left = np.repeat(np.arange(cells), 2)
        tt = np.tile(t, cells)
        v = sparse.csr_matrix((np.concatenate([1 - tt, tt]), (np.concatenate([rows, rows]),
                                                              np.concatenate([left, left + 1]))),
                              shape=(2 * cells, r))
        d = sparse.csr_matrix((np.concatenate([np.full(2 * cells, -1.0 / step), np.full(2 * cells, 1.0 / step)]),
                               (np.concatenate([rows, rows]), np.concatenate([left, left + 1]))),
                              shape=(2 * cells, r))
        vals.append(v)
        ders.append(d)
        coords.append(domain.axes[axis][left] + tt * step)
        wts.append(np.full(2 * cells, step / 2))

    def kron_all(mats):
        out = mats[0]
        for m in mats[1:]:
            out = sparse.kron(out, m, format="csr")
        return out

    value_op = kron_all(vals)
    grad_ops = [kron_all([ders[i] if i == axis else vals[i] for i in range(domain.n)]) for axis in range(domain.n)]
    mesh = np.meshgrid(*coords, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1)
    w = wts[0]
    for extra in wts[1:]:
        w = np.multiply.outer(w, extra)
    return points, w.ravel(), value_op, grad_ops
