"""Integral functionals ``F(u, A) = int_A f(x, u, Xu) dx`` on grid functions.

``Xu`` is computed once on the whole grid (a face node of ``A`` reads its
neighbour outside ``A``), then the trapezoid rule over ``A`` is applied. A
consequence is that finite additivity over node-aligned splits is exact,
and locality holds for functions that agree on ``A`` plus a one-node halo.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .checks import CheckReport, combine
from .errors import DimensionError, InputError
from .fields import CoefficientField
from .grid import Box, GridDomain, GridFunction, dilate, sample, trapezoid_weights, whole, x_gradient
from .lagrangian import ANISOTROPIC, GrowthCertificate, Lagrangian


@dataclass(frozen=True)
class FunctionalSpec:
    lagrangian: Lagrangian
    field: CoefficientField
    p: float = 2.0

    def __post_init__(self):
        if self.lagrangian.kind != ANISOTROPIC:
            raise InputError("a functional needs an anisotropic Lagrangian")
        if self.lagrangian.dim is not None and self.lagrangian.dim != self.field.m:
            raise DimensionError(f"Lagrangian takes {self.lagrangian.dim} gradient components, field has m={self.field.m}")
        if self.p < 1:
            raise InputError("p must be >= 1")

    def to_json(self):
        return {"lagrangian": self.lagrangian.to_json(), "field": self.field.spec, "p": self.p}


@dataclass
class FunctionalReport:
    value: float
    box: Box
    domain: GridDomain
    weights: np.ndarray = field(repr=False)
    integrand: np.ndarray = field(repr=False)
    contributions: np.ndarray = field(repr=False)
    checks: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "value": self.value,
            "box": self.box.to_json(),
            "checks": {k: v.to_dict() for k, v in self.checks.items()},
        }

    def to_csv(self):
        """One row per node of the box: coordinates, weight, integrand, contribution."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n = self.domain.n
        w.writerow([f"x{i + 1}" for i in range(n)] + ["weight", "integrand", "contribution"])
        mask = (self.weights > 0).ravel()
        pts = self.domain.points[mask]
        for p, wt, g, c in zip(pts, self.weights.ravel()[mask], self.integrand.ravel()[mask],
                               self.contributions.ravel()[mask]):
            w.writerow([repr(float(t)) for t in p] + [repr(float(wt)), repr(float(g)), repr(float(c))])
        return buf.getvalue()


def integrand_values(spec: FunctionalSpec, u: GridFunction):
    """``f(x, u(x), Xu(x))`` at every node, shape of the grid."""
    d = u.domain
    xu = x_gradient(u, spec.field).flat()
    vals = spec.lagrangian(d.points, u.flat(), xu)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        k = int(np.argmax(bad))
        raise InputError(f"integrand is not finite at node {d.points[k].tolist()} (Xu = {xu[k].tolist()})")
    return vals.reshape(d.shape)


def functional_report(spec: FunctionalSpec, u: GridFunction, box: Box | None = None):
    box = whole(u.domain) if box is None else box
    w = trapezoid_weights(u.domain, box)
    g = integrand_values(spec, u)
    contrib = w * g
    return FunctionalReport(math.fsum(contrib.ravel()), box, u.domain, w, g, contrib)


def eval_functional(spec: FunctionalSpec, u: GridFunction, box: Box | None = None):
    """Trapezoid value of ``F(u, box)`` (the whole grid when ``box`` is None)."""
    return functional_report(spec, u, box).value


def exact_total(contributions):
    """Exact rational sum of floating-point contributions."""
    return sum((Fraction(float(c)) for c in np.ravel(contributions) if c != 0.0), Fraction(0))


def _relative(a, b):
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0.0 else abs(a - b) / scale


# Corpus helpers ---------------------------------------------------------------

def smooth_corpus(domain: GridDomain, count=50, seed=0):
    """Deterministic list of ``(source, GridFunction)`` smooth test functions."""
    rng = np.random.default_rng(seed)
    n = domain.n
    out = []
    for _ in range(count):
        k = rng.integers(1, 4, size=n)
        ph = np.round(rng.uniform(0, 3, size=n), 3)
        a, b, c = np.round(rng.uniform(-1.5, 1.5, size=3), 3)
        trig = "*".join(f"sin({k[i]}*pi*x{i + 1} + {ph[i]})" for i in range(n))
        poly = f"{b}*x1^2" + (f" + {c}*x1*x{n}" if n > 1 else f" + {c}*x1")
        src = f"{a}*{trig} + {poly}"
        out.append((src, sample(domain, src)))
    return out


def polynomial_corpus(domain: GridDomain):
    """Low-degree polynomials with small dyadic coefficients."""
    n = domain.n
    srcs = ["x1", f"x{n}", "x1*x" + str(n), "x1^2 - 0.5*x" + str(n), "2*x1 + 0.25*x1^2*x" + str(n)]
    return [(s, sample(domain, s)) for s in srcs]


def random_boxes(domain: GridDomain, count=10, seed=0):
    """Random node-aligned sub-boxes with at least three nodes per axis."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        lo, hi = [], []
        for axis, r in enumerate(domain.resolution):
            a = int(rng.integers(0, r - 2))
            b = int(rng.integers(a + 2, r))
            lo.append(domain.axes[axis][a])
            hi.append(domain.axes[axis][b])
        out.append(Box(lo, hi))
    return out


def split_box(domain: GridDomain, box: Box, axis, node_offset=None):
    """Split ``box`` at a node plane on ``axis``; returns the two halves."""
    ranges = domain.index_box(box.lo, box.hi)
    a, b = ranges[axis]
    cut = (a + b - 1) // 2 if node_offset is None else a + node_offset
    if not a < cut < b - 1:
        raise InputError("split plane must lie strictly inside the box")
    x_cut = domain.axes[axis][cut]
    lo1, hi1 = list(box.lo), list(box.hi)
    lo2, hi2 = list(box.lo), list(box.hi)
    hi1[axis] = x_cut
    lo2[axis] = x_cut
    return Box(lo1, hi1), Box(lo2, hi2)


# Comparisons and structural checks --------------------------------------------------

def compare_functionals(spec1: FunctionalSpec, spec2: FunctionalSpec, corpus, tol=1e-9, boxes=None):
    """Relative difference of two functionals over a corpus.

    ``corpus`` is a list of ``(name, GridFunction)``; ``boxes`` defaults to
    the whole grid for each entry. The report's ``rows`` part lists every
    ``(name, box, F1, F2)``.
    """
    if spec1.field.n != spec2.field.n or spec1.field.m != spec2.field.m or spec1.p != spec2.p:
        raise InputError("compared functionals must share the field shape and p")
    worst, witness, rows = -1.0, None, []
    for name, u in corpus:
        for box in (boxes or [whole(u.domain)]):
            f1 = eval_functional(spec1, u, box)
            f2 = eval_functional(spec2, u, box)
            rel = _relative(f1, f2)
            rows.append({"u": name, "box": box.label(), "F1": f1, "F2": f2, "rel_diff": rel})
            if rel > worst:
                worst, witness = rel, {"u": name, "box": box.label(), "F1": f1, "F2": f2}
    rep = CheckReport("compare", worst <= tol, worst, tol, len(rows), witness)
    rep.rows = rows
    return rep


def comparison_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["u", "box", "F1", "F2", "rel_diff"])
    for r in rows:
        w.writerow([r["u"], r["box"], repr(r["F1"]), repr(r["F2"]), repr(r["rel_diff"])])
    return buf.getvalue()


def check_additivity(spec, corpus, boxes=None):
    """``F(u, A1) + F(u, A2) == F(u, A1 u A2)`` for node-aligned splits, exactly.

    Sums are taken in exact rational arithmetic over the per-node
    contributions, so the residual measures the quadrature split alone.
    """
    worst, witness, count = 0.0, None, 0
    for name, u in corpus:
        d = u.domain
        g = integrand_values(spec, u)
        for box in (boxes or [whole(d)]):
            for axis in range(d.n):
                a1, a2 = split_box(d, box, axis)
                s1 = exact_total(trapezoid_weights(d, a1) * g)
                s2 = exact_total(trapezoid_weights(d, a2) * g)
                s = exact_total(trapezoid_weights(d, box) * g)
                resid = abs(float(s1 + s2 - s))
                count += 1
                if resid > worst or witness is None:
                    worst = max(worst, resid)
                    witness = {"u": name, "box": box.label(), "axis": axis, "F_A1": float(s1),
                               "F_A2": float(s2), "F_union": float(s)}
    return CheckReport("additivity", worst == 0.0, worst, 0.0, count, witness)


def check_locality(spec, corpus, boxes, seed=0):
    """``u = v`` on ``A`` and its one-node halo implies ``F(u, A) == F(v, A)``."""
    rng = np.random.default_rng(seed)
    worst, witness, count = 0.0, None, 0
    for name, u in corpus:
        d = u.domain
        for box in boxes:
            outside = ~dilate(d, box, layers=1)
            if not np.any(outside):
                continue
            v = GridFunction(d, u.values + outside * rng.standard_normal(d.shape))
            fu, fv = eval_functional(spec, u, box), eval_functional(spec, v, box)
            count += 1
            if abs(fu - fv) > worst or witness is None:
                worst = max(worst, abs(fu - fv))
                witness = {"u": name, "box": box.label(), "F_u": fu, "F_v": fv}
    return CheckReport("locality", worst == 0.0, worst, 0.0, count, witness)


def check_translation(spec, corpus, shifts=(3.0, -1.25, 0.5), tol=1e-12, boxes=None):
    """``F(u + k, A) == F(u, A)`` for u-free Lagrangians.

    Finite differences of ``u + k`` are not bitwise equal to those of ``u``
    in floating point unless the values are dyadic, so the residual is
    relative and compared against ``tol``.
    """
    if spec.lagrangian.uses_u:
        raise InputError("translation invariance only applies to Lagrangians that ignore u")
    worst, witness, count = 0.0, None, 0
    for name, u in corpus:
        for box in (boxes or [whole(u.domain)]):
            base = eval_functional(spec, u, box)
            for k in shifts:
                shifted = eval_functional(spec, u + k, box)
                resid = abs(shifted - base) / (1.0 + abs(base))
                count += 1
                if resid > worst or witness is None:
                    worst = max(worst, resid)
                    witness = {"u": name, "box": box.label(), "k": k, "F_u": base, "F_u_plus_k": shifted}
    return CheckReport("translation", worst <= tol, worst, tol, count, witness)


def check_measure_locality_translation(spec, corpus, tol=1e-12, boxes=None, seed=0):
    """Finite additivity, locality and (for u-free Lagrangians) translation invariance."""
    d = corpus[0][1].domain
    boxes = boxes or random_boxes(d, 4, seed)
    parts = {
        "additivity": check_additivity(spec, corpus, [whole(d)] + list(boxes)),
        "locality": check_locality(spec, corpus, boxes, seed),
    }
    if not spec.lagrangian.uses_u:
        parts["translation"] = check_translation(spec, corpus, tol=tol, boxes=[whole(d)] + list(boxes))
    return combine("measure_locality_translation", parts, tol, sum(p.samples for p in parts.values()), seed)


def check_bounds(spec: FunctionalSpec, cert: GrowthCertificate, corpus, tol=1e-9, boxes=None):
    """Integrated growth bounds.

    ``F(u, A) <= int_A a + b|u|^p + c|Xu|^p`` and ``d int_A |Xu|^p <= F(u, A)``.
    """
    uppers, lowers = [], []
    for name, u in corpus:
        d = u.domain
        xu = x_gradient(u, spec.field).values
        g = np.linalg.norm(xu, axis=-1) ** cert.p
        upper_density = cert.a + cert.b * np.abs(u.values) ** cert.p + cert.c * g
        for box in (boxes or [whole(d)]):
            w = trapezoid_weights(d, box)
            f = eval_functional(spec, u, box)
            up = math.fsum((w * upper_density).ravel())
            lo = cert.d * math.fsum((w * g).ravel())
            uppers.append(((f - up) / (1.0 + abs(up)), {"u": name, "box": box.label(), "F": f, "bound": up}))
            lowers.append(((lo - f) / (1.0 + abs(f)), {"u": name, "box": box.label(), "F": f, "bound": lo}))
    parts = {}
    for key, items in (("upper", uppers), ("lower", lowers)):
        excess, wit = max(items, key=lambda t: t[0])
        parts[key] = CheckReport(f"bound_{key}", excess <= tol, max(excess, 0.0), tol, len(items), wit)
    return combine("bounds", parts, tol, len(uppers))


def check_monotonicity(spec, corpus, pairs, tol=1e-12):
    """``A subset of B`` implies ``F(u, A) <= F(u, B)`` for non-negative integrands."""
    worst, witness, count = 0.0, None, 0
    for name, u in corpus:
        for small, big in pairs:
            fa, fb = eval_functional(spec, u, small), eval_functional(spec, u, big)
            excess = (fa - fb) / (1.0 + abs(fb))
            count += 1
            if excess > worst or witness is None:
                worst = max(worst, excess)
                witness = {"u": name, "A": small.label(), "B": big.label(), "F_A": fa, "F_B": fb}
    return CheckReport("monotonicity", worst <= tol, worst, tol, count, witness)
