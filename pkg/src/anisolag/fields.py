"""Families of Lipschitz vector fields, stored as coefficient matrices.

A family ``X = (X_1, ..., X_m)`` on a box in R^n is represented by the map
``x -> C(x)``, the ``m x n`` matrix whose ``j``-th row holds the components
of ``X_j``. Evaluators are vectorized: they take points of shape ``(k, n)``
and return matrices of shape ``(k, m, n)``.

Catalog forms (documented normalizations):

* ``euclidean(n)``: ``C = I_n``.
* ``grushin``: ``C(x) = [[1, 0], [0, x1]]`` on (-1, 1)^2.
* ``heisenberg``: ``C(x) = [[1, 0, -x2/2], [0, 1, x1/2]]`` on (-1, 1)^3.
* ``cc_example``: ``C(x) = [[1, 0], [0, max(x1, 0)]]`` on (-1, 1)^2.
* ``seq_example(h)``: ``C = [[1, 0], [0, 1/h]]``, with limit
  ``seq_example_limit``: ``C = [[1, 0], [0, 0]]``; both on (-1, 1)^2.
* ``degenerate_pair``: ``C = [[1, 0], [1, 0]]`` on (0, 1)^2.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import dsl
from .errors import DimensionError, DomainError, InputError, LookupFailure

# Points on the closed box are accepted: grid nodes sit on the boundary and
# every catalog coefficient extends continuously there.
BOUNDARY_SLACK = 1e-12


@dataclass(frozen=True)
class CoefficientField:
    name: str
    n: int
    m: int
    lo: tuple
    hi: tuple
    evaluator: Callable = field(repr=False, compare=False)
    lipschitz_hint: float | None = None
    spec: dict | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != self.n or len(hi) != self.n:
            raise DimensionError(f"field {self.name}: domain corners must have {self.n} coordinates")
        if not all(a < b for a, b in zip(lo, hi)):
            raise InputError(f"field {self.name}: need lo < hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def contains(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        scale = BOUNDARY_SLACK * np.maximum(1.0, hi - lo)
        return np.all((pts >= lo - scale) & (pts <= hi + scale), axis=-1)

    def matrices(self, points):
        """Coefficient matrices at a batch of points, shape ``(k, m, n)``."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self.n:
            raise DimensionError(f"field {self.name}: points must have shape (k, {self.n}), got {pts.shape}")
        inside = self.contains(pts)
        if not np.all(inside):
            bad = pts[np.argmin(inside)]
            raise DomainError(f"point {bad.tolist()} is outside the domain of {self.name}")
        out = np.asarray(self.evaluator(pts), dtype=float)
        if out.shape != (len(pts), self.m, self.n):
            raise DimensionError(f"field {self.name}: evaluator returned shape {out.shape}")
        return out

    def sample_points(self, count, rng):
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        return lo + (hi - lo) * rng.random((count, self.n))


def evaluate(field_: CoefficientField, x):
    """``C(x)`` at a single point, as an ``m x n`` matrix."""
    x = np.asarray(x, dtype=float)
    if x.shape != (field_.n,):
        raise DimensionError(f"expected a point in R^{field_.n}, got shape {x.shape}")
    c = field_.matrices(x[None, :])[0]
    if not np.all(np.isfinite(c)):
        raise InputError(f"field {field_.name} is not finite at {x.tolist()}")
    return c


@dataclass(frozen=True)
class FieldSequence:
    generator: Callable = field(repr=False)
    limit: CoefficientField = None
    name: str = "sequence"

    def __getitem__(self, h):
        member = self.generator(h)
        lim = self.limit
        if (member.n, member.m, member.lo, member.hi) != (lim.n, lim.m, lim.lo, lim.hi):
            raise DimensionError(f"{self.name}[{h}] does not share n, m and domain with its limit")
        return member


# Catalog --------------------------------------------------------------------

def _constant(matrix, k):
    return np.broadcast_to(matrix, (k,) + matrix.shape).copy()


def _box(n, lo, hi, domain):
    if domain is None:
        return (lo,) * n, (hi,) * n
    return tuple(domain[0]), tuple(domain[1])


def euclidean(n=2, domain=None):
    n = int(n)
    if n < 1:
        raise InputError("euclidean needs n >= 1")
    lo, hi = _box(n, -1.0, 1.0, domain)
    eye = np.eye(n)
    return CoefficientField(f"euclidean:{n}", n, n, lo, hi, lambda p: _constant(eye, len(p)), 0.0,
                            {"name": "euclidean", "params": {"n": n}})


def grushin(domain=None):
    """X1 = d/dx1, X2 = x1 d/dx2 on (-1, 1)^2; rank drops to 1 on x1 = 0."""
    lo, hi = _box(2, -1.0, 1.0, domain)

    def ev(p):
        out = np.zeros((len(p), 2, 2))
        out[:, 0, 0] = 1.0
        out[:, 1, 1] = p[:, 0]
        return out

    return CoefficientField("grushin", 2, 2, lo, hi, ev, 1.0, {"name": "grushin"})


def heisenberg(domain=None):
    """X1 = d/dx1 - (x2/2) d/dx3, X2 = d/dx2 + (x1/2) d/dx3 on (-1, 1)^3."""
    lo, hi = _box(3, -1.0, 1.0, domain)

    def ev(p):
        out = np.zeros((len(p), 2, 3))
        out[:, 0, 0] = 1.0
        out[:, 0, 2] = -p[:, 1] / 2
        out[:, 1, 1] = 1.0
        out[:, 1, 2] = p[:, 0] / 2
        return out

    return CoefficientField("heisenberg", 3, 2, lo, hi, ev, 0.5, {"name": "heisenberg"})


def cc_example(domain=None):
    lo, hi = _box(2, -1.0, 1.0, domain)

    def ev(p):
        out = np.zeros((len(p), 2, 2))
        out[:, 0, 0] = 1.0
        # right limit at x1 = 0: x1 >= 0 takes the x1 branch
        out[:, 1, 1] = np.where(p[:, 0] >= 0.0, p[:, 0], 0.0)
        return out

    return CoefficientField("cc_example", 2, 2, lo, hi, ev, 1.0, {"name": "cc_example"})


def seq_example(h=1, domain=None):
    h = float(h)
    if not h > 0:
        raise InputError("seq_example needs h > 0")
    lo, hi = _box(2, -1.0, 1.0, domain)
    mat = np.array([[1.0, 0.0], [0.0, 1.0 / h]])
    params = {"h": int(h) if h.is_integer() else h}
    spec = {"name": "seq_example", "params": params}
    if domain is not None:
        spec["domain"] = {"lo": list(lo), "hi": list(hi)}
    return CoefficientField(f"seq_example:{params['h']}", 2, 2, lo, hi, lambda p: _constant(mat, len(p)), 0.0, spec)


def seq_example_limit(domain=None):
    lo, hi = _box(2, -1.0, 1.0, domain)
    mat = np.array([[1.0, 0.0], [0.0, 0.0]])
    spec = {"name": "seq_example_limit"}
    if domain is not None:
        spec["domain"] = {"lo": list(lo), "hi": list(hi)}
    return CoefficientField("seq_example_limit", 2, 2, lo, hi, lambda p: _constant(mat, len(p)), 0.0, spec)


def seq_example_sequence(domain=None):
    return FieldSequence(lambda h: seq_example(h, domain), seq_example_limit(domain), "seq_example")


def degenerate_pair(domain=None):
    lo, hi = _box(2, 0.0, 1.0, domain)
    mat = np.array([[1.0, 0.0], [1.0, 0.0]])
    return CoefficientField("degenerate_pair", 2, 2, lo, hi, lambda p: _constant(mat, len(p)), 0.0,
                            {"name": "degenerate_pair"})


CATALOG = {
    "euclidean": euclidean,
    "grushin": grushin,
    "heisenberg": heisenberg,
    "cc_example": cc_example,
    "seq_example": seq_example,
    "seq_example_limit": seq_example_limit,
    "degenerate_pair": degenerate_pair,
}

SEQUENCES = {"seq_example": seq_example_sequence}


def catalog():
    """Names of the catalog constructors, in a stable order."""
    return list(CATALOG)


def get_field(name, **params):
    """Build a catalog field by name; ``"euclidean:3"`` style shorthand works."""
    if ":" in name:
        name, arg = name.split(":", 1)
        key = {"euclidean": "n", "seq_example": "h"}.get(name)
        if key is None:
            raise LookupFailure(f"field {name!r} takes no shorthand parameter")
        params[key] = float(arg) if "." in arg else int(arg)
    try:
        ctor = CATALOG[name]
    except KeyError:
        raise LookupFailure(f"unknown field {name!r}; known: {', '.join(CATALOG)}") from None
    try:
        built = ctor(**params)
    except TypeError as exc:
        raise InputError(f"bad parameters for field {name!r}: {exc}") from None
    if params.get("domain") is not None and "domain" not in built.spec:
        spec = dict(built.spec, domain={"lo": list(built.lo), "hi": list(built.hi)})
        built = replace(built, spec=spec)
    return built


def get_sequence(name, domain=None):
    try:
        return SEQUENCES[name](domain)
    except KeyError:
        raise LookupFailure(f"unknown field sequence {name!r}; known: {', '.join(SEQUENCES)}") from None


def custom_field(n, m, lo, hi, entries, name="custom"):
    """Field whose matrix entries are DSL expressions in ``x1..xn``."""
    if len(entries) != m or any(len(row) != n for row in entries):
        raise DimensionError(f"custom field needs {m} rows of {n} expressions")
    exprs = []
    for row in entries:
        compiled = []
        for src in row:
            e = dsl.Expression(str(src))
            if dsl.uses(e.tree, "u") or dsl.uses(e.tree, "z"):
                raise InputError(f"field entry {src!r} may only use x1..x{n}")
            if dsl.max_index(e.tree, "x") > n:
                raise DimensionError(f"field entry {src!r} reads beyond x{n}")
            compiled.append(e)
        exprs.append(compiled)

    def ev(p):
        out = np.empty((len(p), m, n))
        for j, row in enumerate(exprs):
            for i, e in enumerate(row):
                out[:, j, i] = e(x=p)
        return out

    spec = {"custom": {"n": n, "m": m, "domain": {"lo": list(lo), "hi": list(hi)},
                       "entries": [[str(s) for s in row] for row in entries]}}
    return CoefficientField(name, n, m, lo, hi, ev, None, spec)


def field_from_json(obj):
    """Build a field from its JSON form (or a bare catalog name string)."""
    if isinstance(obj, str):
        return get_field(obj)
    if not isinstance(obj, dict):
        raise InputError("field spec must be a name or an object")
    if "custom" in obj:
        c = obj["custom"]
        try:
            return custom_field(int(c["n"]), int(c["m"]), c["domain"]["lo"], c["domain"]["hi"], c["entries"],
                                c.get("name", "custom"))
        except KeyError as exc:
            raise InputError(f"custom field spec is missing {exc}") from None
    if "name" not in obj:
        raise InputError("field spec needs 'name' or 'custom'")
    params = dict(obj.get("params", {}))
    if "domain" in obj:
        params["domain"] = (obj["domain"]["lo"], obj["domain"]["hi"])
    return get_field(obj["name"], **params)


def field_to_json(field_: CoefficientField):
    if field_.spec is None:
        raise InputError(f"field {field_.name} was built programmatically and has no JSON form")
    return field_.spec


# Sampled diagnostics ---------------------------------------------------------

def estimate_lipschitz(field_: CoefficientField, samples=200, seed=0):
    """Largest entrywise difference quotient over all pairs of sampled points.

    ``|c_ji(x) - c_ji(y)| / |x - y|`` maximized over entries and over every
    pair of ``samples`` uniformly drawn points. Deterministic given ``seed``.
    """
    if samples < 2:
        raise InputError("estimate_lipschitz needs at least two samples")
    rng = np.random.default_rng(seed)
    pts = field_.sample_points(samples, rng)
    mats = field_.matrices(pts).reshape(samples, -1)
    best = 0.0
    for i in range(samples - 1):
        dx = np.linalg.norm(pts[i + 1:] - pts[i], axis=1)
        dc = np.max(np.abs(mats[i + 1:] - mats[i]), axis=1)
        ok = dx > 0
        if np.any(ok):
            best = max(best, float(np.max(dc[ok] / dx[ok])))
    return best


def rank_profile(field_: CoefficientField, points, rank_tol=None):
    """Numerical rank of ``C(x)`` at each point."""
    from .linalg import default_rank_tol

    mats = field_.matrices(points)
    s = np.linalg.svd(mats, compute_uv=False)
    tol = default_rank_tol(mats.shape) if rank_tol is None else rank_tol
    return np.sum((s >= tol * s[:, :1]) & (s[:, :1] > 0), axis=1)
