"""Lagrangians: catalog entries, parsed expressions and the pseudo-inverse transform.

A Lagrangian is a vectorized map ``(x, u, z) -> value`` where ``x`` has shape
``(k, n)``, ``u`` shape ``(k,)`` and ``z`` shape ``(k, d)``. Euclidean
Lagrangians take the full gradient (``d = n``); anisotropic ones take the
``X``-gradient (``d = m``). Both use the DSL variables ``z1, z2, ...`` for
the gradient slot.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import dsl
from .errors import DimensionError, InputError, LookupFailure, UnknownIdentifierError
from .fields import CoefficientField, field_from_json, field_to_json
from .linalg import pinv_svd

EUCLIDEAN = "euclidean"
ANISOTROPIC = "anisotropic"
KINDS = (EUCLIDEAN, ANISOTROPIC)


@dataclass(frozen=True)
class GrowthCertificate:
    """Constants of the two-sided growth bound.

    ``f <= a + b|u|^p + c|C xi|^p`` and ``d|C xi|^p <= f``. ``a`` is a
    constant here rather than a locally integrable function.
    """

    a: float = 0.0
    b: float = 0.0
    c: float = 0.0
    d: float = 0.0
    p: float = 2.0

    def __post_init__(self):
        vals = (self.a, self.b, self.c, self.d, self.p)
        if not all(np.isfinite(v) for v in vals):
            raise InputError("growth certificate constants must be finite")
        if min(self.a, self.b, self.c, self.d) < 0:
            raise InputError("growth certificate constants a, b, c, d must be non-negative")
        if self.p < 1:
            raise InputError("growth exponent p must be >= 1")

    def to_json(self):
        return {"a": self.a, "b": self.b, "c": self.c, "d": self.d, "p": self.p}

    @classmethod
    def from_json(cls, obj):
        try:
            return cls(**{k: float(v) for k, v in obj.items()})
        except TypeError as exc:
            raise InputError(f"bad growth certificate: {exc}") from None


@dataclass(frozen=True)
class Lagrangian:
    kind: str
    uses_u: bool
    body: Callable = field(repr=False, compare=False)
    dim: int | None = None
    name: str = "lagrangian"
    spec: dict | None = field(default=None, repr=False, compare=False)
    certificate: GrowthCertificate | None = None
    tree: object = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"kind must be one of {KINDS}, got {self.kind!r}")

    @property
    def arity(self):
        return "with-u" if self.uses_u else "without-u"

    def __call__(self, x, u, z):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        z = np.atleast_2d(np.asarray(z, dtype=float))
        u = np.broadcast_to(np.asarray(u, dtype=float), (len(x),))
        if self.dim is not None and z.shape[-1] != self.dim:
            raise DimensionError(f"{self.name}: gradient slot has {z.shape[-1]} components, expected {self.dim}")
        if len(z) != len(x):
            raise DimensionError(f"{self.name}: {len(x)} points but {len(z)} gradient vectors")
        with np.errstate(all="ignore"):
            out = self.body(x, u, z)
        return np.broadcast_to(np.asarray(out, dtype=float), (len(x),))

    def at(self, x, u, z):
        """Scalar value at a single ``(x, u, z)``."""
        return float(self(np.asarray(x, dtype=float)[None, :], np.asarray([u], dtype=float),
                          np.asarray(z, dtype=float)[None, :])[0])

    def to_json(self):
        if self.spec is None:
            raise InputError(f"Lagrangian {self.name} has no JSON form")
        return self.spec


# Parsing ----------------------------------------------------------------------

def parse_lagrangian(source, kind=None, arity=None, dim=None):
    """Parse DSL text into a :class:`Lagrangian`.

    ``kind`` defaults to anisotropic. ``arity`` (``"with-u"`` or
    ``"without-u"``) defaults to whatever the expression reads. When ``dim``
    is given, gradient indices beyond it are rejected.
    """
    if not isinstance(source, str) or not source.strip():
        raise InputError("Lagrangian source must be non-empty")
    kind = ANISOTROPIC if kind is None else kind
    if kind not in KINDS:
        raise InputError(f"kind must be one of {KINDS}, got {kind!r}")
    expr = dsl.Expression(source)
    reads_u = dsl.uses(expr.tree, "u")
    if arity not in (None, "with-u", "without-u"):
        raise InputError(f"arity must be 'with-u' or 'without-u', got {arity!r}")
    if arity == "without-u" and reads_u:
        raise InputError("Lagrangian declared without-u but its source reads u")
    zmax = dsl.max_index(expr.tree, "z")
    if dim is not None and zmax > dim:
        raise UnknownIdentifierError(f"z{zmax} is out of range for a {kind} Lagrangian with {dim} gradient components")
    uses_u = reads_u if arity is None else arity == "with-u"

    def body(x, u, z):
        return expr(x=x, u=u, z=z)

    spec = {"kind": kind, "arity": "with-u" if uses_u else "without-u", "source": source}
    if dim is not None:
        spec["dim"] = dim
    return Lagrangian(kind, uses_u, body, dim, source, spec, tree=expr.tree)


def canonical_source(lag: Lagrangian):
    if lag.tree is None:
        raise InputError(f"{lag.name} is not a parsed expression")
    return dsl.to_source(lag.tree)


# Catalog ---------------------------------------------------------------------

def _norm_c_xi(field_, x, z):
    cx = field_.matrices(x)
    return np.linalg.norm(np.einsum("kmn,kn->km", cx, z), axis=1)


def _need_field(name, field_):
    if field_ is None:
        raise InputError(f"catalog Lagrangian {name!r} depends on C(x) and needs a field")
    return field_


def _p_dirichlet(field_=None, p=2.0):
    field_ = _need_field("p_dirichlet", field_)
    p = float(p)
    return Lagrangian(EUCLIDEAN, False, lambda x, u, z: _norm_c_xi(field_, x, z) ** p, field_.n,
                      f"|C xi|^{p:g}", None, GrowthCertificate(0, 0, 1, 1, p))


def _weighted_dirichlet(field_=None):
    field_ = _need_field("weighted_dirichlet", field_)
    wmax = 1.0 + max(field_.lo[0] ** 2, field_.hi[0] ** 2)
    return Lagrangian(EUCLIDEAN, False, lambda x, u, z: (1.0 + x[:, 0] ** 2) * _norm_c_xi(field_, x, z) ** 2,
                      field_.n, "(1 + x1^2)|C xi|^2", None, GrowthCertificate(0, 0, wmax, 1, 2))


def _dirichlet_plus_u(field_=None):
    field_ = _need_field("dirichlet_plus_u", field_)
    return Lagrangian(EUCLIDEAN, True, lambda x, u, z: _norm_c_xi(field_, x, z) ** 2 + u**2,
                      field_.n, "|C xi|^2 + u^2", None, GrowthCertificate(0, 1, 1, 1, 2))


def _area(field_=None):
    field_ = _need_field("area", field_)
    return Lagrangian(EUCLIDEAN, False, lambda x, u, z: np.sqrt(1.0 + _norm_c_xi(field_, x, z) ** 2),
                      field_.n, "sqrt(1 + |C xi|^2)", None, GrowthCertificate(1, 0, 1, 1, 1))


def _zero(field_=None, kind=EUCLIDEAN):
    dim = None if field_ is None else (field_.n if kind == EUCLIDEAN else field_.m)
    return Lagrangian(kind, False, lambda x, u, z: np.zeros(len(x)), dim, "0", None,
                      GrowthCertificate(0, 0, 0, 0, 1))


def _euclidean_norm_sq(field_=None):
    dim = None if field_ is None else field_.n
    return Lagrangian(EUCLIDEAN, False, lambda x, u, z: np.sum(z**2, axis=1), dim, "|xi|^2")


def _p_norm(field_=None, p=2.0):
    p = float(p)
    dim = None if field_ is None else field_.m
    return Lagrangian(ANISOTROPIC, False, lambda x, u, z: np.linalg.norm(z, axis=1) ** p, dim,
                      f"|eta|^{p:g}", None, GrowthCertificate(0, 0, 1, 1, p))


F1_SOURCE = "2*((z1+z2)/2)^2"
F2_SOURCE = "2*((z1+z2)/2)^2 + exp((z1-z2)^2) - 1"


def _dsl_entry(source, name, cert=None):
    def build(field_=None):
        lag = parse_lagrangian(source, ANISOTROPIC, dim=None if field_ is None else field_.m)
        return Lagrangian(lag.kind, lag.uses_u, lag.body, lag.dim, name, None, cert, lag.tree)

    return build


EUCLIDEAN_CATALOG = {
    "p_dirichlet": _p_dirichlet,
    "weighted_dirichlet": _weighted_dirichlet,
    "dirichlet_plus_u": _dirichlet_plus_u,
    "area": _area,
    "zero": _zero,
    "euclidean_norm_sq": _euclidean_norm_sq,
}

ANISOTROPIC_CATALOG = {
    "p_norm": _p_norm,
    "f1": _dsl_entry(F1_SOURCE, "f1", GrowthCertificate(0, 0, 1, 1, 2)),
    "f2": _dsl_entry(F2_SOURCE, "f2", GrowthCertificate(0, 0, 1, 1, 2)),
    "anisotropic_zero": lambda field_=None: _zero(field_, ANISOTROPIC),
}


def lagrangian_catalog():
    return {EUCLIDEAN: list(EUCLIDEAN_CATALOG), ANISOTROPIC: list(ANISOTROPIC_CATALOG)}


def catalog_lagrangian(name, field_: CoefficientField | None = None, **params):
    """Instantiate a catalog Lagrangian, bound to ``field_`` where needed."""
    table = EUCLIDEAN_CATALOG if name in EUCLIDEAN_CATALOG else ANISOTROPIC_CATALOG
    if name not in table:
        known = ", ".join(list(EUCLIDEAN_CATALOG) + list(ANISOTROPIC_CATALOG))
        raise LookupFailure(f"unknown Lagrangian {name!r}; known: {known}")
    try:
        lag = table[name](field_, **params)
    except TypeError as exc:
        raise InputError(f"bad parameters for Lagrangian {name!r}: {exc}") from None
    spec = {"catalog": name, "params": dict(params)}
    return Lagrangian(lag.kind, lag.uses_u, lag.body, lag.dim, lag.name, spec, lag.certificate, lag.tree)


# The transform ----------------------------------------------------------------

def pinv_field(field_: CoefficientField, x, rank_tol=None):
    """Pointwise pseudo-inverses ``C_P(x)`` for a batch of points, ``(k, n, m)``."""
    return pinv_svd(field_.matrices(x), rank_tol)


def transform(f_e: Lagrangian, field_: CoefficientField, rank_tol=None):
    """Anisotropic Lagrangian ``f(x, u, eta) = f_e(x, u, C_P(x) eta)``.

    The output keeps the arity of ``f_e``; when ``f_e`` ignores ``u`` so does
    the result. No hypothesis on ``f_e`` is checked here.
    """
    if f_e.kind != EUCLIDEAN:
        raise InputError("transform expects a Euclidean Lagrangian")
    if f_e.dim is not None and f_e.dim != field_.n:
        raise DimensionError(f"{f_e.name} has {f_e.dim} gradient components but the field lives in R^{field_.n}")

    def body(x, u, eta):
        xi = np.einsum("knm,km->kn", pinv_field(field_, x, rank_tol), eta)
        return f_e(x, u, xi)

    spec = None
    if f_e.spec is not None and field_.spec is not None:
        spec = {"transform": f_e.spec, "field": field_.spec}
    cert = f_e.certificate
    return Lagrangian(ANISOTROPIC, f_e.uses_u, body, field_.m, f"T[{f_e.name}]", spec, cert)


def lagrangian_from_json(obj, field_: CoefficientField | None = None):
    """Build a Lagrangian from JSON.

    Accepted forms: ``{"source": ..., "kind": ..., "arity": ...}``,
    ``{"catalog": name, "params": {...}}`` and
    ``{"transform": <euclidean spec>, "field": <field spec>}``. A bare
    string is treated as DSL source.
    """
    if isinstance(obj, str):
        return parse_lagrangian(obj)
    if not isinstance(obj, dict):
        raise InputError("Lagrangian spec must be a string or an object")
    cert = GrowthCertificate.from_json(obj["certificate"]) if "certificate" in obj else None
    if "source" in obj:
        kind = obj.get("kind")
        dim = obj.get("dim")
        if dim is None and field_ is not None and kind is not None:
            dim = field_.n if kind == EUCLIDEAN else field_.m
        lag = parse_lagrangian(obj["source"], kind, obj.get("arity"), dim)
    elif "catalog" in obj:
        lag = catalog_lagrangian(obj["catalog"], field_, **obj.get("params", {}))
    elif "transform" in obj:
        tfield = field_from_json(obj["field"]) if "field" in obj else field_
        if tfield is None:
            raise InputError("transform spec needs a field")
        lag = transform(lagrangian_from_json(obj["transform"], tfield), tfield)
    else:
        raise InputError("Lagrangian spec needs 'source', 'catalog' or 'transform'")
    if cert is not None:
        spec = dict(lag.spec or {}, certificate=cert.to_json())
        lag = Lagrangian(lag.kind, lag.uses_u, lag.body, lag.dim, lag.name, spec, cert, lag.tree)
    return lag


def transform_spec(f_e: Lagrangian, field_: CoefficientField):
    return {"transform": f_e.to_json(), "field": field_to_json(field_)}
