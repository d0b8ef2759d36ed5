"""Sampled verification of Lagrangian identities and inequalities.

Every checker draws ``(x, u, gradient)`` triples from a seeded generator,
evaluates both sides of an identity or inequality, and returns a
:class:`CheckReport` with the worst normalized residual and the sample that
produced it. An identity ``a = b`` passes when
``|a - b| <= tol * (1 + |a|)`` at every sample; an inequality ``a <= b``
passes when ``a - b <= tol * (1 + |b|)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .fields import CoefficientField
from .lagrangian import EUCLIDEAN, GrowthCertificate, Lagrangian, pinv_field

DEFAULT_SAMPLES = 10_000
VALUE_SCALE = 2.0  # standard deviation of sampled u and gradient entries


def _clean(v):
    if isinstance(v, np.ndarray):
        return [float(t) for t in v.ravel()]
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


@dataclass
class CheckReport:
    name: str
    passed: bool
    worst: float
    tol: float
    samples: int
    witness: dict | None = None
    seed: int | None = None
    parts: dict = field(default_factory=dict)

    def __bool__(self):
        return bool(self.passed)

    def to_dict(self):
        out = {
            "name": self.name,
            "pass": bool(self.passed),
            "residual": float(self.worst),
            "tol": self.tol,
            "samples": self.samples,
            "seed": self.seed,
            "witness": None if self.witness is None else {k: _clean(v) for k, v in self.witness.items()},
        }
        if self.parts:
            out["parts"] = {k: v.to_dict() for k, v in self.parts.items()}
        return out


def combine(name, parts, tol, samples, seed=None):
    """Report that passes iff every part passes; carries the worst part."""
    worst = max(parts.values(), key=lambda r: (not r.passed, r.worst))
    return CheckReport(name, all(p.passed for p in parts.values()), worst.worst, tol, samples,
                       worst.witness, seed, dict(parts))


def _identity_report(name, lhs, rhs, tol, witness_cols, seed):
    resid = np.abs(lhs - rhs) / (1.0 + np.abs(lhs))
    resid = np.where(np.isfinite(resid), resid, np.inf)
    k = int(np.argmax(resid))
    witness = {key: col[k] for key, col in witness_cols.items()}
    witness.update(lhs=lhs[k], rhs=rhs[k])
    return CheckReport(name, bool(resid[k] <= tol), float(resid[k]), tol, len(lhs), witness, seed)


def _inequality_report(name, small, big, tol, witness_cols, seed):
    excess = (small - big) / (1.0 + np.abs(big))
    excess = np.where(np.isnan(excess), np.inf, excess)
    k = int(np.argmax(excess))
    witness = {key: col[k] for key, col in witness_cols.items()}
    witness.update(lhs=small[k], rhs=big[k])
    return CheckReport(name, bool(excess[k] <= tol), float(max(excess[k], 0.0)), tol, len(small), witness, seed)


def draw(field_: CoefficientField, count, dim, seed=0, scale=VALUE_SCALE):
    """Random ``(x, u, v)`` with ``x`` in the field's box and ``v`` in R^dim."""
    if count < 1:
        raise InputError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    x = field_.sample_points(count, rng)
    u = scale * rng.standard_normal(count)
    v = scale * rng.standard_normal((count, dim))
    return x, u, v


def _projector(field_, x):
    return np.einsum("knm,kmj->knj", pinv_field(field_, x), field_.matrices(x))


def check_kernel_invariance(f_e: Lagrangian, field_, sample_count=DEFAULT_SAMPLES, tol=1e-12, seed=0):
    """``f_e(x, u, xi) == f_e(x, u, Pi_x xi)`` on samples."""
    if f_e.kind != EUCLIDEAN:
        raise InputError("kernel invariance is a property of Euclidean Lagrangians")
    x, u, xi = draw(field_, sample_count, field_.n, seed)
    pxi = np.einsum("knj,kj->kn", _projector(field_, x), xi)
    return _identity_report("kernel_invariance", f_e(x, u, xi), f_e(x, u, pxi), tol,
                            {"x": x, "u": u, "xi": xi, "projected_xi": pxi}, seed)


def check_costonker(f: Lagrangian, field_, sample_count=DEFAULT_SAMPLES, tol=1e-9, seed=0):
    """``f(x, u, eta) == f(x, u, C xi_eta)`` with ``xi_eta = C_P eta``."""
    if f.kind == EUCLIDEAN:
        raise InputError("kernel constancy is a property of anisotropic Lagrangians")
    x, u, eta = draw(field_, sample_count, field_.m, seed)
    xi_eta = np.einsum("knm,km->kn", pinv_field(field_, x), eta)
    on_range = np.einsum("kmn,kn->km", field_.matrices(x), xi_eta)
    return _identity_report("kernel_constancy", f(x, u, eta), f(x, u, on_range), tol,
                            {"x": x, "u": u, "eta": eta, "range_part": on_range}, seed)


def check_representation(f_e: Lagrangian, f: Lagrangian, field_, sample_count=DEFAULT_SAMPLES, tol=1e-9, seed=0):
    """``f_e(x, u, xi) == f(x, u, C(x) xi)`` on samples."""
    x, u, xi = draw(field_, sample_count, field_.n, seed)
    cxi = np.einsum("kmn,kn->km", field_.matrices(x), xi)
    return _identity_report("representation", f_e(x, u, xi), f(x, u, cxi), tol,
                            {"x": x, "u": u, "xi": xi, "c_xi": cxi}, seed)


def check_growth(f: Lagrangian, field_, cert: GrowthCertificate, sample_count=DEFAULT_SAMPLES, tol=1e-9,
                 seed=0, on_range=True):
    """Upper and lower growth bounds for an anisotropic Lagrangian.

    With ``on_range`` the gradient argument is ``eta = C(x) xi`` and the
    bounds read ``f <= a + b|u|^p + c|eta|^p`` and ``d|eta|^p <= f``. Without
    it ``eta`` ranges over all of R^m, which is the stronger, global claim.
    """
    x, u, v = draw(field_, sample_count, field_.n if on_range else field_.m, seed)
    eta = np.einsum("kmn,kn->km", field_.matrices(x), v) if on_range else v
    val = f(x, u, eta)
    g = np.linalg.norm(eta, axis=1) ** cert.p
    cols = {"x": x, "u": u, "eta": eta}
    tag = "on_range" if on_range else "global"
    parts = {
        "upper": _inequality_report(f"upper_{tag}", val, cert.a + cert.b * np.abs(u) ** cert.p + cert.c * g,
                                    tol, cols, seed),
        "lower": _inequality_report(f"lower_{tag}", cert.d * g, val, tol, cols, seed),
    }
    return combine(f"growth_{tag}", parts, tol, sample_count, seed)


def check_euclidean_growth(f_e: Lagrangian, field_, cert, sample_count=DEFAULT_SAMPLES, tol=1e-9, seed=0):
    """Growth hypothesis on ``f_e``, measured through ``|C(x) xi|``."""
    x, u, xi = draw(field_, sample_count, field_.n, seed)
    val = f_e(x, u, xi)
    g = np.linalg.norm(np.einsum("kmn,kn->km", field_.matrices(x), xi), axis=1) ** cert.p
    cols = {"x": x, "u": u, "xi": xi}
    parts = {
        "upper": _inequality_report("hypothesis_upper", val, cert.a + cert.b * np.abs(u) ** cert.p + cert.c * g,
                                    tol, cols, seed),
        "lower": _inequality_report("hypothesis_lower", cert.d * g, val, tol, cols, seed),
    }
    return combine("hypothesis_growth", parts, tol, sample_count, seed)


def check_growth_transfer(f_e, f, field_, cert: GrowthCertificate, sample_count=DEFAULT_SAMPLES, tol=1e-9, seed=0):
    """Bounds on ``f`` over the range of ``C(x)``, after the hypothesis on ``f_e``.

    ``f_e`` may be ``None`` when ``f`` is a user-supplied candidate; then
    only the conclusions are checked.
    """
    parts = {}
    if f_e is not None:
        hyp = check_euclidean_growth(f_e, field_, cert, sample_count, tol, seed)
        parts["hypothesis_upper"] = hyp.parts["upper"]
        parts["hypothesis_lower"] = hyp.parts["lower"]
    concl = check_growth(f, field_, cert, sample_count, tol, seed + 1, on_range=True)
    parts["upper"] = concl.parts["upper"]
    parts["lower"] = concl.parts["lower"]
    return combine("growth_transfer", parts, tol, sample_count, seed)


def check_convexity(f: Lagrangian, field_, sample_count=DEFAULT_SAMPLES, tol=1e-9, mode="gradient", seed=0):
    """Sampled midpoint convexity.

    ``mode="gradient"`` fixes ``(x, u)`` and varies the gradient slot;
    ``mode="joint"`` fixes ``x`` and varies ``(u, gradient)`` together.
    """
    if mode not in ("gradient", "joint"):
        raise InputError("mode must be 'gradient' or 'joint'")
    dim = f.dim or (field_.n if f.kind == EUCLIDEAN else field_.m)
    rng = np.random.default_rng(seed)
    x = field_.sample_points(sample_count, rng)
    ua = VALUE_SCALE * rng.standard_normal(sample_count)
    ub = VALUE_SCALE * rng.standard_normal(sample_count) if mode == "joint" else ua
    za = VALUE_SCALE * rng.standard_normal((sample_count, dim))
    zb = VALUE_SCALE * rng.standard_normal((sample_count, dim))
    mid = f(x, (ua + ub) / 2, (za + zb) / 2)
    avg = (f(x, ua, za) + f(x, ub, zb)) / 2
    return _inequality_report(f"convexity_{mode}", mid, avg, tol,
                              {"x": x, "u_a": ua, "u_b": ub, "z_a": za, "z_b": zb}, seed)


def check_u_independence(f: Lagrangian, field_, sample_count=DEFAULT_SAMPLES, seed=0):
    """Exact agreement of ``f`` at two unrelated ``u`` values."""
    rng = np.random.default_rng(seed)
    dim = f.dim or (field_.n if f.kind == EUCLIDEAN else field_.m)
    x = field_.sample_points(sample_count, rng)
    z = VALUE_SCALE * rng.standard_normal((sample_count, dim))
    u1 = VALUE_SCALE * rng.standard_normal(sample_count)
    u2 = VALUE_SCALE * rng.standard_normal(sample_count)
    a, b = f(x, u1, z), f(x, u2, z)
    diff = np.abs(a - b)
    k = int(np.argmax(diff))
    witness = {"x": x[k], "z": z[k], "u1": u1[k], "u2": u2[k], "lhs": a[k], "rhs": b[k]}
    return CheckReport("u_independence", bool(np.all(a == b)), float(diff[k]), 0.0, sample_count, witness, seed)


def check_continuity(f: Lagrangian, field_, segments=200, coarse=64, fine=1024, tol=1e-12, seed=0):
    """Continuity in ``(u, gradient)`` at fixed ``x`` along random segments.

    For each segment the largest jump between neighbouring samples is
    measured at two resolutions; a continuous integrand must shrink it by at
    least a factor of four when the sampling is refined sixteen-fold.
    """
    rng = np.random.default_rng(seed)
    dim = f.dim or (field_.n if f.kind == EUCLIDEAN else field_.m)
    worst = 0.0
    witness = None
    for _ in range(segments):
        x0 = field_.sample_points(1, rng)[0]
        a = VALUE_SCALE * rng.standard_normal(dim + 1)
        b = VALUE_SCALE * rng.standard_normal(dim + 1)
        jumps = []
        for res in (coarse, fine):
            t = np.linspace(0.0, 1.0, res + 1)[:, None]
            pts = (1 - t) * a + t * b
            vals = f(np.broadcast_to(x0, (res + 1, len(x0))), pts[:, 0], pts[:, 1:])
            jumps.append(float(np.max(np.abs(np.diff(vals)))))
        ratio = (jumps[1] - tol) / (jumps[0] + tol)
        if ratio > worst:
            worst = ratio
            witness = {"x": x0, "start": a, "end": b, "coarse_jump": jumps[0], "fine_jump": jumps[1]}
    return CheckReport("continuity", worst <= 0.25, worst, 0.25, segments, witness, seed)
