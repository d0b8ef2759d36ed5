"""Small dense matrix kernels: SVD, two pseudo-inverse routes, subspaces.

Matrices are plain ``numpy.ndarray`` objects of shape ``(rows, cols)``.
Every routine here is pure: inputs are never modified and results are fresh
arrays.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConsistencyError, DimensionError, InputError, NonConvergenceError

MAX_DIM = 16
DEFAULT_STOP_TOL = 1e-9
DEFAULT_SCHEDULE = tuple(4.0**k for k in range(1, 41))
RICHARDSON_DEPTH = 6
SUBSPACE_ANGLE_TOL = 1e-8
PROJECTOR_TOL = 1e-10


def as_matrix(a, name="matrix"):
    """Validate ``a`` as a finite 2-D float matrix no larger than 16x16."""
    arr = np.array(a, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if max(arr.shape) > MAX_DIM:
        raise DimensionError(f"{name} is {arr.shape[0]}x{arr.shape[1]}; at most {MAX_DIM}x{MAX_DIM} supported")
    if not np.all(np.isfinite(arr)):
        bad = tuple(int(i) for i in np.argwhere(~np.isfinite(arr))[0])
        raise InputError(f"{name} has a non-finite entry at {bad}")
    return arr


def default_rank_tol(shape):
    return 1e-10 * max(shape[-2], shape[-1])


def matrix_to_json(a):
    a = np.asarray(a, dtype=float)
    return {"rows": int(a.shape[0]), "cols": int(a.shape[1]), "entries": [float(v) for v in a.ravel()]}


def matrix_from_json(obj):
    try:
        rows, cols, entries = int(obj["rows"]), int(obj["cols"]), obj["entries"]
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"matrix JSON needs rows, cols and entries: {exc}") from None
    if rows < 1 or cols < 1 or len(entries) != rows * cols:
        raise DimensionError(f"matrix JSON: {len(entries)} entries for a {rows}x{cols} matrix")
    return as_matrix(np.asarray(entries, dtype=float).reshape(rows, cols))


# --------------------------------------------------------------------------
# SVD and the pseudo-inverse
# --------------------------------------------------------------------------

def svd(a):
    """Full SVD ``a = U @ diag(s) @ V.T`` with ``s`` non-increasing.

    Returns ``(U, s, V)`` where ``U`` is ``m x m``, ``V`` is ``n x n`` and ``s``
    has ``min(m, n)`` entries.
    """
    a = as_matrix(a)
    u, s, vt = np.linalg.svd(a, full_matrices=True)
    return u, s, vt.T


def numerical_rank(s, shape, rank_tol=None):
    """Count singular values at or above ``rank_tol * sigma_max``."""
    if rank_tol is None:
        rank_tol = default_rank_tol(shape)
    if len(s) == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s >= rank_tol * s[0]))


def pinv_svd(a, rank_tol=None):
    """Moore-Penrose pseudo-inverse from the SVD, truncated at ``rank_tol``.

    Singular values below ``rank_tol * sigma_max`` are treated as zero. The
    default ``rank_tol`` is ``1e-10 * max(m, n)``.

    ``a`` may also be a stack of matrices with shape ``(..., m, n)``; the
    result then has shape ``(..., n, m)`` and each slice is treated on its
    own. The stacked form skips the 16x16 size guard.
    """
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 2:
        arr = as_matrix(arr)
    elif arr.ndim < 2:
        raise DimensionError(f"expected a matrix or a stack of matrices, got shape {arr.shape}")
    elif not np.all(np.isfinite(arr)):
        raise InputError("stack of matrices has non-finite entries")
    if rank_tol is None:
        rank_tol = default_rank_tol(arr.shape)
    if not rank_tol > 0:
        raise InputError("rank_tol must be positive")
    u, s, vt = np.linalg.svd(arr, full_matrices=False)
    smax = s[..., :1]
    keep = (s >= rank_tol * smax) & (smax > 0)
    with np.errstate(over="ignore", divide="ignore"):
        inv = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    if not np.all(np.isfinite(inv)):
        raise InputError("pseudo-inverse overflows: a kept singular value is too small to invert")
    return np.swapaxes(vt, -1, -2) @ (inv[..., :, None] * np.swapaxes(u, -1, -2))


def _regularized_inverse(a, eps):
    # (A^T A + eps I)^{-1} A^T, solved as least squares on [A; sqrt(eps) I]
    # so that the conditioning is sqrt of the normal-equation one.
    m, n = a.shape
    stacked = np.vstack([a, np.sqrt(eps) * np.eye(n)])
    q, r = np.linalg.qr(stacked)
    return np.linalg.solve(r, q[:m].T)


def pinv_limit(a, h_schedule=DEFAULT_SCHEDULE, stop_tol=DEFAULT_STOP_TOL, depth=RICHARDSON_DEPTH):
    """Pseudo-inverse as the limit of ``(A^T A + I/h)^{-1} A^T`` for ``h -> inf``.

    The regularized inverses along ``h_schedule`` are fed into a Richardson
    table in ``1/h`` (the family is analytic in ``1/h`` near zero), and the
    diagonal of that table is the iterate sequence. Iteration stops as soon
    as two successive iterates are within ``stop_tol`` in Frobenius norm.

    Extrapolation assumes a geometric schedule with ratio 4 on consecutive
    entries when ``depth > 1``; pass ``depth=1`` for the plain sequence.

    Raises
    ------
    NonConvergenceError
        If the schedule is exhausted first; carries the last two iterates.
    """
    a = as_matrix(a)
    h = np.asarray(h_schedule, dtype=float)
    if h.ndim != 1 or len(h) < 2 or np.any(h <= 0) or np.any(np.diff(h) <= 0):
        raise InputError("h_schedule must be strictly increasing, positive and have >= 2 entries")
    if not stop_tol > 0:
        raise InputError("stop_tol must be positive")
    if depth > 1 and not np.allclose(h[1:] / h[:-1], 4.0, rtol=1e-12):
        raise InputError("Richardson extrapolation needs a schedule with ratio 4; use depth=1 otherwise")

    prev_row = []
    prev = None
    for hk in h:
        row = [_regularized_inverse(a, 1.0 / hk)]
        for j in range(1, min(depth, len(prev_row) + 1)):
            row.append(row[j - 1] + (row[j - 1] - prev_row[j - 1]) / (4.0**j - 1.0))
        current = row[-1]
        if prev is not None and np.linalg.norm(current - prev) < stop_tol:
            return current
        prev, prev_row = current, row
    raise NonConvergenceError(
        f"pinv_limit: schedule exhausted before successive iterates agreed to {stop_tol:g}",
        last_iterates=(prev_row[-2] if len(prev_row) > 1 else None, prev),
    )


@dataclass(frozen=True)
class PenroseReport:
    passed: tuple
    residuals: tuple
    tol: float

    NAMES = ("PAP=P", "APA=A", "PA symmetric", "AP symmetric")

    @property
    def ok(self):
        return all(self.passed)

    def to_dict(self):
        return {
            "pass": self.ok,
            "tol": self.tol,
            "identities": {
                name: {"pass": bool(p), "residual": float(r)}
                for name, p, r in zip(self.NAMES, self.passed, self.residuals)
            },
        }


def verify_penrose(a, p, tol=1e-10):
    """Check the four Penrose identities for the pair ``(a, p)``.

    Residuals are Frobenius norms of the differences; an identity passes when
    its residual is at most ``tol`` times the Frobenius norm of the matrix it
    should reproduce (or ``tol`` itself when that matrix is zero).
    """
    a = as_matrix(a, "a")
    p = as_matrix(p, "p")
    if p.shape != (a.shape[1], a.shape[0]):
        raise DimensionError(f"p must be {a.shape[1]}x{a.shape[0]} for a {a.shape[0]}x{a.shape[1]} matrix, got {p.shape}")
    pa = p @ a
    ap = a @ p
    pairs = ((pa @ p, p), (ap @ a, a), (pa, pa.T), (ap, ap.T))
    residuals = []
    passed = []
    for lhs, rhs in pairs:
        res = float(np.linalg.norm(lhs - rhs))
        scale = float(np.linalg.norm(rhs)) or 1.0
        residuals.append(res)
        passed.append(res <= tol * scale)
    return PenroseReport(tuple(passed), tuple(residuals), tol)


# --------------------------------------------------------------------------
# Subspaces
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SubspaceBasis:
    """Orthonormal basis stored as the rows of ``vectors``."""

    ambient_dim: int
    vectors: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=float).reshape(-1, self.ambient_dim)
        object.__setattr__(self, "vectors", v)

    @property
    def dim(self):
        return self.vectors.shape[0]

    def projector(self):
        return self.vectors.T @ self.vectors

    def contains(self, x, tol=1e-10):
        x = np.asarray(x, dtype=float)
        return float(np.linalg.norm(x - self.projector() @ x)) <= tol * max(1.0, float(np.linalg.norm(x)))

    def is_orthonormal(self, tol=1e-12):
        gram = self.vectors @ self.vectors.T
        return bool(np.all(np.abs(gram - np.eye(self.dim)) <= tol))

    def to_json(self):
        return {"ambient_dim": self.ambient_dim, "vectors": self.vectors.tolist()}


def subspace_angle(a: SubspaceBasis, b: SubspaceBasis):
    """Largest principal angle between two subspaces (pi/2 if dims differ)."""
    if a.ambient_dim != b.ambient_dim:
        raise DimensionError("subspaces live in different ambient spaces")
    if a.dim != b.dim:
        return float(np.pi / 2)
    if a.dim == 0:
        return 0.0
    resid = a.vectors.T - b.projector() @ a.vectors.T
    sin = min(1.0, float(np.linalg.norm(resid, 2)))
    return float(np.arcsin(sin))


def _split_basis(vectors_as_columns, rank):
    cols = vectors_as_columns
    dim = cols.shape[0]
    return SubspaceBasis(dim, cols[:, :rank].T), SubspaceBasis(dim, cols[:, rank:].T)


@dataclass(frozen=True)
class PointAlgebra:
    """Per-point linear algebra of a coefficient matrix ``C``.

    ``n_basis`` spans ker C, ``v_basis`` spans the row space (image of C^T),
    ``range_basis`` spans im C and ``range_perp_basis`` its orthogonal
    complement. ``projector_v`` is ``C_P @ C``.
    """

    c: np.ndarray
    c_pinv: np.ndarray
    n_basis: SubspaceBasis
    v_basis: SubspaceBasis
    range_basis: SubspaceBasis
    range_perp_basis: SubspaceBasis
    projector_v: np.ndarray
    rank: int
    angles: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.c.shape[1]

    @property
    def m(self):
        return self.c.shape[0]

    def to_json(self):
        return {
            "c": matrix_to_json(self.c),
            "c_pinv": matrix_to_json(self.c_pinv),
            "rank": self.rank,
            "kernel": self.n_basis.to_json(),
            "row_space": self.v_basis.to_json(),
            "range": self.range_basis.to_json(),
            "range_perp": self.range_perp_basis.to_json(),
            "projector": matrix_to_json(self.projector_v),
            "angles": dict(self.angles),
        }


def point_algebra(a, rank_tol=None, angle_tol=SUBSPACE_ANGLE_TOL, n_probes=4, seed=0):
    """Build the :class:`PointAlgebra` of ``a`` and assert its identities.

    The bases come from the SVD of ``a``. The pseudo-inverse is then
    analysed on its own (a second SVD, of ``C_P``) and three identities are
    checked:

    * im(C_P) equals the row space of C,
    * ``C_P @ C`` is the projector onto the row space along ker C,
    * ker(C_P) equals im(C)^perp.

    Raises :class:`ConsistencyError` when any of them fails.
    """
    a = as_matrix(a)
    if rank_tol is None:
        rank_tol = default_rank_tol(a.shape)
    if not rank_tol > 0:
        raise InputError("rank_tol must be positive")
    u, s, v = svd(a)
    r = numerical_rank(s, a.shape, rank_tol)
    v_basis, n_basis = _split_basis(v, r)
    range_basis, range_perp = _split_basis(u, r)
    p = pinv_svd(a, rank_tol)
    proj = p @ a

    # Independent view of the pseudo-inverse's own range and kernel.
    pu, ps, pv = svd(p)
    pr = numerical_rank(ps, p.shape, rank_tol)
    im_p, _ = _split_basis(pu, pr)
    _, ker_p = _split_basis(pv, pr)

    # Forward error of a backward-stable SVD grows like eps * cond(C) on the
    # kept part of the spectrum; both tolerances absorb that term.
    slack = 16 * np.finfo(float).eps * (s[0] / s[r - 1] if r else 1.0)
    angles = {
        "im(C_P) vs row space": subspace_angle(im_p, v_basis),
        "ker(C_P) vs im(C)^perp": subspace_angle(ker_p, range_perp),
    }
    for name, ang in angles.items():
        if ang > angle_tol + slack:
            raise ConsistencyError(f"point_algebra: {name} differ by angle {ang:.3e}")

    ortho = v_basis.projector()
    proj_err = float(np.linalg.norm(proj - ortho))
    idem_err = float(np.linalg.norm(proj @ proj - proj))
    proj_tol = PROJECTOR_TOL * max(1.0, r) + slack
    if proj_err > proj_tol or idem_err > proj_tol:
        raise ConsistencyError(f"point_algebra: C_P C is not the row-space projector (err {proj_err:.3e}, idempotence {idem_err:.3e})")
    probes = np.random.default_rng(seed).standard_normal((n_probes, a.shape[1]))
    for xi in probes:
        xv = proj @ xi
        scale = 1e-10 + slack
        if not (v_basis.contains(xv, scale) and n_basis.contains(xi - xv, scale)):
            raise ConsistencyError("point_algebra: projector does not split a probe into ker C + row space")
    angles["projector"] = proj_err
    return PointAlgebra(a, p, n_basis, v_basis, range_basis, range_perp, proj, r, angles)


def split(pa: PointAlgebra, xi):
    """Split ``xi`` into its kernel and row-space components.

    Returns ``(xi_N, xi_V)`` with ``xi_N + xi_V == xi``.
    """
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (pa.n,):
        raise DimensionError(f"xi must have length {pa.n}")
    if not np.all(np.isfinite(xi)):
        raise InputError("xi has non-finite entries")
    xi_v = pa.projector_v @ xi
    return xi - xi_v, xi_v
