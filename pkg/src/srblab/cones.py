"""Cone fields, cone operator norms, invariance and domination checks.

A cone of width ``a`` centered at a subspace ``E`` is the set of vectors
``v = v_E + v_perp`` (orthogonal split) with ``|v_perp| <= a |v_E|``.  Cone
fields are constant in the torus frame.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .models import MapModel
from .torus import as_points


class SingularMatrix(np.linalg.LinAlgError):
    pass


class DepthTooSmall(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class ConeSpec:
    """Cone of width ``a`` around ``span(center_basis)``."""

    center_basis: np.ndarray
    a: float = 0.5

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.center_basis, dtype=float))
        if B.shape[0] < B.shape[1]:
            B = B.T
        if B.shape[1] == 0:
            raise ValueError("cone needs a nonzero center subspace")
        q, r = np.linalg.qr(B)
        # keep the given orientation when the input is already orthonormal
        q = q * np.sign(np.diag(r))
        if self.a <= 0:
            raise ValueError("cone width must be positive")
        q.setflags(write=False)
        object.__setattr__(self, "center_basis", q)

    @property
    def dim(self) -> int:
        return self.center_basis.shape[0]

    @property
    def center_dim(self) -> int:
        return self.center_basis.shape[1]

    @property
    def proj(self) -> np.ndarray:
        B = self.center_basis
        return B @ B.T

    def split(self, v):
        """Return ``(|v_E|, |v_perp|)`` for vectors along the last axis."""
        v = np.asarray(v, dtype=float)
        vE = v @ self.proj
        return np.linalg.norm(vE, axis=-1), np.linalg.norm(v - vE, axis=-1)

    def contains(self, v, strict: bool = False):
        e, p = self.split(v)
        return p < self.a * e if strict else p <= self.a * e * (1 + 1e-12)

    def slack(self, v):
        """Normalized slack ``(a|v_E| - |v_perp|)/|v|``; positive inside."""
        e, p = self.split(v)
        return (self.a * e - p) / np.linalg.norm(v, axis=-1)

    def widened(self, a: float) -> "ConeSpec":
        return ConeSpec(self.center_basis, a)

    def boundary_directions(self, n: int = 64) -> np.ndarray:
        """Deterministic unit vectors on the cone boundary (plus center axes)."""
        B = self.center_basis
        d, k = B.shape
        C = _complement(B)
        phi = np.arctan(self.a)
        es = _sphere_grid(k, n)
        out = [B.T.copy()]
        if C.shape[1] == 0:
            out.append(es @ B.T)
        else:
            fs = _sphere_grid(C.shape[1], n)
            e = es @ B.T
            f = fs @ C.T
            prod = np.cos(phi) * e[:, None, :] + np.sin(phi) * f[None, :, :]
            out.append(prod.reshape(-1, d))
        V = np.concatenate(out)
        return V / np.linalg.norm(V, axis=1, keepdims=True)


def _complement(B: np.ndarray) -> np.ndarray:
    d, k = B.shape
    if k == d:
        return np.zeros((d, 0))
    q, _ = np.linalg.qr(np.concatenate([B, np.eye(d)], axis=1))
    return q[:, k:d]


def _sphere_grid(k: int, n: int) -> np.ndarray:
    """Deterministic points on S^{k-1}: both signs for k=1, n angles for k=2."""
    if k == 1:
        return np.array([[1.0], [-1.0]])
    if k == 2:
        th = 2 * np.pi * np.arange(n) / n
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    # k >= 3: golden-spiral points
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    th = np.pi * (1 + 5**0.5) * i
    s = np.sqrt(1 - z * z)
    pts = np.stack([s * np.cos(th), s * np.sin(th), z], axis=1)
    if k > 3:
        pts = np.concatenate([pts, np.zeros((n, k - 3))], axis=1)
    return pts


# --------------------------------------------------------------------------
# cone norms


def min_expansion(J, cone: ConeSpec) -> np.ndarray:
    """``min |J v| / |v|`` over nonzero ``v`` in the cone, for a stack of matrices.

    Exact up to floating point. In two dimensions the minimum is taken over the
    boundary rays and the singular directions inside the cone. In three
    dimensions the boundary is one or two closed curves on which ``|J v|^2`` is a
    trigonometric polynomial of degree two; its minimum is located on a grid and
    polished by Newton's method, and the singular directions inside the cone are
    added as candidates. Beyond three dimensions the value comes from the
    Lagrange dual
    ``max_{nu >= 0} lambda_min(J^T J + nu Q)`` with ``Q = P_perp - a^2 P_E``,
    which has no gap there because the joint numerical range of two quadratic
    forms on the unit sphere is convex.
    """
    J = np.asarray(J, dtype=float)
    single = J.ndim == 2
    J = J.reshape(-1, cone.dim, cone.dim)
    if np.any(np.abs(np.linalg.det(J)) < 1e-300):
        raise SingularMatrix("cone norm of a singular matrix")
    d, k = cone.dim, cone.center_dim
    M = np.einsum("nji,njk->nik", J, J)
    if k == d:
        val = np.linalg.eigvalsh(M)[:, 0]
    elif d == 2:
        val = _min_expansion_candidates(M, cone)
    elif d == 3:
        val = _min_expansion_3d(M, cone)
    else:
        val = _min_expansion_dual(M, cone)
    out = np.sqrt(np.maximum(val, 0.0))
    return out[0] if single else out


def _min_expansion_candidates(M, cone):
    V = cone.boundary_directions(8)
    vals = np.einsum("vi,nij,vj->nv", V, M, V).min(axis=1)
    w, U = np.linalg.eigh(M)
    for i in range(U.shape[-1]):
        u = U[:, :, i]
        inside = cone.contains(u)
        vals = np.where(inside, np.minimum(vals, w[:, i]), vals)
    return vals


def _boundary_curves(cone):
    """In 3D the cone boundary is ``p + cos(t) q + sin(t) r`` for one or two (p, q, r)."""
    B = cone.center_basis
    C = _complement(B)
    cphi, sphi = np.cos(np.arctan(cone.a)), np.sin(np.arctan(cone.a))
    if B.shape[1] == 2:
        return [(s * sphi * C[:, 0], cphi * B[:, 0], cphi * B[:, 1]) for s in (1.0, -1.0)]
    return [(cphi * B[:, 0], sphi * C[:, 0], sphi * C[:, 1])]


def _min_expansion_3d(M, cone, n_grid: int = 64, newton: int = 8):
    w, U = np.linalg.eigh(M)
    vals = np.full(M.shape[0], np.inf)
    for i in range(3):
        vals = np.where(cone.contains(U[:, :, i]), np.minimum(vals, w[:, i]), vals)
    th = 2 * np.pi * np.arange(n_grid) / n_grid
    for p, q, r in _boundary_curves(cone):
        # F(t) = A0 + A1 cos 2t + B1 sin 2t + C cos t + D sin t
        qq, rr, pp = (np.einsum("i,nij,j->n", x, M, x) for x in (q, r, p))
        A0 = pp + 0.5 * (qq + rr)
        A1 = 0.5 * (qq - rr)
        B1 = np.einsum("i,nij,j->n", q, M, r)
        C = 2 * np.einsum("i,nij,j->n", p, M, q)
        D = 2 * np.einsum("i,nij,j->n", p, M, r)

        def F(t):
            return (A0[:, None] + A1[:, None] * np.cos(2 * t) + B1[:, None] * np.sin(2 * t)
                    + C[:, None] * np.cos(t) + D[:, None] * np.sin(t))

        def dF(t):
            return (-2 * A1[:, None] * np.sin(2 * t) + 2 * B1[:, None] * np.cos(2 * t)
                    - C[:, None] * np.sin(t) + D[:, None] * np.cos(t))

        def d2F(t):
            return (-4 * A1[:, None] * np.cos(2 * t) - 4 * B1[:, None] * np.sin(2 * t)
                    - C[:, None] * np.cos(t) - D[:, None] * np.sin(t))

        Fg = F(th[None, :])
        vals = np.minimum(vals, Fg.min(axis=1))
        # polish the two best grid angles with Newton on F'
        cand = th[np.argsort(Fg, axis=1)[:, :2]]
        for _ in range(newton):
            h = d2F(cand)
            step = np.where(h > 0, dF(cand) / np.where(h > 0, h, 1.0), 0.0)
            cand = cand - np.clip(step, -0.2, 0.2)
        vals = np.minimum(vals, F(cand).min(axis=1))
    return vals


def _min_expansion_dual(M, cone, iters: int = 80):
    PE = cone.proj
    Q = (np.eye(cone.dim) - PE) - cone.a**2 * PE

    def phi(nu, Ms):
        w, U = np.linalg.eigh(Ms + nu[:, None, None] * Q)
        u = U[:, :, 0]
        return w[:, 0], np.einsum("ni,ij,nj->n", u, Q, u)

    val, g0 = phi(np.zeros(M.shape[0]), M)
    # u_min(M) already inside the cone: the unconstrained minimum is attained
    todo = np.flatnonzero(g0 > 0)
    if todo.size == 0:
        return val
    Mt = M[todo]
    lo = np.zeros(todo.size)
    glo = g0[todo]
    hi = np.ones(todo.size)
    _, ghi = phi(hi, Mt)
    for _ in range(200):
        grow = ghi > 0
        if not np.any(grow):
            break
        lo = np.where(grow, hi, lo)
        glo = np.where(grow, ghi, glo)
        hi = np.where(grow, hi * 2, hi)
        _, ghi = phi(hi, Mt)
    # Illinois regula falsi on the decreasing derivative u^T Q u
    side = np.zeros(todo.size)
    for _ in range(iters):
        nu = (lo * ghi - hi * glo) / (ghi - glo)
        nu = np.where(np.isfinite(nu) & (nu > lo) & (nu < hi), nu, 0.5 * (lo + hi))
        _, g = phi(nu, Mt)
        pos = g > 0
        lo, glo = np.where(pos, nu, lo), np.where(pos, g, glo)
        hi, ghi = np.where(pos, hi, nu), np.where(pos, ghi, g)
        glo = np.where(pos & (side == 1), glo, np.where(~pos & (side == -1), glo * 0.5, glo))
        ghi = np.where(pos & (side == 1), ghi * 0.5, ghi)
        side = np.where(pos, 1, -1)
        if np.all((hi - lo) <= 1e-14 * hi):
            break
    val = val.copy()
    val[todo] = np.maximum(phi(lo, Mt)[0], phi(hi, Mt)[0])
    return val


def cone_conorm_inverse(J, cone: ConeSpec):
    """``sup |J^{-1} w|/|w|`` over ``w`` in ``J(cone)``: the reciprocal minimal expansion."""
    return 1.0 / min_expansion(J, cone)


# --------------------------------------------------------------------------
# reports


@dataclass
class InvarianceReport:
    holds: bool
    margin: float
    grid: int
    worst_point: list
    inverse: bool = False

    def to_json(self) -> dict:
        return {"holds": bool(self.holds), "margin": float(self.margin),
                "lambda_hat": None, "grid": self.grid, "worst_point": self.worst_point}


@dataclass
class DominationReport:
    lambda_hat: float
    grid: int
    worst_point: list

    @property
    def holds(self) -> bool:
        return self.lambda_hat < 1.0

    def to_json(self) -> dict:
        return {"holds": self.holds, "margin": float(1.0 - self.lambda_hat),
                "lambda_hat": float(self.lambda_hat), "grid": self.grid,
                "worst_point": self.worst_point}


def grid_points(d: int, resolution: int) -> np.ndarray:
    g = (np.arange(resolution) + 0.5) / resolution
    return np.array(list(itertools.product(g, repeat=d)))


def _chunks(n, size=4096):
    for s in range(0, n, size):
        yield slice(s, min(n, s + size))


def check_cone_invariance(model: MapModel, cone: ConeSpec, grid: int = 16,
                          inverse: bool = False, points=None,
                          n_directions: int = 64) -> InvarianceReport:
    """Test ``Dg(x) C ⊂ int C`` (or ``Dg(x)^{-1} C ⊂ int C`` if ``inverse``) on a grid.

    For the inverse check the cone at ``g(x)`` is pulled back to ``x``; the
    field is constant so the same cone is used at both ends.
    """
    X = grid_points(model.dim, grid) if points is None else as_points(points, model.dim)
    V = cone.boundary_directions(n_directions)
    worst, worst_pt = np.inf, None
    for sl in _chunks(len(X)):
        J = model.jacobian(X[sl])
        if inverse:
            J = np.linalg.inv(J)
        W = np.einsum("nij,vj->nvi", J, V)
        s = cone.slack(W).min(axis=1)
        i = int(np.argmin(s))
        if s[i] < worst:
            worst, worst_pt = float(s[i]), X[sl][i].tolist()
    return InvarianceReport(worst > 0, worst, grid, worst_pt, inverse)


# --------------------------------------------------------------------------
# stable bundle


@dataclass
class SplittingEstimate:
    base: np.ndarray
    stable_frame: np.ndarray
    unstable_frame: np.ndarray
    residual: float


def _orth(F):
    if F.shape[-1] == 0:
        return F
    q, r = np.linalg.qr(F)
    return q * np.sign(np.diagonal(r, axis1=-2, axis2=-1))[..., None, :]


def subspace_distance(A, B):
    """Operator-norm distance between orthogonal projectors onto span(A), span(B)."""
    PA = A @ np.swapaxes(A, -1, -2)
    PB = B @ np.swapaxes(B, -1, -2)
    return np.linalg.norm(PA - PB, ord=2, axis=(-2, -1))


def stable_frames(model: MapModel, X, stable_cone: ConeSpec | None, depth: int = 40):
    """Pull back the stable-cone center from ``g^depth(x)`` for each row of ``X``.

    Returns ``(frames, residual)`` with frames of shape (N, d, d_s) and the
    projector drift between pull-backs of depth ``depth-1`` and ``depth``.
    """
    X = as_points(X, model.dim)
    n, d = X.shape
    if stable_cone is None:
        return np.zeros((n, d, 0)), np.zeros(n)
    S0 = stable_cone.center_basis
    orbit = [X]
    for _ in range(depth):
        orbit.append(model.step(orbit[-1]))
    Jinv = [np.linalg.inv(model.jacobian(p)) for p in orbit[:-1]]

    def pull(start):
        F = np.broadcast_to(S0, (n,) + S0.shape).copy()
        for j in range(start - 1, -1, -1):
            F = _orth(Jinv[j] @ F)
        return F

    F = pull(depth)
    G = pull(depth - 1) if depth > 1 else F
    return F, subspace_distance(F, G)


def estimate_stable_bundle(model: MapModel, x, depth: int = 40,
                           stable_cone: ConeSpec | None = None,
                           unstable_cone: ConeSpec | None = None,
                           tol: float | None = 1e-8) -> SplittingEstimate:
    """Estimate ``E^s_x`` as the pulled-back intersection of stable cones."""
    if stable_cone is None:
        stable_cone = default_stable_cone(model)
    x = as_points(x, model.dim)
    if stable_cone is None:
        d = model.dim
        return SplittingEstimate(x[0], np.zeros((d, 0)), np.eye(d), 0.0)
    F, res = stable_frames(model, x, stable_cone, depth)
    F, res = F[0], float(res[0])
    if tol is not None and res > tol:
        raise DepthTooSmall(f"stable frame drift {res:.2e} exceeds {tol:.1e} at depth {depth}")
    U = unstable_cone.center_basis if unstable_cone is not None else _complement(F)
    return SplittingEstimate(x[0], F, U, res)


def check_domination(model: MapModel, cone: ConeSpec, stable_cone: ConeSpec | None,
                     grid: int = 16, depth: int = 40, points=None) -> DominationReport:
    """``max_x |Dg(x)|_{E^s}| * |(Dg(x)|_C)^{-1}|`` over grid points."""
    X = grid_points(model.dim, grid) if points is None else as_points(points, model.dim)
    if stable_cone is None:
        return DominationReport(0.0, grid, X[0].tolist())
    best, best_pt = -np.inf, None
    for sl in _chunks(len(X), 2048):
        F, _ = stable_frames(model, X[sl], stable_cone, depth)
        J = model.jacobian(X[sl])
        contr = np.linalg.norm(J @ F, ord=2, axis=(1, 2))
        val = contr * cone_conorm_inverse(J, cone)
        i = int(np.argmax(val))
        if val[i] > best:
            best, best_pt = float(val[i]), X[sl][i].tolist()
    return DominationReport(best, grid, best_pt)


# --------------------------------------------------------------------------
# default cones for a model


def default_unstable_cone(model: MapModel, a: float = 0.5) -> ConeSpec:
    return ConeSpec(model.unstable_basis, a)


def default_stable_cone(model: MapModel, a: float = 0.5) -> ConeSpec | None:
    S = model.stable_basis
    return ConeSpec(S, a) if S.shape[1] else None
