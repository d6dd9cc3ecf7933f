"""Torus endomorphisms: linear maps and localized bifurcation families.

A model is ``g_t(x) = A x + beta(r(x - p)) P (x - p)  (mod 1)`` where ``A`` is an
integer matrix, ``p`` a fixed point of ``A``, ``beta`` a C-infinity bump that
equals 1 on ``r <= 1/2`` and vanishes for ``r >= 1``, and ``P`` a constant
matrix chosen by the family:

* pitchfork: ``P = t (rho - lambda_w) Pi_w`` moves the weakest unstable
  eigenvalue ``lambda_w`` of ``A`` to ``rho`` at ``p``;
* hopf: ``P = (m(t)/|mu| - 1) A Pi_c`` rescales a complex unstable pair of
  modulus ``|mu|`` to modulus ``m(t)`` at ``p`` (``m(-1)=|mu|``, ``m(0)=1``,
  ``m(1)=rho``).

``r`` is an anisotropic radius: ``radius`` across the stable directions is
multiplied by ``stable_stretch``. With ``stable_stretch=1`` the support is the
Euclidean ball ``B(p, radius)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .torus import TorusPoint, as_points, delta, dist, wrap


class NewtonDivergence(RuntimeError):
    """Inverse-branch refinement failed to converge."""


class BranchOutOfRange(IndexError):
    pass


# --------------------------------------------------------------------------
# bump profile


def _h(s):
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos])
    return out


def _dh(s):
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos]) / s[pos] ** 2
    return out


def bump(u):
    """C-infinity profile: 1 on [0, 1/2], 0 on [1, inf), monotone between."""
    u = np.asarray(u, dtype=float)
    s = 2.0 * (1.0 - u)
    a, b = _h(s), _h(1.0 - s)
    return a / (a + b)


def bump_derivative(u):
    u = np.asarray(u, dtype=float)
    s = 2.0 * (1.0 - u)
    a, b = _h(s), _h(1.0 - s)
    da, db = _dh(s), _dh(1.0 - s)
    # d/ds [a/(a+b)] with db/ds = -dh(1-s); ds/du = -2
    dbeta_ds = (da * b + a * db) / (a + b) ** 2
    return -2.0 * dbeta_ds


# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BumpSpec:
    center: tuple
    radius: float = 0.1
    rho: float = 0.6
    t: float = 1.0
    family: str = "pitchfork"
    stable_stretch: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "center", TorusPoint(self.center).coords)
        if self.radius <= 0 or self.stable_stretch <= 0:
            raise ValueError("bump radius and stable_stretch must be positive")
        if self.family not in ("pitchfork", "hopf"):
            raise ValueError(f"unknown perturbation family {self.family!r}")
        lo = -1.0 if self.family == "hopf" else 0.0
        if not lo <= self.t <= 1.0:
            raise ValueError(f"t={self.t} outside [{lo}, 1]")


@dataclass(frozen=True)
class Jet:
    point: TorusPoint
    value: TorusPoint
    derivative: np.ndarray


def _integer_matrix(A) -> np.ndarray:
    a = np.atleast_2d(np.asarray(A, dtype=float))
    if a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    if not np.all(a == np.round(a)):
        raise ValueError("matrix must have integer entries")
    return a.astype(np.int64)


@dataclass(frozen=True, eq=False)
class MapModel:
    """An immutable torus endomorphism ``x -> A x + localized perturbation``."""

    matrix: np.ndarray
    bump: BumpSpec | None = None
    name: str = "linear"
    newton_tol: float = 1e-12
    newton_maxiter: int = 50
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        A = _integer_matrix(self.matrix)
        A.setflags(write=False)
        object.__setattr__(self, "matrix", A)
        det = round(np.linalg.det(A))
        if det == 0:
            raise ValueError("matrix singular")
        if self.bump is not None:
            p = np.array(self.bump.center)
            if len(p) != self.dim:
                raise ValueError("bump center dimension does not match matrix")
            if dist(wrap(A @ p), p) > 1e-12:
                raise ValueError("bump center must be a fixed point of the matrix")

    # -- basic properties -------------------------------------------------

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def det(self) -> int:
        return int(round(np.linalg.det(self.matrix)))

    @property
    def degree(self) -> int:
        return abs(self.det)

    @property
    def is_linear(self) -> bool:
        return self.bump is None or self.bump.t == 0.0 and self.bump.family == "pitchfork"

    @cached_property
    def eigen(self):
        """Eigenvalues of ``A`` sorted by modulus (descending) and matching vectors."""
        w, v = np.linalg.eig(self.matrix.astype(float))
        order = np.argsort(-np.abs(w), kind="stable")
        return w[order], v[:, order]

    @cached_property
    def stable_basis(self) -> np.ndarray:
        """Orthonormal basis (d, d_s) of the contracting eigenspace of ``A``."""
        return _real_invariant_basis(self.matrix, lambda m: m < 1.0)

    @cached_property
    def unstable_basis(self) -> np.ndarray:
        return _real_invariant_basis(self.matrix, lambda m: m > 1.0)

    # -- perturbation data --------------------------------------------------

    @cached_property
    def _perturbation(self):
        """(P, G) with P the perturbation matrix and G the radius metric."""
        if self.bump is None:
            return None
        b = self.bump
        d = self.dim
        A = self.matrix.astype(float)
        w, V = np.linalg.eig(A)
        Vinv = np.linalg.inv(V)
        mods = np.abs(w)
        if b.family == "pitchfork":
            real_unst = [i for i in range(d) if mods[i] > 1 and abs(w[i].imag) < 1e-12]
            if not real_unst:
                raise ValueError("pitchfork needs a real unstable eigenvalue")
            i = min(real_unst, key=lambda k: mods[k])
            lam = w[i].real
            Pi = np.real(np.outer(V[:, i], Vinv[i, :]))
            P = b.t * (b.rho - lam) * Pi
        else:
            cplx = [i for i in range(d) if mods[i] > 1 and w[i].imag > 1e-12]
            if not cplx:
                raise ValueError("hopf needs a complex unstable eigenvalue pair")
            i = cplx[0]
            j = int(np.argmin(np.abs(w - np.conj(w[i]))))
            Pi = np.real(np.outer(V[:, i], Vinv[i, :]) + np.outer(V[:, j], Vinv[j, :]))
            mu = mods[i]
            m = _hopf_modulus(mu, b.t, b.rho)
            P = (m / mu - 1.0) * (A @ Pi)
        Qs = self.stable_basis
        G = np.eye(d) / b.radius**2
        if Qs.shape[1]:
            rs = b.radius * b.stable_stretch
            G = G + (Qs @ Qs.T) * (1.0 / rs**2 - 1.0 / b.radius**2)
        return P, G

    @property
    def hopf_modulus(self) -> float | None:
        """Modulus of the perturbed complex pair at ``p`` (hopf family only)."""
        if self.bump is None or self.bump.family != "hopf":
            return None
        mu = float(np.max(np.abs(self.eigen[0][np.abs(self.eigen[0].imag) > 1e-12])))
        return _hopf_modulus(mu, self.bump.t, self.bump.rho)

    def bump_radius(self, x) -> np.ndarray:
        """Anisotropic radius ``r(x - p)``; the perturbation lives on ``r < 1``."""
        if self.bump is None:
            return np.full(as_points(x, self.dim).shape[0], np.inf)
        y = delta(as_points(x, self.dim), self.bump.center)
        G = self._perturbation[1]
        return np.sqrt(np.einsum("ni,ij,nj->n", y, G, y))

    # -- evaluation -----------------------------------------------------------

    def step(self, x) -> np.ndarray:
        """Vectorized ``g(x) mod 1`` for an (N, d) array."""
        x = as_points(x, self.dim)
        out = x @ self.matrix.T.astype(float)
        if self.bump is not None and self.bump.t != 0.0:
            P, G = self._perturbation
            y = delta(x, self.bump.center)
            r = np.sqrt(np.einsum("ni,ij,nj->n", y, G, y))
            inside = r < 1.0
            if np.any(inside):
                yi = y[inside]
                out[inside] += bump(r[inside])[:, None] * (yi @ P.T)
        return wrap(out)

    def jacobian(self, x) -> np.ndarray:
        """Vectorized derivative ``Dg(x)`` with shape (N, d, d)."""
        x = as_points(x, self.dim)
        n = x.shape[0]
        J = np.broadcast_to(self.matrix.astype(float), (n, self.dim, self.dim)).copy()
        if self.bump is not None and self.bump.t != 0.0:
            P, G = self._perturbation
            y = delta(x, self.bump.center)
            r = np.sqrt(np.einsum("ni,ij,nj->n", y, G, y))
            inside = r < 1.0
            if np.any(inside):
                yi, ri = y[inside], r[inside]
                beta = bump(ri)
                dbeta = bump_derivative(ri)
                safe = np.where(ri > 0, ri, 1.0)
                grad = (dbeta / safe)[:, None] * (yi @ G)
                Py = yi @ P.T
                J[inside] += beta[:, None, None] * P + Py[:, :, None] * grad[:, None, :]
        return J

    def eval(self, x) -> Jet:
        pt = x if isinstance(x, TorusPoint) else TorusPoint(x)
        a = pt.array()[None, :]
        return Jet(pt, TorusPoint(self.step(a)[0]), self.jacobian(a)[0])

    def orbit(self, x, n: int, seed: int | None = None, ident: int = 0) -> np.ndarray:
        """Points ``x, g(x), ..., g^{n-1}(x)`` as an (n, d) array.

        With a ``seed`` the orbit is dithered as in :func:`advance`.
        """
        pts = np.empty((n, self.dim))
        cur = as_points(x, self.dim)
        ids = np.array([ident])
        for j in range(n):
            pts[j] = cur[0]
            cur = advance(self, cur, j, ids, seed)
        return pts

    # -- inverse branches -----------------------------------------------------

    @cached_property
    def branch_shifts(self) -> np.ndarray:
        """Coset representatives of ``A^{-1} Z^d / Z^d`` in lexicographic order."""
        A = self.matrix
        D = self.det
        adj = np.round(np.linalg.inv(A.astype(float)) * D).astype(np.int64)
        n = abs(D)
        reps = set()
        for k in itertools.product(range(n), repeat=self.dim):
            num = (np.sign(D) * (adj @ np.array(k, dtype=np.int64))) % n
            reps.add(tuple(int(v) for v in num))
        shifts = np.array(sorted(reps), dtype=float) / n
        if len(shifts) != n:
            raise RuntimeError("lattice enumeration did not produce |det A| cosets")
        return shifts

    @cached_property
    def _Ainv(self) -> np.ndarray:
        return np.linalg.inv(self.matrix.astype(float))

    def linear_preimages(self, y) -> np.ndarray:
        """Preimages under the pure matrix map: shape (N, degree, d)."""
        y = as_points(y, self.dim)
        base = y @ self._Ainv.T
        return wrap(base[:, None, :] + self.branch_shifts[None, :, :])

    def _newton(self, x0, y, model=None):
        model = model or self
        x = x0.copy()
        res = delta(model.step(x), y)
        err = np.linalg.norm(res, axis=1)
        for _ in range(self.newton_maxiter):
            todo = err > self.newton_tol
            if not np.any(todo):
                return x
            J = model.jacobian(x[todo])
            dx = np.linalg.solve(J, res[todo][..., None])[..., 0]
            lam = np.ones(todo.sum())
            xt = x[todo]
            et = err[todo]
            # damped: halve the step until the residual decreases
            for _ in range(30):
                cand = wrap(xt - lam[:, None] * dx)
                rc = delta(model.step(cand), y[todo])
                ec = np.linalg.norm(rc, axis=1)
                bad = ec >= et
                if not np.any(bad & (et > self.newton_tol)):
                    break
                lam = np.where(bad, lam * 0.5, lam)
            x[todo] = cand
            res[todo] = rc
            err[todo] = ec
        if np.any(err > self.newton_tol):
            raise NewtonDivergence(
                f"inverse branch did not converge (max residual {err.max():.3e})"
            )
        return x

    def preimages(self, y, continuation_steps: int = 8) -> np.ndarray:
        """All preimages of each point in ``y``; shape (N, degree, d).

        Perturbed branches are obtained by continuation in ``t`` from the
        linear preimages, refining with damped Newton at each stage, so branch
        ``b`` is always the continuation of the ``b``-th lattice branch.
        """
        y = as_points(y, self.dim)
        x = self.linear_preimages(y)
        if self.is_linear:
            return x
        N, k, d = x.shape
        flat = x.reshape(N * k, d)
        yy = np.repeat(y, k, axis=0)
        b = self.bump
        ts = np.linspace(0.0, b.t, continuation_steps + 1)[1:]
        for t in ts:
            stage = MapModel(self.matrix, BumpSpec(b.center, b.radius, b.rho, float(t),
                                                   b.family, b.stable_stretch), self.name)
            flat = self._newton(flat, yy, stage)
        return flat.reshape(N, k, d)

    def inverse_branch(self, y, branch: int) -> TorusPoint:
        """Preimage of ``y`` selected by a 1-based branch symbol."""
        if not 1 <= branch <= self.degree:
            raise BranchOutOfRange(f"branch {branch} not in 1..{self.degree}")
        return TorusPoint(self.inverse_branches(y, np.array([branch]))[0])

    def inverse_branches(self, y, branches) -> np.ndarray:
        """Vectorized inverse branch: one symbol per row of ``y``."""
        y = as_points(y, self.dim)
        branches = np.asarray(branches, dtype=int).reshape(-1)
        if np.any((branches < 1) | (branches > self.degree)):
            raise BranchOutOfRange(f"branch symbols must lie in 1..{self.degree}")
        base = wrap(y @ self._Ainv.T + self.branch_shifts[branches - 1])
        if self.is_linear:
            return base
        b = self.bump
        x = base
        for t in np.linspace(0.0, b.t, 9)[1:]:
            stage = MapModel(self.matrix, BumpSpec(b.center, b.radius, b.rho, float(t),
                                                   b.family, b.stable_stretch), self.name)
            x = self._newton(x, y, stage)
        return x

    @cached_property
    def branch_separation(self) -> float:
        """Minimal torus distance between distinct preimages of the same point.

        Exact for linear models; estimated on a 12^d grid otherwise.
        """
        if self.degree == 1:
            return math.inf
        if self.is_linear:
            s = self.branch_shifts
            return float(min(dist(s[i], s[j]) for i in range(len(s)) for j in range(i)))
        g = (np.arange(12) + 0.5) / 12
        Y = np.array(list(itertools.product(g, repeat=self.dim)))
        X = self.preimages(Y)
        best = np.inf
        for i in range(self.degree):
            for j in range(i):
                best = min(best, float(dist(X[:, i], X[:, j]).min()))
        return best

    @cached_property
    def inverse_radius(self) -> float:
        """Empirical uniform radius on which inverse branches stay well separated."""
        return 0.5 * self.branch_separation if self.degree > 1 else 0.5


# --------------------------------------------------------------------------
# dithered iteration

# An integer matrix with |det| > 1 shifts low-order bits out of a binary
# float every step (x -> 2x mod 1 reaches 0 after 53 steps). Long statistical
# runs therefore add a tiny deterministic dither after each step; the result is
# a pseudo-orbit that hyperbolicity keeps close to true orbits.
DITHER = 2.0**-45

def _splitmix64(z):
    z = np.atleast_1d(np.asarray(z, dtype=np.uint64))
    with np.errstate(over="ignore"):
        z = z + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def hash_uniform(seed: int, ids, step: int, d: int) -> np.ndarray:
    """Uniform numbers in [-1, 1) that depend only on (seed, id, step, axis)."""
    ids = np.asarray(ids, dtype=np.uint64)
    key = _splitmix64(np.uint64(seed % 2**64) ^ _splitmix64(step))
    base = _splitmix64(key ^ _splitmix64(ids))
    with np.errstate(over="ignore"):
        axes = _splitmix64(base[:, None] + np.arange(d, dtype=np.uint64)[None, :])
    return (axes >> np.uint64(11)).astype(np.float64) * 2.0**-52 - 1.0


def advance(model: "MapModel", X, step: int, ids=None, seed: int | None = None) -> np.ndarray:
    """One step of ``model`` with deterministic dither for non-invertible models.

    ``ids`` label the rows (global start indices) so that the dither of a
    trajectory does not depend on how starts are batched. ``seed=None`` or an
    invertible model gives the plain step.
    """
    Y = model.step(X)
    if seed is None or model.degree == 1:
        return Y
    if ids is None:
        ids = np.arange(len(Y))
    return wrap(Y + DITHER * hash_uniform(seed, ids, step, model.dim))


def _hopf_modulus(mu: float, t: float, rho: float) -> float:
    # piecewise linear: |mu| at t=-1, 1 at the bifurcation t=0, rho at t=1
    return 1.0 - t * (mu - 1.0) if t <= 0 else 1.0 - t * (1.0 - rho)


def _real_invariant_basis(A, select) -> np.ndarray:
    w, V = np.linalg.eig(np.asarray(A, float))
    cols = []
    for i in np.argsort(-np.abs(w), kind="stable"):
        if not select(abs(w[i])):
            continue
        v = V[:, i]
        if abs(w[i].imag) < 1e-12:
            cols.append(np.real(v))
        elif w[i].imag > 0:
            cols.extend([np.real(v), np.imag(v)])
    d = np.asarray(A).shape[0]
    if not cols:
        return np.zeros((d, 0))
    q, _ = np.linalg.qr(np.array(cols).T)
    return q


# --------------------------------------------------------------------------
# families


CAT = [[2, 1], [1, 1]]


def pitchfork_matrix(n: int = 2) -> np.ndarray:
    return np.array([[n, 1, 0], [1, 1, 0], [0, 0, 2]])


# Integer matrix with a real contracting eigenvalue and a complex expanding pair.
HOPF_MATRIX = np.array([[0, 0, 1], [1, 0, -4], [0, 1, 2]])


def linear(A, name: str = "linear") -> MapModel:
    return MapModel(np.asarray(A), None, name)


def doubling() -> MapModel:
    return MapModel(np.array([[2]]), None, "doubling")


def cat_map() -> MapModel:
    return MapModel(np.array(CAT), None, "cat")


def pitchfork(n: int = 2, rho: float = 0.6, t: float = 1.0, radius: float = 0.1,
              stable_stretch: float = 1.0, center=(0.0, 0.0, 0.0)) -> MapModel:
    A = pitchfork_matrix(n)
    return MapModel(A, BumpSpec(tuple(center), radius, rho, t, "pitchfork", stable_stretch),
                    "pitchfork")


def hopf(t: float = 1.0, rho: float = 0.5, radius: float = 0.1, stable_stretch: float = 1.0,
         matrix=HOPF_MATRIX, center=(0.0, 0.0, 0.0)) -> MapModel:
    return MapModel(np.asarray(matrix), BumpSpec(tuple(center), radius, rho, t, "hopf",
                                                 stable_stretch), "hopf")


def pitchfork_rho_interval(n: int = 2) -> tuple[float, float]:
    """Open interval of admissible ``rho``: ``|lambda_1/rho| < 1``, ``|lambda_2 rho| > 1``
    and ``|rho| < 1``, with ``lambda_1`` stable and ``lambda_2`` the strongest unstable
    eigenvalue of the pitchfork matrix."""
    w = np.linalg.eigvals(pitchfork_matrix(n).astype(float))
    mods = np.sort(np.abs(w))
    lam1, lam2 = mods[0], mods[-1]
    return max(lam1, 1.0 / lam2), 1.0
