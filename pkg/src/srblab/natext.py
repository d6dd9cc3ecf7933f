"""Finite pre-orbits, the natural-extension metric and unstable directions.

A pre-orbit of depth ``n`` is coded by a word ``(i_1, ..., i_n)`` of inverse
branch symbols: ``x_{-j} = g_{i_j}^{-1}(x_{-j+1})``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .cones import ConeSpec, DepthTooSmall, _orth, subspace_distance
from .models import MapModel
from .torus import as_points, delta, dist, wrap


@dataclass(frozen=True, eq=False)
class PreOrbit:
    """Points ``x_0, x_{-1}, ..., x_{-n}`` and the word that produced them."""

    word: tuple
    points: np.ndarray

    @property
    def depth(self) -> int:
        return len(self.word)

    @property
    def base(self) -> np.ndarray:
        return self.points[0]

    def shifted(self) -> "PreOrbit":
        """The pre-orbit of ``x_{-1}`` coded by the remaining symbols."""
        return PreOrbit(self.word[1:], self.points[1:])

    def truncated(self, depth: int) -> "PreOrbit":
        return PreOrbit(self.word[:depth], self.points[: depth + 1])


def extend_preorbit(model: MapModel, x, word) -> PreOrbit:
    word = tuple(int(s) for s in word)
    pts = [as_points(x, model.dim)[0]]
    for s in word:
        pts.append(model.inverse_branch(pts[-1], s).array())
    return PreOrbit(word, np.array(pts))


def extend_preorbits(model: MapModel, X, words) -> np.ndarray:
    """Vectorized pre-orbits: ``X`` (N, d), ``words`` (N, n) -> points (N, n+1, d)."""
    X = as_points(X, model.dim)
    words = np.asarray(words, dtype=int)
    out = np.empty((len(X), words.shape[1] + 1, model.dim))
    out[:, 0] = X
    for j in range(words.shape[1]):
        out[:, j + 1] = model.inverse_branches(out[:, j], words[:, j])
    return out


def preorbit_distance(p: PreOrbit, q: PreOrbit) -> float:
    """``sum_j 2^{-j} dist(x_{-j}, y_{-j})`` over the common depth."""
    n = min(p.depth, q.depth) + 1
    return float(np.sum(2.0 ** -np.arange(n) * dist(p.points[:n], q.points[:n])))


def random_words(rng: np.random.Generator, degree: int, depth: int, count: int) -> np.ndarray:
    """Uniform i.i.d. branch symbols in ``1..degree``."""
    return rng.integers(1, degree + 1, size=(count, depth))


def orbit_word(model: MapModel, points) -> tuple:
    """Branch symbols that reproduce a forward orbit read backwards.

    ``points`` is ``x_0, g(x_0), ..., g^n(x_0)``; the result codes the pre-orbit
    of ``g^n(x_0)`` that walks back along it.
    """
    pts = as_points(points, model.dim)
    pre = model.preimages(pts[1:])
    sym = np.argmin(dist(pre, pts[:-1, None, :]), axis=1) + 1
    return tuple(int(s) for s in sym[::-1])


# --------------------------------------------------------------------------


@dataclass
class UnstableDirectionEstimate:
    base: np.ndarray
    frame: np.ndarray
    contraction_certificate: list
    drift: float


def _push_frame(Js, F):
    for J in Js:
        F = _orth(J @ F)
    return F


def unstable_direction(model: MapModel, pre: PreOrbit, cone: ConeSpec,
                       tol: float | None = 1e-8) -> UnstableDirectionEstimate:
    """Forward image of the cone center along the pre-orbit, with contraction certificate.

    The frame at ``x_{-n}`` is pushed to ``x_0`` by ``Dg^n``; the drift compares
    with the push from ``x_{-n+1}``. The certificate lists, for each ``m``, the
    norm of ``(Dg^m(x_{-m}))^{-1}`` restricted to the frame's span.
    """
    n = pre.depth
    if n < 1:
        raise DepthTooSmall("pre-orbit has depth 0")
    J = model.jacobian(pre.points[1:])  # J[j-1] = Dg(x_{-j})
    B = cone.center_basis
    # frames[j] spans the image of the cone center at x_{-j}
    frames = [None] * (n + 1)
    frames[n] = B
    for j in range(n, 0, -1):
        frames[j - 1] = _orth(J[j - 1] @ frames[j])
    F = frames[0]
    G = _push_frame(J[n - 2::-1], B) if n > 1 else B
    drift = float(subspace_distance(F, G))
    if tol is not None and drift > tol:
        raise DepthTooSmall(f"unstable frame drift {drift:.2e} exceeds {tol:.1e} at depth {n}")
    # Work in frame coordinates: the restricted step x_{-m} -> x_{-m+1} is the
    # small matrix R = F_{-m+1}^T J F_{-m}. Inverting these instead of J keeps
    # rounding errors out of the contracting complement.
    cert = []
    W = np.eye(B.shape[1])
    for m in range(1, n + 1):
        R = frames[m - 1].T @ J[m - 1] @ frames[m]
        W = np.linalg.solve(R, W)
        cert.append((m, float(np.linalg.norm(W, ord=2))))
    return UnstableDirectionEstimate(pre.base.copy(), F, cert, drift)


def verify_backward_contraction(model: MapModel, pre: PreOrbit,
                                est: UnstableDirectionEstimate, c: float) -> float:
    """Largest ``|(Dg^m(x_{-m}))^{-1}|_E| - e^{-(c/2) m}``, or 0 if none is positive."""
    worst = 0.0
    for m, ratio in est.contraction_certificate:
        worst = max(worst, ratio - np.exp(-0.5 * c * m))
    return float(worst)


def hyperbolic_preorbit(model: MapModel, x, c: float, cone: ConeSpec, depth: int = 40,
                        horizon: int = 400, seed: int | None = 0, ident: int = 0):
    """A depth-``depth`` pre-orbit ending at a ``c``-hyperbolic time of ``x``.

    Returns ``None`` when the orbit has no hyperbolic time in ``[depth, horizon]``.
    """
    from .hyptimes import cone_lognorms, pliss_times

    pts = model.orbit(x, horizon + 1, seed=seed, ident=ident)
    times = pliss_times(cone_lognorms(model, pts[:-1], cone), c)
    times = times[times >= depth]
    if len(times) == 0:
        return None
    n = int(times[0])
    seg = pts[n - depth: n + 1]
    word = orbit_word(model, seg)
    return PreOrbit(word, seg[::-1].copy())


def principal_angle(A, B) -> float:
    """Smallest principal angle between the column spans of ``A`` and ``B``."""
    if A.shape[1] == 0 or B.shape[1] == 0:
        return float(np.pi / 2)
    s = np.linalg.svd(_orth(A).T @ _orth(B), compute_uv=False)
    return float(np.arccos(np.clip(s.max(), -1.0, 1.0)))


# --------------------------------------------------------------------------


def disk_disjointness_probe(cloud_a, cloud_b, tol: float = 1e-6) -> str:
    """Classify two disk point clouds as ``coincide``, ``disjoint`` or ``violation``."""
    a = wrap(np.atleast_2d(np.asarray(cloud_a, float)))
    b = wrap(np.atleast_2d(np.asarray(cloud_b, float)))
    ta, tb = cKDTree(a, boxsize=1.0), cKDTree(b, boxsize=1.0)
    dab, _ = tb.query(a)
    dba, _ = ta.query(b)
    if max(dab.max(), dba.max()) < tol:
        return "coincide"
    if min(dab.min(), dba.min()) > tol:
        return "disjoint"
    return "violation"
