"""Grid certificates for the cone, expansion and domination floors of a model.

All floors are observed minima (or maxima) over a regular grid, minus a
slack that bounds how far the field can move between a point and its nearest
grid node. The slack is the largest change between neighbouring grid nodes,
scaled to half a grid diagonal. This is a numerical certificate, not a proof.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .cones import (ConeSpec, _complement, _orth, default_stable_cone, default_unstable_cone,
                    grid_points, min_expansion, stable_frames)
from .models import MapModel, advance
from .parallel import chunk_slices, rng_for
from .srb import DiskSample, unstable_disk
from .torus import as_points, dist

GAMMA_GRID = tuple(round(0.55 + 0.05 * i, 2) for i in range(9))


class InvalidCertificate(ValueError):
    pass


@dataclass(frozen=True)
class ORegion:
    """Ball ``B(center, radius)`` on the torus; ``radius == 0`` is the empty set."""

    center: tuple
    radius: float

    @property
    def empty(self) -> bool:
        return self.radius <= 0

    def contains(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        if self.empty:
            return np.zeros(len(X), bool)
        return dist(X, np.asarray(self.center)) < self.radius

    @classmethod
    def none(cls, d: int) -> "ORegion":
        return cls(tuple([0.0] * d), 0.0)


def bump_region(model: MapModel) -> ORegion:
    """The support of the model's perturbation, or the empty region."""
    if model.bump is None:
        return ORegion.none(model.dim)
    b = model.bump
    return ORegion(tuple(b.center), b.radius * max(1.0, b.stable_stretch))


def certified_cones(model: MapModel, a_u: float = 0.5, a_s: float = 1.5):
    """Unstable and stable cones used when certifying the example families."""
    return default_unstable_cone(model, a_u), default_stable_cone(model, a_s)


# --------------------------------------------------------------------------


@dataclass
class VisitFrequencyEstimate:
    gamma: float
    n: int
    fraction_exceeding: float
    fitted_decay: tuple
    gammas: list = field(default_factory=list)
    ns: list = field(default_factory=list)
    table: list = field(default_factory=list)

    def to_json(self) -> dict:
        return asdict(self)


def _fit_decay(ns, fr, n_samples):
    """Fit ``fraction ~ K e^{-eps n}`` through ``(0, 1)`` and the positive entries."""
    ns = np.asarray(ns, float)
    fr = np.asarray(fr, float)
    pos = fr > 0
    if not np.any(pos):
        # faster than the sample can resolve: fraction < 1/N by the first checkpoint
        return 1.0, float(np.log(n_samples) / ns[0])
    x = np.concatenate([[0.0], ns[pos]])
    y = np.concatenate([[0.0], np.log(fr[pos])])
    slope, icpt = np.polyfit(x, y, 1)
    return float(np.exp(icpt)), float(-slope)


def estimate_gamma0(model: MapModel, D: DiskSample, region: ORegion, n_max: int = 400,
                    gammas=GAMMA_GRID, checkpoints: int = 8,
                    seed: int = 0) -> VisitFrequencyEstimate:
    """Exceedance of the visit fraction to ``region`` over disk samples.

    For each ``gamma`` and checkpoint ``n`` the table holds the fraction of
    samples with at least ``gamma n`` visits among ``x, ..., g^{n-1}(x)``. The
    chosen ``gamma`` is the smallest one whose exceedance decreases from the
    first checkpoint to the last (or is zero throughout).
    """
    gammas = [float(g) for g in gammas]
    ns = sorted({max(1, int(round(n_max * (i + 1) / checkpoints))) for i in range(checkpoints)})
    X = D.points.copy()
    ids = np.arange(len(X))
    count = np.zeros(len(X), dtype=np.int64)
    table = np.zeros((len(gammas), len(ns)))
    k = 0
    for j in range(ns[-1]):
        count += region.contains(X)
        X = advance(model, X, j, ids, seed)
        if j + 1 == ns[k]:
            for gi, g in enumerate(gammas):
                table[gi, k] = np.mean(count >= g * ns[k])
            k += 1
    chosen = len(gammas) - 1
    for gi in range(len(gammas)):
        row = table[gi]
        if np.all(row == 0) or (row[-1] < row[0] and row[-1] < 1.0):
            chosen = gi
            break
    Khat, eps = _fit_decay(ns, table[chosen], len(X))
    return VisitFrequencyEstimate(gammas[chosen], ns[-1], float(table[chosen, -1]), (Khat, eps),
                                  gammas, ns, table.tolist())


# --------------------------------------------------------------------------


@dataclass
class ConditionCertificate:
    lambda_s: float
    lambda_u: float
    L: float
    sigma: float
    lam: float
    gamma0: float
    c: float
    O_region: ORegion
    grid_resolution: int
    margins: dict
    slack: dict
    valid: bool
    violations: list = field(default_factory=list)
    visit_estimate: VisitFrequencyEstimate | None = None

    def to_json(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("O_region", "visit_estimate")}
        d["O_region"] = {"center": list(self.O_region.center), "radius": self.O_region.radius}
        d["visit_estimate"] = self.visit_estimate.to_json() if self.visit_estimate else None
        return json.loads(json.dumps(d, default=float))


def _node_slack(values, res, d, mask=None):
    """Per-node slack on a periodic grid: the node's largest neighbour difference
    scaled to half a cell diagonal.

    Differences across pairs touching ``mask`` are ignored (those nodes are
    covered by a finer grid).
    """
    V = values.reshape((res,) * d)
    M = None if mask is None else mask.reshape((res,) * d)
    S = np.zeros_like(V)
    for ax in range(d):
        for shift in (1, -1):
            W = np.roll(V, shift, axis=ax)
            # constant infinite fields (no stable bundle) carry no slack
            with np.errstate(invalid="ignore"):
                D = np.where(np.isfinite(V) & np.isfinite(W), np.abs(V - W), 0.0)
            if M is not None:
                D[M | np.roll(M, shift, axis=ax)] = 0.0
            np.maximum(S, D, out=S)
    return (S * np.sqrt(d) / 2).reshape(-1)


def _subspace_samples(cone: ConeSpec, count: int, seed: int = 0) -> np.ndarray:
    """Orthonormal frames of subspaces inside the cone: the center plus graphs of maps of norm <= a."""
    B = cone.center_basis
    C = _complement(B)
    k, m = B.shape[1], C.shape[1]
    frames = [B]
    if m:
        rng = rng_for(seed, "cone-subspaces")
        for i in range(count):
            T = rng.standard_normal((m, k))
            T *= cone.a / np.linalg.norm(T, ord=2)
            frames.append(_orth(B + C @ T))
    return np.array(frames)


def subspace_logdet(J, E) -> np.ndarray:
    """``log |det J|_E|`` for orthonormal frames ``E`` (stacked), via ``det(E^T J^T J E)``."""
    JE = J @ E
    return 0.5 * np.linalg.slogdet(np.swapaxes(JE, -1, -2) @ JE)[1]


# the contraction goes first: its bound sets the target for L
FIELDS = ("lambda", "L", "lambda_s", "sigma")


def _field(model, X, which, cone, stable_cone, frames, depth):
    J = model.jacobian(X)
    if which == "L":
        return min_expansion(J, cone)
    if which == "sigma":
        return np.exp(np.min(np.stack([subspace_logdet(J, E) for E in frames], axis=1), axis=1))
    if stable_cone is None:
        return np.full(len(X), np.inf) if which == "lambda_s" else np.zeros(len(X))
    if which == "lambda_s":
        return min_expansion(np.linalg.inv(J), stable_cone)
    F, _ = stable_frames(model, X, stable_cone, depth)
    return np.linalg.norm(J @ F, ord=2, axis=(1, 2))


@dataclass
class _Nodes:
    """Grid nodes of one field: positions, values, cell widths and slacks."""

    X: np.ndarray
    v: np.ndarray
    h: np.ndarray
    s: np.ndarray


def _refine(nodes: _Nodes, flagged, evaluate, d, k=3) -> _Nodes:
    """Replace each flagged node's cell by a ``k^d`` sub-grid.

    Sub-node slack is the sub-grid's largest neighbour difference scaled to
    half a sub-cell diagonal.
    """
    idx = np.flatnonzero(flagged)
    off = (np.arange(k) - (k - 1) / 2) / k
    U = np.array(np.meshgrid(*([off] * d), indexing="ij")).reshape(d, -1).T
    Xs = (nodes.X[idx, None, :] + nodes.h[idx, None, None] * U[None]) % 1.0
    vs = evaluate(Xs.reshape(-1, d)).reshape(len(idx), *([k] * d))
    diff = np.zeros(len(idx))
    for ax in range(1, d + 1):
        diff = np.maximum(diff, np.abs(np.diff(vs, axis=ax)).reshape(len(idx), -1).max(axis=1))
    hs = nodes.h[idx] / k
    keep = ~flagged
    n_sub = k**d
    return _Nodes(np.concatenate([nodes.X[keep], Xs.reshape(-1, d)]),
                  np.concatenate([nodes.v[keep], vs.reshape(-1)]),
                  np.concatenate([nodes.h[keep], np.repeat(hs, n_sub)]),
                  np.concatenate([nodes.s[keep], np.repeat(diff * np.sqrt(d) / 2, n_sub)]))


def certify(model: MapModel, cone: ConeSpec | None = None, stable_cone: ConeSpec | None = None,
            region: ORegion | None = None, grid: int = 32, gamma0: float | None = None,
            n_subspaces: int = 32, depth: int = 40, visit_samples: int = 2000,
            visit_n: int = 400, local_grid: int = 32, rounds: int = 4, tol: float = 1e-3,
            seed: int = 0) -> ConditionCertificate:
    """Grid certificate of the floors ``lambda_s, L, lambda_u, sigma`` and the rate ``c``.

    Each floor is a node value minus the node's slack. Nodes whose bound
    leaves an inequality undecided (within ``tol``) are subdivided, up to
    ``rounds`` times. For perturbed models the perturbation support is also
    covered by a ``local_grid`` grid from the start. ``lambda`` is the largest
    norm of ``Dg`` on the estimated stable bundle.

    ``c = gamma0 log L + (1 - gamma0) log lambda_u`` (just ``log lambda_u``
    when the region is empty); ``gamma0`` is estimated from visits of an
    unstable disk to the region unless given.
    """
    if grid < 32:
        raise ValueError("grid resolution must be at least 32 per axis")
    if cone is None or stable_cone is None:
        cu, cs = certified_cones(model)
        cone = cone or cu
        stable_cone = stable_cone if stable_cone is not None else cs
    if region is None:
        region = bump_region(model)
    d = model.dim
    frames = _subspace_samples(cone, n_subspaces, seed)

    def evaluator(which):
        def evaluate(X):
            out = np.empty(len(X))
            for sl in chunk_slices(len(X), 4096):
                out[sl] = _field(model, X[sl], which, cone, stable_cone, frames, depth)
            return out
        return evaluate

    Xg = grid_points(d, grid)
    near = model.bump_radius(Xg) < 1.05 if model.bump is not None else None
    if model.bump is not None:
        r = 1.05 * model.bump.radius * max(1.0, model.bump.stable_stretch)
        Xl = (np.asarray(model.bump.center) + (grid_points(d, local_grid) - 0.5) * 2 * r) % 1.0
    nodes = {}
    for f in FIELDS:
        ev = evaluator(f)
        vg = ev(Xg)
        N = _Nodes(Xg, vg, np.full(len(Xg), 1.0 / grid), _node_slack(vg, grid, d, near))
        if model.bump is not None:
            vl = ev(Xl)
            N = _Nodes(np.concatenate([N.X, Xl]), np.concatenate([N.v, vl]),
                       np.concatenate([N.h, np.full(len(Xl), 2 * r / local_grid)]),
                       np.concatenate([N.s, _node_slack(vl, local_grid, d)]))
        for _ in range(rounds):
            if f == "lambda":
                flagged = N.v + N.s > N.v.max() + tol
            else:
                thr = np.full(len(N.v), 1.0 + tol)
                if f == "L":
                    lam_up = float(np.max(nodes["lambda"].v + nodes["lambda"].s))
                    inside = region.contains(N.X)
                    thr = np.where(inside, np.sqrt(lam_up) + tol,
                                   np.maximum(np.sqrt(lam_up), 1.0) + tol)
                # nodes whose own value fails are violations; refining cannot help
                flagged = (N.v - N.s < thr) & (N.v > thr)
            if not np.any(flagged):
                break
            N = _refine(N, flagged, ev, d)
        nodes[f] = N

    off = ~region.contains(nodes["L"].X)
    lambda_s = float(nodes["lambda_s"].v.min())
    L = float(nodes["L"].v.min())
    lambda_u = float(nodes["L"].v[off].min())
    sigma = float(nodes["sigma"].v.min())
    lam = float(nodes["lambda"].v.max())

    def low(f, mask=None):
        N = nodes[f]
        lo = N.v - N.s
        i = int(np.argmin(np.where(mask, lo, np.inf))) if mask is not None else int(np.argmin(lo))
        return float(lo[i]), float(N.s[i]), N.X[i]

    fl, sl_, where = {}, {}, {}
    for key, f, mask in (("lambda_s", "lambda_s", None), ("L", "L", None),
                         ("lambda_u", "L", off), ("sigma", "sigma", None)):
        fl[key], sl_[key], where[key] = low(f, mask)
    Nl = nodes["lambda"]
    i = int(np.argmax(Nl.v + Nl.s))
    fl["lambda"], sl_["lambda"], where["lambda"] = float(Nl.v[i] + Nl.s[i]), float(Nl.s[i]), Nl.X[i]

    visit = None
    if region.empty:
        gamma0 = GAMMA_GRID[0] if gamma0 is None else gamma0
        c = float(np.log(lambda_u))
    else:
        if gamma0 is None:
            D = unstable_disk(model, _disk_base(model, region), 0.05, visit_samples, cone)
            visit = estimate_gamma0(model, D, region, visit_n, seed=seed)
            gamma0 = visit.gamma
        c = float(gamma0 * np.log(L) + (1 - gamma0) * np.log(lambda_u))

    margins = {
        "lambda_s": fl["lambda_s"] - 1.0,
        "lambda_u": fl["lambda_u"] - 1.0,
        "sigma": fl["sigma"] - 1.0,
        "L": fl["L"],
        "L_vs_sqrt_lambda": fl["L"] - np.sqrt(fl["lambda"]),
        "c": c,
    }
    where["L_vs_sqrt_lambda"] = where["c"] = where["L"]
    violations = [{"condition": k, "margin": float(v), "point": where[k].tolist()}
                  for k, v in margins.items() if not v > 0]
    return ConditionCertificate(lambda_s, lambda_u, L, sigma, lam, float(gamma0), c, region,
                                grid, {k: float(v) for k, v in margins.items()}, sl_,
                                not violations, violations, visit)


def _disk_base(model, region):
    # a point well outside the region, so the visit statistics start from generic mass
    c = np.asarray(region.center, float)
    return (c + 0.5) % 1.0


def birkhoff_bound(L: float, lambda_u: float, gamma0: float) -> float:
    """``log(L^gamma0 lambda_u^(1-gamma0))``."""
    return float(gamma0 * np.log(L) + (1 - gamma0) * np.log(lambda_u))


def derive_birkhoff_bound(cert: ConditionCertificate) -> float:
    """Guaranteed asymptotic contraction rate of the cone conorms for a valid certificate."""
    if not cert.valid:
        raise InvalidCertificate("certificate is not valid: "
                                 + ", ".join(v["condition"] for v in cert.violations))
    if cert.O_region.empty:
        return float(np.log(cert.lambda_u))
    return birkhoff_bound(cert.L, cert.lambda_u, cert.gamma0)


def spot_check(model: MapModel, cert: ConditionCertificate, cone: ConeSpec,
               stable_cone: ConeSpec | None, n: int = 1000, seed: int = 0,
               n_directions: int = 16) -> dict:
    """Worst excess of off-grid samples below the certified floors, per floor.

    Random points and random unit vectors in the cones; values ``<= 0`` mean
    no sample undercut ``floor - slack``.
    """
    rng = rng_for(seed, "spot-check")
    X = rng.random((n, model.dim))
    J = model.jacobian(X)

    def cone_vectors(c):
        B, C = c.center_basis, _complement(c.center_basis)
        u = rng.standard_normal((n_directions, B.shape[1]))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        v = u @ B.T
        if C.shape[1]:
            w = rng.standard_normal((n_directions, C.shape[1]))
            w *= (c.a * rng.random((n_directions, 1))) / np.linalg.norm(w, axis=1, keepdims=True)
            v = v + w @ C.T
        return v / np.linalg.norm(v, axis=1, keepdims=True)

    out = {}
    V = cone_vectors(cone)
    exp_u = np.linalg.norm(np.einsum("nij,vj->nvi", J, V), axis=2).min(axis=1)
    out["L"] = float(np.max(cert.L - cert.slack["L"] - exp_u))
    off = ~cert.O_region.contains(X)
    out["lambda_u"] = float(np.max(cert.lambda_u - cert.slack["lambda_u"] - exp_u[off]))
    if stable_cone is not None:
        Vs = cone_vectors(stable_cone)
        exp_s = np.linalg.norm(np.einsum("nij,vj->nvi", np.linalg.inv(J), Vs), axis=2).min(axis=1)
        out["lambda_s"] = float(np.max(cert.lambda_s - cert.slack["lambda_s"] - exp_s))
    frames = _subspace_samples(cone, n_directions, seed + 1)
    sig = np.exp(np.min(np.stack([subspace_logdet(J, E) for E in frames], axis=1), axis=1))
    out["sigma"] = float(np.max(cert.sigma - cert.slack["sigma"] - sig))
    return out
