"""Empirical SRB measures from Cesaro averages of pushed-forward disks.

``mu_n = (1/n) sum_{j<n} g^j_* Leb_D`` for a disk ``D`` tangent to the unstable
cone field, its restriction ``nu_n`` to hyperbolic times, tracking of
hyperbolic pre-disks, and clustering of Birkhoff averages into physical
measures.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .cones import ConeSpec, _orth, min_expansion
from .measures import EmpiricalMeasure, MeasureAccumulator
from .models import MapModel, advance
from .parallel import chunk_slices, run_tasks
from .torus import as_points, delta, dist, wrap

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))
CHUNK = 25_000


class DiskTooSmall(RuntimeError):
    pass


@dataclass(eq=False)
class DiskSample:
    """Quasi-uniform equal-weight points on a flat disk ``base + span(frame)``."""

    base: np.ndarray
    tangent_frame: np.ndarray
    radius: float
    points: np.ndarray
    weights: np.ndarray

    @property
    def dim(self) -> int:
        return self.tangent_frame.shape[1]


def _unit_ball_lattice(k: int, n: int) -> np.ndarray:
    """``n`` quasi-uniform points in the closed unit ball of R^k (equal volume cells)."""
    i = np.arange(n) + 0.5
    if k == 1:
        return (2 * i / n - 1.0)[:, None]
    if k == 2:
        r = np.sqrt(i / n)
        th = GOLDEN_ANGLE * np.arange(n)
        return np.stack([r * np.cos(th), r * np.sin(th)], axis=1)
    if k == 3:
        r = np.cbrt(i / n)
        # shells follow r; directions from a spherical Fibonacci sequence
        z = 1 - 2 * ((np.arange(n) * 0.6180339887498949) % 1.0)
        th = GOLDEN_ANGLE * np.arange(n)
        s = np.sqrt(1 - z * z)
        return r[:, None] * np.stack([s * np.cos(th), s * np.sin(th), z], axis=1)
    raise ValueError(f"disks of dimension {k} are not supported")


def make_disk(base, frame, radius: float, n_samples: int) -> DiskSample:
    base = np.asarray(base, float).reshape(-1)
    F = _orth(np.asarray(frame, float).reshape(len(base), -1))
    U = _unit_ball_lattice(F.shape[1], n_samples)
    pts = wrap(base[None, :] + radius * U @ F.T)
    w = np.full(n_samples, 1.0 / n_samples)
    return DiskSample(wrap(base), F, float(radius), pts, w)


def unstable_disk(model: MapModel, base, radius: float, n_samples: int,
                  cone: ConeSpec | None = None) -> DiskSample:
    """Disk through ``base`` along the unstable cone center (the unstable eigenspace)."""
    F = cone.center_basis if cone is not None else model.unstable_basis
    return make_disk(base, F, radius, n_samples)


# --------------------------------------------------------------------------
# Cesaro averages


def _cesaro_chunk(model, n, start, K, resolution, precision, seed, task):
    ids, X, w = task
    acc = MeasureAccumulator(model.dim, resolution, K, precision)
    for j in range(start):
        X = advance(model, X, j, ids, seed)
    uniform = np.all(w == w[0])
    for j in range(start, start + n):
        acc.add(X, w[0] / n if uniform else w / n)
        X = advance(model, X, j, ids, seed)
    return acc


def _disk_tasks(D: DiskSample):
    w = D.weights / D.weights.sum()
    ids = np.arange(len(D.points))
    return [(ids[sl], D.points[sl], w[sl]) for sl in chunk_slices(len(D.points), CHUNK)]


def _merge(accs) -> EmpiricalMeasure:
    total = accs[0]
    for a in accs[1:]:
        total.merge(a)
    return total.measure()


def cesaro_pushforward(model: MapModel, D: DiskSample, n: int, K: int = 8,
                       resolution: int | None = None, start: int = 0,
                       workers: int | None = None, precision: str = "single",
                       seed: int = 0) -> EmpiricalMeasure:
    """``(1/n) sum_{j=start}^{start+n-1} g^j_* Leb_D`` as an empirical measure.

    ``seed`` keys the dither used for non-invertible models (see
    :func:`~srblab.models.advance`).
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    fn = partial(_cesaro_chunk, model, n, start, K, resolution, precision, seed)
    return _merge(run_tasks(fn, _disk_tasks(D), workers))


def _nu_chunk(model, n, c, cone, K, resolution, precision, seed, task):
    from .hyptimes import cone_lognorms

    ids, X, w = task
    acc = MeasureAccumulator(model.dim, resolution, K, precision)
    S = np.zeros(len(X))
    running_min = np.full(len(X), np.inf)
    for j in range(n):
        # j is hyperbolic iff S_j <= min_{i<j} S_i; j = 0 holds vacuously
        hyp = S <= running_min
        if np.any(hyp):
            acc.add(X[hyp], w[hyp] / n)
        running_min = np.minimum(running_min, S)
        S = S + cone_lognorms(model, X, cone) + c
        X = advance(model, X, j, ids, seed)
    return acc


@dataclass
class RestrictedMeasure:
    measure: EmpiricalMeasure
    alpha_hat: float


def nu_restricted_pushforward(model: MapModel, D: DiskSample, n: int, c: float,
                              cone: ConeSpec, K: int = 8, resolution: int | None = None,
                              workers: int | None = None,
                              precision: str = "single", seed: int = 0) -> RestrictedMeasure:
    """Cesaro average keeping ``g^j(x)`` only when ``j`` is a ``c``-hyperbolic time of ``x``.

    ``j = 0`` counts as a (vacuous) hyperbolic time.
    """
    from .hyptimes import NonpositiveC

    if not c > 0:
        raise NonpositiveC(f"c must be positive, got {c}")
    fn = partial(_nu_chunk, model, n, c, cone, K, resolution, precision, seed)
    mu = _merge(run_tasks(fn, _disk_tasks(D), workers))
    return RestrictedMeasure(mu, mu.total_mass)


# --------------------------------------------------------------------------
# hyperbolic pre-disks


@dataclass(eq=False)
class TrackedDisk:
    """A disk of radius ``delta`` at ``g^n(x)`` and its pull-back along the orbit of ``x``.

    ``levels[j]`` holds the pre-disk points at ``g^j(x)`` (``levels[n]`` is the
    image disk) and ``tangent_logjac[j]`` the log-Jacobian of ``g`` on the
    tangent planes carried by those points.
    """

    x: np.ndarray
    n: int
    delta: float
    image_disk: DiskSample
    levels: np.ndarray
    tangent_logjac: np.ndarray
    contraction_log: list = field(default_factory=list)
    stable_correction: float = 0.0


def track_hyperbolic_disk(model: MapModel, D: DiskSample, x, n: int, delta_: float,
                          n_points: int = 64, tube: float = 8.0, seed: int | None = 0,
                          ident: int = 0) -> TrackedDisk:
    """Pull the disk ``Delta(g^n(x), delta)`` back along the inverse branches of the orbit.

    The tangent plane at ``g^n(x)`` is the image of ``T_x D``. Backward steps
    amplify rounding error along the stable directions, so each pulled-back
    point has its stable component relative to the orbit removed (oblique
    projection onto the tangent plane along the stable eigenspace); the
    largest removed component is kept in ``stable_correction``. Tangent planes
    at pre-disk points are pushed forward from level 0, which is the stable
    direction of iteration for planes.

    The log records, for ``k = 1..n``, the worst ratio
    ``dist(y_{n-k}, x_{n-k}) / dist(y_n, x_n)`` over disk points ``y``. Raises
    :class:`DiskTooSmall` if some pre-disk point leaves the ``tube * delta``
    neighbourhood of the orbit. ``seed``/``ident`` select the dithered orbit as
    in :meth:`MapModel.orbit`.
    """
    x = as_points(x, model.dim)[0]
    orbit = model.orbit(x, n + 1, seed=seed, ident=ident)
    T = D.tangent_frame
    planes = [T]
    for j in range(n):
        T = _orth(model.jacobian(orbit[j])[0] @ T)
        planes.append(T)
    image = make_disk(orbit[n], T, delta_, n_points)
    levels = np.empty((n + 1, n_points, model.dim))
    levels[n] = image.points
    S = model.stable_basis
    k = T.shape[1]
    correction = 0.0
    rows = np.arange(n_points)
    for j in range(n - 1, -1, -1):
        # the local inverse branch along the orbit: the preimage next to x_j
        # (branch labels jump where a disk straddles the wrap-around)
        P = model.preimages(levels[j + 1])
        Y = P[rows, np.argmin(dist(P, orbit[j]), axis=1)]
        if S.shape[1] and k + S.shape[1] == model.dim:
            B = np.hstack([planes[j], S])
            coef = np.linalg.solve(B, delta(orbit[j], Y).T)
            correction = max(correction, float(np.abs(S @ coef[k:]).max()))
            Y = wrap(orbit[j] + (planes[j] @ coef[:k]).T)
        levels[j] = Y
    # log-Jacobian of g on the tangent plane carried by each pre-disk point
    logjac = np.zeros((n, n_points))
    F = np.broadcast_to(planes[0], (n_points,) + planes[0].shape).copy()
    for j in range(n):
        W = model.jacobian(levels[j]) @ F
        gram = np.einsum("nik,nil->nkl", W, W)
        logjac[j] = 0.5 * np.log(np.linalg.det(gram))
        F = _orth(W)
    d = dist(levels, orbit[:, None, :])
    if np.any(d > tube * delta_ * (1 + 1e-9)):
        raise DiskTooSmall(f"pre-disk leaves the {tube:g}*delta tube around the orbit")
    log = []
    ref = d[n]
    ok = ref > 0
    for kk in range(1, n + 1):
        log.append(float(np.max(d[n - kk][ok] / ref[ok])))
    return TrackedDisk(x, n, float(delta_), image, levels, logjac, log, correction)


def distortion_ratio(model: MapModel, tracked: TrackedDisk) -> float:
    """``max_{y,z} |det Dg^n(y)|_{T_y}| / |det Dg^n(z)|_{T_z}|`` over the pre-disk."""
    if tracked.n == 0:
        return 1.0
    s = tracked.tangent_logjac.sum(axis=0)
    return float(np.exp(s.max() - s.min()))


# --------------------------------------------------------------------------
# physical measures


def fourier_modes(dim: int, K: int) -> np.ndarray:
    """Half-space of nonzero integer vectors with ``|k|_inf <= K`` (one of each ``+-k`` pair)."""
    import itertools

    ks = []
    for k in itertools.product(range(-K, K + 1), repeat=dim):
        nz = [v for v in k if v != 0]
        if nz and nz[0] > 0:
            ks.append(k)
    return np.array(ks, dtype=float)


def _mode_characters(X, modes):
    """``exp(2 pi i k.x)`` for each row of ``X`` and each mode, from per-axis powers."""
    K = int(np.abs(modes).max())
    z = np.exp(2j * np.pi * X)
    pw = np.empty(X.shape + (2 * K + 1,), dtype=complex)
    pw[..., K] = 1.0
    for p in range(1, K + 1):
        pw[..., K + p] = pw[..., K + p - 1] * z
        pw[..., K - p] = np.conj(pw[..., K + p])
    idx = modes.astype(int) + K
    out = pw[:, 0, idx[:, 0]]
    for a in range(1, X.shape[1]):
        out = out * pw[:, a, idx[:, a]]
    return out


def _birkhoff_chunk(model, n, burn, modes, seed, task):
    """Two half-window time averages of ``(cos, sin)(2 pi k.x)`` per start."""
    ids, X = task
    for j in range(burn):
        X = advance(model, X, j, ids, seed)
    m = n - burn
    half = m // 2
    sums = np.zeros((2, len(X), len(modes)), dtype=complex)
    for j in range(m):
        sums[0 if j < half else 1] += _mode_characters(X, modes)
        X = advance(model, X, burn + j, ids, seed)
    out = np.concatenate([sums.real, sums.imag], axis=2)
    out[0] /= max(half, 1)
    out[1] /= max(m - half, 1)
    return out


def birkhoff_observables(model: MapModel, X, n: int, K_obs: int = 3, burn_in: float = 0.1,
                         workers: int | None = None, chunk: int = 256, seed: int = 0):
    """Per-start Birkhoff averages of the Fourier dictionary over two half windows.

    Returns ``(first_half, second_half)``, each of shape (N, 2 * n_modes).
    """
    X = as_points(X, model.dim)
    modes = fourier_modes(model.dim, K_obs)
    burn = int(round(burn_in * n))
    if len(X) == 0:
        z = np.zeros((0, 2 * len(modes)))
        return z, z
    fn = partial(_birkhoff_chunk, model, n, burn, modes, seed)
    ids = np.arange(len(X))
    parts = run_tasks(fn, [(ids[sl], X[sl]) for sl in chunk_slices(len(X), chunk)], workers)
    out = np.concatenate(parts, axis=1)
    return out[0], out[1]


def _sup_clusters(V, eps):
    if len(V) == 0:
        return np.zeros(0, dtype=int)
    tree = cKDTree(V)
    pairs = tree.query_pairs(eps, p=np.inf, output_type="ndarray")
    g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(len(V), len(V)))
    _, labels = connected_components(g, directed=False)
    return labels


def _time_average_chunk(model, n, burn, K, resolution, seed, task):
    ids, X = task
    acc = MeasureAccumulator(model.dim, resolution, K, "single")
    for j in range(burn):
        X = advance(model, X, j, ids, seed)
    for j in range(burn, n):
        acc.add(X, 1.0)
        X = advance(model, X, j, ids, seed)
    return acc


@dataclass(eq=False)
class PhysicalMeasureReport:
    clusters: int
    labels: np.ndarray
    members: list
    averages: np.ndarray
    cluster_centers: np.ndarray
    cluster_measures: list
    nonconverged: np.ndarray
    eps: float

    @property
    def unassigned_fraction(self) -> float:
        n = len(self.labels)
        return float(np.mean(self.labels < 0)) if n else 0.0

    @property
    def fractions(self) -> list:
        n = len(self.labels)
        return [len(m) / n for m in self.members] if n else []


def count_physical_measures(model: MapModel, starts, n: int, K_obs: int = 3,
                            burn_in: float = 0.1, eps: float = 0.05, K: int = 8,
                            resolution: int | None = None, workers: int | None = None,
                            with_measures: bool = True, seed: int = 0) -> PhysicalMeasureReport:
    """Cluster per-start Birkhoff averages at sup-norm radius ``eps``.

    Starts whose two half-window averages differ by more than ``eps`` are
    flagged as not converged and left unassigned. Clusters are the connected
    components of the ``eps``-neighbourhood graph, ordered by decreasing size.
    """
    X = as_points(starts, model.dim)
    h1, h2 = birkhoff_observables(model, X, n, K_obs, burn_in, workers, seed=seed)
    avg = 0.5 * (h1 + h2)
    nonconv = np.max(np.abs(h1 - h2), axis=1) > eps if len(X) else np.zeros(0, bool)
    ok = np.flatnonzero(~nonconv)
    raw = _sup_clusters(avg[ok], eps)
    groups = [ok[raw == r] for r in range(raw.max() + 1)] if len(ok) else []
    centers = [avg[g].mean(axis=0) for g in groups]
    order = sorted(range(len(groups)), key=lambda i: (-len(groups[i]), tuple(np.round(centers[i], 12))))
    groups = [groups[i] for i in order]
    centers = np.array([centers[i] for i in order]).reshape(len(groups), avg.shape[1])
    labels = np.full(len(X), -1)
    for i, g in enumerate(groups):
        labels[g] = i
    measures = []
    if with_measures:
        burn = int(round(burn_in * n))
        for g in groups:
            fn = partial(_time_average_chunk, model, n, burn, K, resolution, seed)
            tasks = [(g[sl], X[g][sl]) for sl in chunk_slices(len(g), 64)]
            accs = run_tasks(fn, tasks, workers)
            mu = _merge(accs)
            measures.append(mu.scaled(1.0 / mu.total_mass))
    return PhysicalMeasureReport(len(groups), labels, [list(map(int, g)) for g in groups],
                                 avg, centers, measures, nonconv, eps)


def basin_coverage_estimate(model: MapModel, report: PhysicalMeasureReport, starts, n: int,
                            K_obs: int = 3, burn_in: float = 0.1,
                            workers: int | None = None, seed: int = 1) -> dict:
    """Fractions of fresh starts whose Birkhoff vector falls within ``eps`` of each cluster.

    A start is assigned to the nearest cluster member (sup norm) when that
    distance is at most ``eps`` and its averages converged.
    """
    X = as_points(starts, model.dim) if len(np.atleast_1d(starts)) else np.zeros((0, model.dim))
    if len(X) == 0:
        return {"fractions": [], "unassigned": 0.0, "n": 0}
    h1, h2 = birkhoff_observables(model, X, n, K_obs, burn_in, workers, seed=seed)
    avg = 0.5 * (h1 + h2)
    nonconv = np.max(np.abs(h1 - h2), axis=1) > report.eps
    assigned = np.full(len(X), -1)
    known = np.flatnonzero(report.labels >= 0)
    if len(known):
        tree = cKDTree(report.averages[known])
        d, idx = tree.query(avg, p=np.inf)
        hit = (d <= report.eps) & ~nonconv
        assigned[hit] = report.labels[known[idx[hit]]]
    fr = [float(np.mean(assigned == i)) for i in range(report.clusters)]
    return {"fractions": fr, "unassigned": float(np.mean(assigned < 0)), "n": len(X)}
