"""Cone-hyperbolic times along orbits.

For an orbit ``x_j = g^j(x)`` write ``a_j = log |(Dg(x_j)|_C)^{-1}|``.  A time
``n`` is ``c``-cone-hyperbolic when every suffix sum satisfies
``sum_{j=n-k}^{n-1} a_j <= -c k`` for ``1 <= k <= n``.  With partial sums
``S_m = sum_{j<m} (a_j + c)`` this reads ``S_n <= min_{i<n} S_i``, so all times
of a sequence come out of one pass with a running minimum.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .cones import ConeSpec, _orth, default_stable_cone, min_expansion
from .models import MapModel, advance
from .torus import as_points


class NonpositiveC(ValueError):
    pass


@dataclass
class OrbitRecord:
    """Logged cocycle data along ``x, g(x), ..., g^{n-1}(x)``."""

    start: np.ndarray
    points: np.ndarray
    cone_lognorms: np.ndarray
    jac_logs: np.ndarray
    stable_lognorms: np.ndarray

    @property
    def length(self) -> int:
        return len(self.cone_lognorms)


@dataclass
class HyperbolicTimeReport:
    c: float
    times: np.ndarray
    n: int
    advisory: bool = False

    @property
    def frequency_hat(self) -> float:
        return len(self.times) / self.n if self.n else 0.0


def cone_lognorms(model: MapModel, X, cone: ConeSpec) -> np.ndarray:
    """``log |(Dg(x)|_C)^{-1}|`` for each row of ``X``.

    Points outside the perturbation support share the value of the matrix.
    """
    X = as_points(X, model.dim)
    A = model.matrix.astype(float)
    base = -np.log(min_expansion(A, cone))
    out = np.full(len(X), base)
    if model.is_linear:
        return out
    inside = model.bump_radius(X) < 1.0
    if np.any(inside):
        out[inside] = -np.log(min_expansion(model.jacobian(X[inside]), cone))
    return out


def _stable_lognorms(model: MapModel, pts, stable_cone, depth):
    """``log |Dg|_{E^s}|`` along an orbit, with ``E^s`` pulled back from ``depth`` steps ahead."""
    n = len(pts)
    if stable_cone is None:
        return np.full(n, -np.inf)
    tail = model.orbit(model.step(pts[-1:]), depth)
    full = np.concatenate([pts, tail])
    J = model.jacobian(full)
    F = stable_cone.center_basis.copy()
    out = np.empty(n)
    for j in range(len(full) - 1, -1, -1):
        F = _orth(np.linalg.solve(J[j], F))
        if j < n:
            out[j] = np.log(np.linalg.norm(J[j] @ F, ord=2))
    return out


def record_orbit(model: MapModel, x, n: int, cone: ConeSpec,
                 stable_cone: ConeSpec | None = None, depth: int = 40) -> OrbitRecord:
    """Iterate ``n`` steps from ``x`` and log cone conorms, Jacobians and stable norms."""
    if stable_cone is None:
        stable_cone = default_stable_cone(model)
    pts = model.orbit(x, n)
    J = model.jacobian(pts)
    return OrbitRecord(
        start=pts[0].copy(),
        points=pts,
        cone_lognorms=cone_lognorms(model, pts, cone),
        jac_logs=np.log(np.abs(np.linalg.det(J))),
        stable_lognorms=_stable_lognorms(model, pts, stable_cone, depth),
    )


def pliss_times(a, c: float) -> np.ndarray:
    """1-based times ``n <= len(a)`` at which all suffix sums of ``a`` are ``<= -c k``."""
    a = np.asarray(a, dtype=float)
    s = np.concatenate([[0.0], np.cumsum(a + c)])
    prev_min = np.minimum.accumulate(s)[:-1]
    return np.flatnonzero(s[1:] <= prev_min) + 1


def detect_hyperbolic_times(rec, c: float, verified: bool = True) -> HyperbolicTimeReport:
    """Hyperbolic times of an :class:`OrbitRecord` (or a raw sequence of ``a_j``).

    ``verified=False`` marks the report advisory, for orbits along which cone
    invariance has not been checked.
    """
    if not c > 0:
        raise NonpositiveC(f"c must be positive, got {c}")
    a = rec.cone_lognorms if isinstance(rec, OrbitRecord) else np.asarray(rec, float)
    return HyperbolicTimeReport(float(c), pliss_times(a, c), len(a), not verified)


def _stride_pairs(times, max_pairs):
    pairs = [(j, n) for n in times for j in range(n)]
    if len(pairs) <= max_pairs:
        return pairs
    idx = np.linspace(0, len(pairs) - 1, max_pairs).round().astype(int)
    return [pairs[i] for i in idx]


def verify_expansion_at_times(rec: OrbitRecord, report: HyperbolicTimeReport,
                              model: MapModel, cone: ConeSpec, max_pairs: int | None = 64,
                              n_directions: int = 64) -> float:
    """Largest relative shortfall ``1 - |Dg^{n-j}(x_j) v| e^{-c(n-j)}`` over cone vectors.

    Checks, for hyperbolic times ``n`` and ``0 <= j < n``, that unit boundary
    vectors of the cone at ``x_j`` are expanded by at least ``e^{c(n-j)}``.
    The shortfall is normalized by ``e^{c(n-j)}`` so long orbits stay finite;
    0 means no violation. ``max_pairs=None`` checks every pair.
    """
    times = [int(t) for t in report.times]
    if not times:
        return 0.0
    pairs = _stride_pairs(times, max_pairs) if max_pairs else \
        [(j, n) for n in times for j in range(n)]
    by_start: dict[int, list[int]] = {}
    for j, n in pairs:
        by_start.setdefault(j, []).append(n)
    V0 = cone.boundary_directions(n_directions)
    J = model.jacobian(rec.points)
    worst = 0.0
    for j, ends in sorted(by_start.items()):
        V = V0.copy()
        logs = np.zeros(len(V))
        ends = sorted(ends)
        k = 0
        for m in range(j, ends[-1]):
            V = V @ J[m].T
            nv = np.linalg.norm(V, axis=1)
            logs += np.log(nv)
            V /= nv[:, None]
            while k < len(ends) and ends[k] == m + 1:
                short = -np.expm1(logs.min() - report.c * (m + 1 - j))
                worst = max(worst, float(short))
                k += 1
    return worst


def birkhoff_limsup_estimate(rec, min_length: int = 100) -> float:
    """Empirical Birkhoff average of the cone log-conorms."""
    a = rec.cone_lognorms if isinstance(rec, OrbitRecord) else np.asarray(rec, float)
    if len(a) < min_length:
        raise ValueError(f"need at least {min_length} iterates, got {len(a)}")
    return float(np.mean(a))


def ensemble_lognorms(model: MapModel, X, n: int, cone: ConeSpec,
                      seed: int | None = 0) -> np.ndarray:
    """Cone log-conorms for many orbits at once; shape (N, n)."""
    X = as_points(X, model.dim).copy()
    ids = np.arange(len(X))
    out = np.empty((len(X), n))
    for j in range(n):
        out[:, j] = cone_lognorms(model, X, cone)
        X = advance(model, X, j, ids, seed)
    return out


def select_c(birkhoff_averages) -> float:
    """Default detection rate: half the ensemble's median contraction rate."""
    med = float(np.median(birkhoff_averages))
    if med >= 0:
        raise NonpositiveC(f"median Birkhoff average {med:.4g} is not negative")
    return -0.5 * med


@dataclass
class EnsembleRow:
    orbit_id: int
    n_detected: int
    frequency_hat: float
    birkhoff_avg: float


def ensemble_table(lognorms, c: float) -> list[EnsembleRow]:
    rows = []
    for i, a in enumerate(np.asarray(lognorms)):
        rep = detect_hyperbolic_times(a, c)
        rows.append(EnsembleRow(i, len(rep.times), rep.frequency_hat, float(np.mean(a))))
    return rows


def rows_to_csv(rows: list[EnsembleRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["orbit_id", "n_detected", "frequency_hat", "birkhoff_avg"])
    for r in rows:
        w.writerow([r.orbit_id, r.n_detected, f"{r.frequency_hat:.10g}", f"{r.birkhoff_avg:.10g}"])
    return buf.getvalue()
