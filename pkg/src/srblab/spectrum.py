"""Lyapunov spectra by the discrete QR method and the SRB entropy formula.

The entropy of an invariant measure is computed two ways: by integrating
``log |det Dg| - log |det Dg|_{E^s}|`` over the measure's bins, and from the
positive Lyapunov exponents of an ensemble of starts drawn from the measure.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from functools import partial

import numpy as np

from .cones import ConeSpec, default_stable_cone, stable_frames
from .measures import EmpiricalMeasure, lebesgue
from .models import MapModel, advance
from .parallel import chunk_slices, rng_for, run_tasks
from .torus import as_points

MULTIPLICITY_GAP = 1e-2


class StableBundleFailure(RuntimeError):
    pass


@dataclass
class LyapunovSpectrum:
    exponents: np.ndarray
    multiplicities: tuple
    n_used: int
    drift: float
    logdet_average: float

    def to_json(self) -> dict:
        return {"exponents": [float(v) for v in self.exponents],
                "multiplicities": list(self.multiplicities),
                "n_used": self.n_used, "drift": self.drift,
                "logdet_average": self.logdet_average}


def multiplicities(exponents, gap: float = MULTIPLICITY_GAP) -> tuple:
    """Group sorted exponents whose consecutive differences are below ``gap``."""
    ex = np.sort(np.asarray(exponents, float))[::-1]
    if len(ex) == 0:
        return ()
    out = [1]
    for a, b in zip(ex[:-1], ex[1:]):
        if a - b < gap:
            out[-1] += 1
        else:
            out.append(1)
    return tuple(out)


def _qr_chunk(model, n, seed, task):
    """Accumulated ``log |R_ii|`` at ``n // 2`` and ``n`` plus the summed log-determinant."""
    ids, X = task
    N, d = X.shape
    Q = np.broadcast_to(np.eye(d), (N, d, d)).copy()
    logs = np.zeros((N, d))
    logdet = np.zeros(N)
    half = None
    for j in range(n):
        J = model.jacobian(X)
        logdet += np.log(np.abs(np.linalg.det(J)))
        Q, R = np.linalg.qr(J @ Q)
        logs += np.log(np.abs(np.diagonal(R, axis1=1, axis2=2)))
        if j + 1 == n // 2:
            half = logs.copy()
        X = advance(model, X, j, ids, seed)
    return half, logs, logdet


def lyapunov_ensemble(model: MapModel, X, n: int, seed: int | None = 0,
                      workers: int | None = None, chunk: int = 256):
    """QR exponents for many starts.

    Returns ``(exponents, exponents_half, logdet_avg)`` with exponents of shape
    (N, d) in QR order (not sorted) and ``logdet_avg`` the time average of
    ``log |det Dg|`` per start.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    X = as_points(X, model.dim)
    ids = np.arange(len(X))
    tasks = [(ids[sl], X[sl]) for sl in chunk_slices(len(X), chunk)]
    parts = run_tasks(partial(_qr_chunk, model, n, seed), tasks, workers)
    half = np.concatenate([p[0] for p in parts]) / (n // 2)
    full = np.concatenate([p[1] for p in parts]) / n
    logdet = np.concatenate([p[2] for p in parts]) / n
    return full, half, logdet


def lyapunov_qr(model: MapModel, x, n: int, seed: int | None = 0) -> LyapunovSpectrum:
    """Lyapunov spectrum of the orbit of ``x`` from ``n`` QR steps.

    ``drift`` is the largest change between the estimates at ``n // 2`` and ``n``.
    """
    if n < 100:
        raise ValueError(f"need n >= 100, got {n}")
    full, half, logdet = lyapunov_ensemble(model, as_points(x, model.dim)[:1], n, seed, workers=1)
    ex = np.sort(full[0])[::-1]
    drift = float(np.max(np.abs(ex - np.sort(half[0])[::-1])))
    return LyapunovSpectrum(ex, multiplicities(ex), n, drift, float(logdet[0]))


# --------------------------------------------------------------------------
# entropy


@dataclass
class EntropyReport:
    h_formula: float
    h_pesin: float
    discrepancy: float
    excluded_mass: float
    h_formula_half_resolution: float | None = None
    negative_exponent_integral: float | None = None
    logdet_integral: float | None = None

    def to_json(self) -> dict:
        return {k: (None if v is None else float(v)) for k, v in asdict(self).items()}


def _entropy_density(model, X, stable_cone, depth, tol):
    """``log |det Dg| - log |det Dg|_{E^s}|`` per point, NaN where ``E^s`` is not resolved."""
    J = model.jacobian(X)
    logdet = np.log(np.abs(np.linalg.det(J)))
    if stable_cone is None:
        return logdet, logdet
    F, res = stable_frames(model, X, stable_cone, depth)
    JF = J @ F
    # |det Dg|_{E^s}| = product of singular values of Dg restricted to E^s
    s = np.linalg.svd(JF, compute_uv=False)
    out = logdet - np.log(s).sum(axis=1)
    out[res > tol] = np.nan
    return out, logdet


def _formula(model, mu, stable_cone, depth, tol, chunk=4096):
    w = mu.bins.reshape(-1)
    nz = np.flatnonzero(w > 0)
    X = mu.bin_centers()[nz]
    w = w[nz]
    vals = np.empty(len(X))
    logdet = np.empty(len(X))
    for sl in chunk_slices(len(X), chunk):
        vals[sl], logdet[sl] = _entropy_density(model, X[sl], stable_cone, depth, tol)
    bad = np.isnan(vals)
    total = w.sum()
    excluded = float(w[bad].sum() / total)
    good = ~bad
    if not np.any(good):
        raise StableBundleFailure("stable bundle unresolved on every bin")
    h = float(np.sum(w[good] * vals[good]) / w[good].sum())
    ld = float(np.sum(w * logdet) / total)
    return h, excluded, ld


def _coarsen(mu: EmpiricalMeasure) -> EmpiricalMeasure | None:
    r = mu.resolution
    if r % 2:
        return None
    d = mu.dim
    b = mu.bins.reshape(sum(((r // 2, 2) for _ in range(d)), ()))
    b = b.sum(axis=tuple(range(1, 2 * d, 2)))
    return EmpiricalMeasure(d, r // 2, mu.K, b, mu.coeffs)


def sample_from_measure(mu: EmpiricalMeasure, count: int, seed: int = 0) -> np.ndarray:
    """``count`` points drawn from the binned measure, uniform inside each bin."""
    rng = rng_for(seed, "measure-sample")
    w = mu.bins.reshape(-1)
    idx = rng.choice(len(w), size=count, p=w / w.sum())
    cell = np.array(np.unravel_index(idx, mu.bins.shape)).T
    return (cell + rng.random((count, mu.dim))) / mu.resolution


def entropy_from_formula(model: MapModel, mu: EmpiricalMeasure | None = None,
                         stable_cone: ConeSpec | None = None, depth: int = 40,
                         tol: float = 1e-8, n_lyap: int = 2000, n_starts: int = 64,
                         seed: int = 0, workers: int | None = None) -> EntropyReport:
    """Entropy by integrating the Jacobian ratio over ``mu``, checked against Pesin's sum.

    ``mu=None`` means Lebesgue. Bins whose stable direction does not converge
    within ``depth`` pull-backs are left out and their mass is reported. The
    same integral at half the bin resolution is returned as a quadrature check.
    """
    if mu is None:
        mu = lebesgue(model.dim)
    if not mu.bins.sum() > 0:
        raise ValueError("measure has no mass")
    if stable_cone is None:
        stable_cone = default_stable_cone(model)
    h, excluded, logdet_int = _formula(model, mu, stable_cone, depth, tol)
    coarse = _coarsen(mu)
    h_half = _formula(model, coarse, stable_cone, depth, tol)[0] if coarse is not None else None
    starts = sample_from_measure(mu, n_starts, seed)
    ex, _, _ = lyapunov_ensemble(model, starts, n_lyap, seed, workers)
    h_pesin = float(np.mean(np.where(ex > 0, ex, 0.0).sum(axis=1)))
    neg = float(np.mean(np.where(ex < 0, ex, 0.0).sum(axis=1)))
    return EntropyReport(h, h_pesin, abs(h - h_pesin), excluded, h_half, neg, logdet_int)


# --------------------------------------------------------------------------


@dataclass
class ContinuityRow:
    t: float
    h: float | None
    h_pesin: float | None
    error: str | None = None


def modulus(ts, values) -> tuple[float, float]:
    """``(max |v_{i+1} - v_i|, max |t_{i+1} - t_i|)`` over successive valid entries."""
    pairs = [(t, v) for t, v in zip(ts, values) if v is not None]
    if len(pairs) < 2:
        return 0.0, 0.0
    t = np.array([p[0] for p in pairs])
    v = np.array([p[1] for p in pairs])
    return float(np.max(np.abs(np.diff(v)))), float(np.max(np.diff(t)))


def entropy_continuity_probe(family, ts, measure_fn, **entropy_kw) -> tuple[list, tuple]:
    """Entropy along a parameter family.

    ``family(t)`` builds the model, ``measure_fn(model, t)`` its SRB estimate.
    Failures at one ``t`` are recorded in that row and the probe moves on.
    Returns the rows and ``(max |dh|, max dt)``.
    """
    rows = []
    for t in ts:
        try:
            m = family(t)
            rep = entropy_from_formula(m, measure_fn(m, t), **entropy_kw)
            rows.append(ContinuityRow(float(t), rep.h_formula, rep.h_pesin))
        except Exception as e:  # noqa: BLE001 - recorded per row
            rows.append(ContinuityRow(float(t), None, None, f"{type(e).__name__}: {e}"))
    return rows, modulus([r.t for r in rows], [r.h for r in rows])
