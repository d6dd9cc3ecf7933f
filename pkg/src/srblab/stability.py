"""Statistical stability across one-parameter families.

For each parameter value the SRB candidate is the Cesaro average of an
unstable disk. Successive weak* distances give a refinement modulus; a second
independent seed at each parameter gives the noise floor that every
continuity statement is quoted against.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from . import models
from .measures import EmpiricalMeasure, coefficient_vector, weak_star_distance
from .parallel import rng_for, run_tasks
from .spectrum import entropy_from_formula
from .srb import cesaro_pushforward, count_physical_measures, unstable_disk


# --------------------------------------------------------------------------
# families


@dataclass(frozen=True)
class Family:
    """A named one-parameter family ``t -> model`` with a cheap admissibility test."""

    name: str
    base: dict = field(default_factory=dict)

    def model(self, t: float) -> models.MapModel:
        kind = self.name
        b = dict(self.base)
        if kind == "pitchfork-t":
            b.setdefault("rho", 0.8)
            return models.pitchfork(t=t, **b)
        if kind == "pitchfork-rho":
            return models.pitchfork(rho=t, **b)
        if kind == "hopf-t":
            return models.hopf(t=t, **b)
        if kind == "constant":
            return models.pitchfork(**b) if b else models.cat_map()
        raise ValueError(f"unknown family {kind!r}")

    def admissible(self, t: float) -> tuple[bool, str]:
        """Whether ``t`` lies in the class where the example is known to be certified."""
        if self.name.startswith("pitchfork"):
            rho = t if self.name == "pitchfork-rho" else self.base.get("rho", 0.8)
            lo, hi = models.pitchfork_rho_interval(self.base.get("n", 2))
            if not lo < rho < hi:
                return False, f"rho={rho:g} outside the admissible interval ({lo:.3f}, {hi:g})"
        return True, ""


FAMILIES = ("pitchfork-t", "pitchfork-rho", "hopf-t", "constant")


# --------------------------------------------------------------------------


@dataclass
class SweepSettings:
    n: int = 300
    samples: int = 10_000
    radius: float = 0.05
    K: int = 4
    resolution: int | None = None
    entropy: bool = True
    n_lyap: int = 400
    lyap_starts: int = 16
    n_starts: int = 0
    n_birkhoff: int = 2000
    seeds: tuple = (0, 1)


@dataclass
class SweepRow:
    t: float
    valid: bool
    note: str = ""
    clusters: int | None = None
    h: float | None = None
    h_repeat: float | None = None
    seed_distance: float | None = None
    error: str | None = None


@dataclass(eq=False)
class StabilityReport:
    family: str
    rows: list
    measures: list
    distances: list
    modulus: float
    noise_floor: float
    entropy_modulus: float | None
    entropy_noise_floor: float | None

    @property
    def ts(self) -> list:
        return [r.t for r in self.rows]

    @property
    def net_modulus(self) -> float:
        return max(0.0, self.modulus - self.noise_floor)

    @property
    def net_entropy_modulus(self) -> float | None:
        if self.entropy_modulus is None:
            return None
        return max(0.0, self.entropy_modulus - (self.entropy_noise_floor or 0.0))

    def to_json(self) -> dict:
        return {
            "family": self.family,
            "t": self.ts,
            "valid": [r.valid for r in self.rows],
            "notes": [r.note for r in self.rows],
            "errors": [r.error for r in self.rows],
            "clusters": [r.clusters for r in self.rows],
            "entropy": [r.h for r in self.rows],
            "successive_distances": self.distances,
            "modulus": self.modulus,
            "noise_floor": self.noise_floor,
            "net_modulus": self.net_modulus,
            "entropy_modulus": self.entropy_modulus,
            "entropy_noise_floor": self.entropy_noise_floor,
            "net_entropy_modulus": self.net_entropy_modulus,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "valid", "clusters", "entropy", "entropy_repeat", "seed_distance",
                    "distance_to_next", "error"])
        dist = self.distances + [None]
        for r, dn in zip(self.rows, dist):
            w.writerow([f"{r.t:.10g}", int(r.valid), "" if r.clusters is None else r.clusters,
                        _fmt(r.h), _fmt(r.h_repeat), _fmt(r.seed_distance), _fmt(dn),
                        r.error or ""])
        return buf.getvalue()


def _fmt(v):
    return "" if v is None else f"{v:.10g}"


def _disk_base(dim: int, seed: int) -> np.ndarray:
    return rng_for(seed, "disk-base").random(dim)


def srb_estimate(model: models.MapModel, settings: SweepSettings, seed: int,
                 workers: int | None = None) -> EmpiricalMeasure:
    """Normalized Cesaro average of an unstable disk placed by ``seed``."""
    D = unstable_disk(model, _disk_base(model.dim, seed), settings.radius, settings.samples)
    mu = cesaro_pushforward(model, D, settings.n, K=settings.K, resolution=settings.resolution,
                            workers=workers, seed=seed)
    return mu.scaled(1.0 / mu.total_mass)


def _sweep_point(family: Family, settings: SweepSettings, t: float):
    """Everything computed at one parameter value; run as an independent task."""
    ok, note = family.admissible(t)
    row = SweepRow(float(t), ok, note)
    try:
        m = family.model(t)
        mus = [srb_estimate(m, settings, s, workers=1) for s in settings.seeds]
        if len(mus) > 1:
            row.seed_distance = weak_star_distance(mus[0], mus[1])
        if settings.entropy:
            hs = [entropy_from_formula(m, mu, n_lyap=settings.n_lyap,
                                       n_starts=settings.lyap_starts, seed=s, workers=1).h_formula
                  for mu, s in zip(mus, settings.seeds)]
            row.h = hs[0]
            row.h_repeat = hs[1] if len(hs) > 1 else None
        if settings.n_starts:
            X = rng_for(settings.seeds[0], "starts").random((settings.n_starts, m.dim))
            rep = count_physical_measures(m, X, settings.n_birkhoff, workers=1,
                                          with_measures=False, seed=settings.seeds[0])
            row.clusters = rep.clusters
        return row, mus[0]
    except Exception as e:  # noqa: BLE001 - isolated per parameter
        row.error = f"{type(e).__name__}: {e}"
        return row, None


class _Point:
    # picklable task wrapper
    def __init__(self, family, settings):
        self.family, self.settings = family, settings

    def __call__(self, t):
        return _sweep_point(self.family, self.settings, t)


def stability_sweep(family: Family, ts, settings: SweepSettings | None = None,
                    workers: int | None = None) -> StabilityReport:
    """Run every parameter value independently and merge the results in ``t`` order."""
    settings = settings or SweepSettings()
    ts = [float(t) for t in ts]
    results = run_tasks(_Point(family, settings), ts, workers)
    rows = [r for r, _ in results]
    mus = [m for _, m in results]
    return _assemble(family.name, rows, mus)


def _assemble(name, rows, mus) -> StabilityReport:
    dists = []
    for a, b in zip(mus[:-1], mus[1:]):
        dists.append(None if a is None or b is None else weak_star_distance(a, b))
    good = [d for d in dists if d is not None]
    floor = [r.seed_distance for r in rows if r.seed_distance is not None]
    hs = [r.h for r in rows]
    e_mod = None
    e_floor = None
    if any(h is not None for h in hs):
        pairs = [abs(a - b) for a, b in zip(hs[:-1], hs[1:]) if a is not None and b is not None]
        e_mod = max(pairs) if pairs else 0.0
        reps = [abs(r.h - r.h_repeat) for r in rows if r.h is not None and r.h_repeat is not None]
        e_floor = max(reps) if reps else 0.0
    return StabilityReport(name, rows, mus, dists, max(good) if good else 0.0,
                           max(floor) if floor else 0.0, e_mod, e_floor)


def subsample(report: StabilityReport, every: int) -> StabilityReport:
    """The report restricted to every ``every``-th parameter (a coarser grid)."""
    idx = list(range(0, len(report.rows), every))
    return _assemble(report.family, [report.rows[i] for i in idx],
                     [report.measures[i] for i in idx])


@dataclass
class RefinementResult:
    coarse: StabilityReport
    fine: StabilityReport

    @property
    def weak_star_ok(self) -> bool:
        return self.fine.net_modulus <= self.coarse.net_modulus

    @property
    def entropy_ok(self) -> bool:
        a, b = self.fine.net_entropy_modulus, self.coarse.net_entropy_modulus
        return a is None or b is None or a <= b

    def to_json(self) -> dict:
        return {"coarse": self.coarse.to_json(), "fine": self.fine.to_json(),
                "weak_star_modulus_not_increased": self.weak_star_ok,
                "entropy_modulus_not_increased": self.entropy_ok}


def refinement_experiment(family: Family, t0: float, t1: float, coarse_steps: int = 4,
                          settings: SweepSettings | None = None,
                          workers: int | None = None) -> RefinementResult:
    """Sweep on a grid and on the grid with halved step; the coarse grid reuses the fine runs."""
    ts = np.linspace(t0, t1, 2 * coarse_steps + 1)
    fine = stability_sweep(family, ts, settings, workers)
    return RefinementResult(subsample(fine, 2), fine)


# --------------------------------------------------------------------------
# convex combinations


def convex_fit(target: EmpiricalMeasure, components: list) -> tuple[np.ndarray, float]:
    """Mixture weights (nonnegative, summing to one) best matching ``target``.

    Least squares on weighted Fourier coefficients, with the sum-to-one
    constraint imposed by a heavily weighted extra row. Returns the weights
    and the weak* distance from ``target`` to the mixture.
    """
    if not components:
        raise ValueError("no component measures")
    A = np.stack([coefficient_vector(m) for m in components], axis=1)
    b = coefficient_vector(target)
    big = 1e3 * max(1.0, float(np.abs(A).max()))
    A = np.vstack([A, np.full((1, A.shape[1]), big)])
    b = np.concatenate([b, [big]])
    w, _ = nnls(A, b)
    w = w / w.sum() if w.sum() > 0 else np.full(len(components), 1 / len(components))
    mix = components[0].scaled(w[0])
    for wi, m in zip(w[1:], components[1:]):
        mix = mix + m.scaled(wi)
    return w, weak_star_distance(target, mix)
