"""Run a validated experiment and write its outputs plus a manifest.

Every output depends only on the configuration (including its seed); the
worker count changes scheduling, never results.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, plotting
from .conditions import certify, derive_birkhoff_bound
from .config import ExperimentConfig, build_model, parse_t_range
from .cones import ConeSpec, check_cone_invariance, check_domination
from .hyptimes import (NonpositiveC, ensemble_lognorms, ensemble_table, pliss_times, rows_to_csv,
                       select_c)
from .measures import lebesgue, save_measure, weak_star_distance
from .natext import hyperbolic_preorbit, unstable_direction, verify_backward_contraction
from .parallel import rng_for
from .spectrum import entropy_from_formula, lyapunov_ensemble, lyapunov_qr
from .srb import cesaro_pushforward, nu_restricted_pushforward, unstable_disk
from .stability import Family, SweepSettings, stability_sweep, subsample

ENV_OUT = "SRBLAB_OUT"
DEFAULT_OUT = "srblab-out"


@dataclass
class RunManifest:
    config_hash: str
    seed: int
    version: str
    kind: str
    files: list = field(default_factory=list)
    wall_time: float | None = None

    def to_json(self, with_time: bool = False) -> dict:
        d = {"config_hash": self.config_hash, "seed": self.seed, "version": self.version,
             "kind": self.kind, "files": self.files}
        if with_time:
            d["wall_time"] = self.wall_time
        return d


def output_dir(cfg: ExperimentConfig, override=None) -> Path:
    return Path(override or cfg.run.out or os.environ.get(ENV_OUT) or DEFAULT_OUT)


def _json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True, allow_nan=True) + "\n")
    return path


def _csv(path: Path, header, rows) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([f"{v:.10g}" if isinstance(v, float) else v for v in r])
    path.write_text(buf.getvalue())
    return path


def _cones(cfg, model):
    cu = ConeSpec(model.unstable_basis, cfg.cone.a)
    S = model.stable_basis
    cs = ConeSpec(S, cfg.cone.a_stable) if S.shape[1] else None
    return cu, cs


def _starts(cfg, d, name="starts"):
    if cfg.run.points is not None:
        return np.asarray(cfg.run.points, float).reshape(-1, d) % 1.0
    return rng_for(cfg.run.seed, name).random((cfg.run.starts, d))


def _disk(cfg, model, cone):
    base = rng_for(cfg.run.seed, "disk-base").random(model.dim)
    return unstable_disk(model, base, cfg.constants.delta, cfg.run.samples, cone)


# --------------------------------------------------------------------------
# experiments; each returns the list of files written


def run_check(cfg, model, out: Path, workers):
    cu, cs = _cones(cfg, model)
    cert = certify(model, cu, cs, grid=cfg.constants.grid, depth=cfg.constants.depth,
                   seed=cfg.run.seed)
    inv = check_cone_invariance(model, cu, grid=cfg.constants.grid // 2)
    inv_s = check_cone_invariance(model, cs, grid=cfg.constants.grid // 2, inverse=True) \
        if cs is not None else None
    dom = check_domination(model, cu, cs, grid=cfg.constants.grid // 2, depth=cfg.constants.depth)
    report = cert.to_json()
    report["birkhoff_bound"] = derive_birkhoff_bound(cert) if cert.valid else None
    report["unstable_cone_invariance"] = inv.to_json()
    report["stable_cone_invariance"] = inv_s.to_json() if inv_s else None
    report["domination"] = dom.to_json()
    files = [_json(out / "certificate.json", report)]
    v = cert.visit_estimate
    if v is not None:
        rows = [[g] + list(r) for g, r in zip(v.gammas, v.table)]
        files.append(_csv(out / "visits.csv", ["gamma"] + [f"n={n}" for n in v.ns], rows))
        series = {f"gamma={g:g}": np.maximum(np.asarray(r), 1e-12) for g, r in zip(v.gammas, v.table)}
        files += plotting.plot_series(out / "visits", v.ns, series, "n", "exceedance fraction",
                                      "visit-fraction exceedance", logy=True)
    return files


def run_srb(cfg, model, out: Path, workers):
    cu, _ = _cones(cfg, model)
    D = _disk(cfg, model, cu)
    k = cfg.constants
    mu = cesaro_pushforward(model, D, cfg.run.iters, K=k.K, resolution=k.resolution,
                            workers=workers, seed=cfg.run.seed)
    files = save_measure(mu, out / "measure")
    summary = {"total_mass": mu.total_mass, "n": cfg.run.iters, "samples": cfg.run.samples,
               "K": k.K, "resolution": mu.resolution,
               "distance_to_lebesgue": weak_star_distance(mu, lebesgue(model.dim, mu.resolution,
                                                                       k.K))}
    if k.c is not None:
        nu = nu_restricted_pushforward(model, D, cfg.run.iters, k.c, cu, K=k.K,
                                       resolution=k.resolution, workers=workers,
                                       seed=cfg.run.seed)
        files += save_measure(nu.measure, out / "nu_measure")
        summary["alpha_hat"] = nu.alpha_hat
        summary["c"] = k.c
    files.append(_json(out / "summary.json", summary))
    files += plotting.plot_measure(mu, out / "measure_density", f"{model.name}: Cesaro average")
    return files


def _pick_c(cfg, lognorms):
    if cfg.constants.c is not None:
        return cfg.constants.c
    return select_c(lognorms.mean(axis=1))


def run_hyptimes(cfg, model, out: Path, workers):
    cu, _ = _cones(cfg, model)
    X = _starts(cfg, model.dim)
    a = ensemble_lognorms(model, X, cfg.run.iters, cu, seed=cfg.run.seed)
    c = _pick_c(cfg, a)
    rows = ensemble_table(a, c)
    (out / "hyptimes.csv").write_text(rows_to_csv(rows))
    freq = np.array([r.frequency_hat for r in rows])
    avgs = np.array([r.birkhoff_avg for r in rows])
    summary = {"c": c, "n": cfg.run.iters, "orbits": len(rows),
               "median_birkhoff_avg": float(np.median(avgs)) if len(rows) else None,
               "mean_frequency": float(freq.mean()) if len(rows) else None,
               "min_frequency": float(freq.min()) if len(rows) else None}
    files = [out / "hyptimes.csv", _json(out / "summary.json", summary)]
    files += plotting.plot_histogram(out / "frequency", freq, "frequency_hat",
                                     title=f"hyperbolic-time frequency, c={c:.4g}")
    if len(rows):
        S = np.concatenate([[0.0], np.cumsum(a[0] + c)])
        times = pliss_times(a[0], c)
        marks = np.full(len(S), np.nan)
        marks[times] = S[times]
        files += plotting.plot_series(out / "partial_sums", np.arange(len(S)),
                                      {"S_n": S, "hyperbolic": marks}, "n", "S_n",
                                      "orbit 0: partial sums", markers=False)
    return files


def run_lyapunov(cfg, model, out: Path, workers):
    X = _starts(cfg, model.dim)
    n = max(cfg.run.iters, 100)
    spec = lyapunov_qr(model, X[0], n, seed=cfg.run.seed)
    ex, half, logdet = lyapunov_ensemble(model, X, n, seed=cfg.run.seed, workers=workers)
    ex = np.sort(ex, axis=1)[:, ::-1]
    report = {"first_orbit": spec.to_json(),
              "ensemble_mean": ex.mean(axis=0).tolist(),
              "ensemble_std": ex.std(axis=0).tolist(),
              "starts": len(X)}
    rows = [[i] + list(map(float, r)) + [float(ld)] for i, (r, ld) in enumerate(zip(ex, logdet))]
    header = ["orbit_id"] + [f"lambda_{i + 1}" for i in range(model.dim)] + ["logdet_avg"]
    files = [_json(out / "lyapunov.json", report), _csv(out / "lyapunov.csv", header, rows)]
    files += plotting.plot_histogram(out / "top_exponent", ex[:, 0], "lambda_1",
                                     title="top Lyapunov exponent over starts")
    return files


def run_entropy(cfg, model, out: Path, workers):
    _, cs = _cones(cfg, model)
    k = cfg.constants
    if model.is_linear:
        mu = lebesgue(model.dim, k.resolution, k.K)
    else:
        cu, _ = _cones(cfg, model)
        mu = cesaro_pushforward(model, _disk(cfg, model, cu), cfg.run.iters, K=k.K,
                                resolution=k.resolution, workers=workers, seed=cfg.run.seed)
    rep = entropy_from_formula(model, mu, cs, depth=k.depth, n_lyap=max(cfg.run.iters, 100),
                               n_starts=max(1, min(cfg.run.starts, 256)), seed=cfg.run.seed,
                               workers=workers)
    files = [_json(out / "entropy.json", rep.to_json())]
    files += plotting.plot_series(out / "entropy", [0, 1], {"h": [rep.h_formula, rep.h_pesin]},
                                  "estimator (0 formula, 1 Pesin)", "entropy",
                                  "entropy estimates")
    return files


def run_sweep(cfg, model, out: Path, workers):
    s = cfg.sweep
    base = {}
    if s.rho is not None:
        base["rho"] = s.rho
    fam = Family(s.family, base)
    ts = parse_t_range(s.t_range)
    if s.refine and len(ts) > 1:
        ts = list(np.round(np.linspace(ts[0], ts[-1], 2 * (len(ts) - 1) + 1), 12))
    settings = SweepSettings(n=cfg.run.iters, samples=cfg.run.samples, K=min(cfg.constants.K, 4),
                             resolution=cfg.constants.resolution, entropy=s.entropy,
                             seeds=(cfg.run.seed, cfg.run.seed + 1))
    fine = stability_sweep(fam, ts, settings, workers)
    (out / "sweep.csv").write_text(fine.to_csv())
    report = {"sweep": fine.to_json()}
    files = [out / "sweep.csv"]
    if s.refine and len(ts) > 1:
        coarse = subsample(fine, 2)
        (out / "sweep_coarse.csv").write_text(coarse.to_csv())
        files.append(out / "sweep_coarse.csv")
        report["coarse"] = coarse.to_json()
        report["weak_star_modulus_not_increased"] = fine.net_modulus <= coarse.net_modulus
        a, b = fine.net_entropy_modulus, coarse.net_entropy_modulus
        report["entropy_modulus_not_increased"] = None if a is None else a <= b
    files.append(_json(out / "sweep.json", report))
    d = fine.distances + [np.nan]
    series = {"distance_to_next": [np.nan if v is None else v for v in d],
              "seed_distance": [np.nan if r.seed_distance is None else r.seed_distance
                                for r in fine.rows]}
    files += plotting.plot_series(out / "sweep_distances", fine.ts, series, "t",
                                  "weak* distance", f"{s.family}: successive distances")
    if s.entropy:
        files += plotting.plot_series(out / "sweep_entropy", fine.ts,
                                      {"h": [np.nan if r.h is None else r.h for r in fine.rows]},
                                      "t", "entropy", f"{s.family}: entropy")
    return files


def run_unstable(cfg, model, out: Path, workers):
    cu, _ = _cones(cfg, model)
    X = _starts(cfg, model.dim)
    depth = cfg.constants.depth
    c = cfg.constants.c
    if c is None:
        c = select_c(ensemble_lognorms(model, X[:64], cfg.run.iters, cu,
                                       seed=cfg.run.seed).mean(axis=1))
    rows, certs = [], []
    for i, x in enumerate(X):
        pre = hyperbolic_preorbit(model, x, c, cu, depth=depth, horizon=max(cfg.run.iters, depth),
                                  seed=cfg.run.seed, ident=i)
        if pre is None:
            rows.append([i] + [float("nan")] * (2 * model.dim) + ["", "", "no hyperbolic time"])
            continue
        est = unstable_direction(model, pre, cu, tol=None)
        defect = verify_backward_contraction(model, pre, est, c)
        v = est.frame[:, 0]
        rows.append([i] + list(map(float, pre.base)) + list(map(float, v))
                    + [float(est.drift), float(defect), ""])
        certs.append([r for _, r in est.contraction_certificate])
    header = (["orbit_id"] + [f"x{j + 1}" for j in range(model.dim)]
              + [f"e{j + 1}" for j in range(model.dim)] + ["drift", "defect", "note"])
    files = [_csv(out / "unstable.csv", header, rows)]
    defects = [r[-2] for r in rows if r[-1] == ""]
    summary = {"c": c, "depth": depth, "preorbits": len(defects),
               "max_defect": max(defects) if defects else None,
               "missing": sum(1 for r in rows if r[-1])}
    files.append(_json(out / "summary.json", summary))
    if certs:
        m = np.arange(1, depth + 1)
        C = np.array(certs)
        files += plotting.plot_series(out / "contraction", m,
                                      {"max ratio": C.max(axis=0),
                                       "exp(-c m/2)": np.exp(-0.5 * c * m)},
                                      "m", "|(Dg^m)^-1 on E^u|", "backward contraction",
                                      logy=True)
    return files


def run_preimages(cfg, model, out: Path, workers):
    X = _starts(cfg, model.dim)
    P = model.preimages(X)
    rows = []
    for i in range(len(X)):
        for b in range(P.shape[1]):
            rows.append([i, b + 1] + list(map(float, P[i, b])))
    header = ["point_id", "branch"] + [f"x{j + 1}" for j in range(model.dim)]
    files = [_csv(out / "preimages.csv", header, rows)]
    err = float(np.max(np.abs(((model.step(P.reshape(-1, model.dim)).reshape(P.shape)
                                - X[:, None, :]) + 0.5) % 1.0 - 0.5))) if len(X) else 0.0
    files.append(_json(out / "summary.json", {"degree": model.degree, "points": len(X),
                                              "max_residual": err}))
    files += plotting.plot_points(out / "preimages",
                                  {"points": X, "preimages": P.reshape(-1, model.dim)},
                                  "points and their preimages")
    return files


RUNNERS = {"check": run_check, "srb": run_srb, "hyptimes": run_hyptimes,
           "lyapunov": run_lyapunov, "entropy": run_entropy, "sweep": run_sweep,
           "unstable": run_unstable, "preimages": run_preimages}


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_experiment(cfg: ExperimentConfig, out=None, workers: int | None = None,
                   record_time: bool = False) -> RunManifest:
    """Dispatch on ``cfg.kind`` and write outputs plus ``manifest.json`` into the output dir.

    Wall time is kept out of the manifest file unless ``record_time`` is set,
    so that reruns produce byte-identical directories.
    """
    out = output_dir(cfg, out)
    out.mkdir(parents=True, exist_ok=True)
    workers = workers if workers is not None else cfg.run.workers
    t0 = time.perf_counter()
    model = build_model(cfg.model)
    files = RUNNERS[cfg.kind](cfg, model, out, workers)
    man = RunManifest(cfg.digest(), cfg.run.seed, __version__, cfg.kind)
    man.files = [{"name": Path(f).name, "sha256": _sha(Path(f))} for f in sorted(map(Path, files))]
    man.wall_time = time.perf_counter() - t0
    _json(out / "manifest.json", man.to_json(record_time))
    return man


__all__ = ["RunManifest", "run_experiment", "output_dir", "ENV_OUT", "NonpositiveC"]
