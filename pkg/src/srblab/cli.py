"""Command line entry point: ``srblab <subcommand> [options]``.

Exit codes: 0 success, 1 invalid configuration or arguments, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import KINDS, ConfigError, load_config, parse_config
from .runner import DEFAULT_OUT, ENV_OUT, run_experiment

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

FORMATS = {
    "check": """outputs:
  certificate.json  certified constants (lambda_s, lambda_u, L, sigma, lam, gamma0, c),
                    margins, grid resolution, validity flag, violations,
                    cone invariance and domination reports
  visits.csv        gamma, then the fraction of disk points exceeding gamma at each n
  visits.png/.dat   exceedance curves (gnuplot: plot 'visits.dat' using 1:2)""",
    "srb": """outputs:
  measure.csv       bin_index..., bin_center..., weight  (Cesaro average of the disk)
  measure.json      truncated Fourier coefficients {"K", "modes", "re", "im"}
  nu_measure.*      the same for the hyperbolic-time restricted measure (when c is set)
  summary.json      total mass, weak* distance to Lebesgue, alpha_hat (when c is set)
  measure_density.png/.dat   density heat map (gnuplot: splot 'measure_density.dat' with pm3d)""",
    "hyptimes": """outputs:
  hyptimes.csv      orbit_id, n_detected, frequency_hat, birkhoff_avg
  summary.json      c used, orbit count, median Birkhoff average, frequency statistics
  frequency.png/.dat, partial_sums.png/.dat""",
    "lyapunov": """outputs:
  lyapunov.json     first-orbit spectrum (exponents, multiplicities, drift) and
                    ensemble mean/std
  lyapunov.csv      orbit_id, lambda_1..lambda_d, logdet_avg
  top_exponent.png/.dat""",
    "entropy": """outputs:
  entropy.json      h_formula, h_pesin, discrepancy, excluded_mass,
                    half-resolution value, component integrals
  entropy.png/.dat""",
    "sweep": """outputs:
  sweep.csv         t, valid, clusters, entropy, entropy_repeat, seed_distance,
                    distance_to_next, error
  sweep_coarse.csv  the same on every other parameter (with refinement)
  sweep.json        full report, moduli, noise floors, refinement verdicts
  sweep_distances.png/.dat, sweep_entropy.png/.dat""",
    "unstable": """outputs:
  unstable.csv      orbit_id, base point, unit unstable direction, drift, defect, note
  summary.json      c, depth, maximum backward-contraction defect
  contraction.png/.dat   worst |(Dg^m)^-1 on E^u| against exp(-c m/2)""",
    "preimages": """outputs:
  preimages.csv     point_id, branch, preimage coordinates
  summary.json      degree, max residual |g(preimage) - point|
  preimages.png/.dat""",
}

COMMON_EPILOG = f"""
Every directory also gets manifest.json: config hash, seed, package version and
the sha256 of each file. Outputs are byte-identical for any worker count.
The output directory is --out, else run.out in the config, else ${ENV_OUT},
else ./{DEFAULT_OUT}.
"""


def _matrix(text: str):
    try:
        M = json.loads(text)
    except json.JSONDecodeError as e:
        raise argparse.ArgumentTypeError(f"matrix must be JSON, e.g. [[2,1],[1,1]]: {e}")
    return M


def _add_common(p: argparse.ArgumentParser, kind: str):
    p.add_argument("--config", help="TOML experiment file; options below override it")
    p.add_argument("--out", help=f"output directory (default: ${ENV_OUT} or ./{DEFAULT_OUT})")
    p.add_argument("--workers", type=int, help="worker processes (env SRBLAB_WORKERS)")
    p.add_argument("--seed", type=int)
    p.add_argument("--record-time", action="store_true",
                   help="include wall time in manifest.json (breaks byte-identity)")
    g = p.add_argument_group("model")
    g.add_argument("--model", dest="model_family",
                   choices=["linear", "cat", "doubling", "pitchfork", "hopf"])
    g.add_argument("--matrix", type=_matrix, help="integer matrix as JSON")
    g.add_argument("--t", type=float, help="perturbation parameter")
    g.add_argument("--rho", type=float, help="perturbation strength")
    g.add_argument("--radius", type=float, help="bump radius")
    r = p.add_argument_group("run")
    r.add_argument("--iters", type=int)
    r.add_argument("--samples", type=int)
    r.add_argument("--starts", type=int)
    c = p.add_argument_group("constants")
    c.add_argument("-K", type=int, dest="K", help="Fourier truncation")
    c.add_argument("--c", type=float, help="hyperbolic-time constant")
    c.add_argument("--grid", type=int, help="certificate grid resolution (>= 32)")
    c.add_argument("--delta", type=float, help="disk radius")
    c.add_argument("--depth", type=int, help="pre-orbit / pull-back depth")
    c.add_argument("--resolution", type=int, help="measure bins per axis")
    if kind == "sweep":
        s = p.add_argument_group("sweep")
        s.add_argument("--family", choices=["pitchfork-t", "pitchfork-rho", "hopf-t", "constant"])
        s.add_argument("--t-range", help="start:stop:step")
        s.add_argument("--no-refine", action="store_true", help="skip the halved-step grid")
        s.add_argument("--no-entropy", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="srblab", description="SRB measure laboratory for torus endomorphisms.",
        epilog=COMMON_EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="kind", required=True, metavar="subcommand")
    helps = {"check": "certify the partial hyperbolicity constants",
             "srb": "Cesaro averages of an unstable disk",
             "hyptimes": "hyperbolic times along an ensemble of orbits",
             "lyapunov": "Lyapunov spectrum by QR iteration",
             "entropy": "entropy via the unstable Jacobian and via Pesin",
             "sweep": "statistical stability along a one-parameter family",
             "unstable": "unstable directions over hyperbolic pre-orbits",
             "preimages": "all preimages of given points"}
    for kind in KINDS:
        p = sub.add_parser(kind, help=helps[kind], description=helps[kind],
                           epilog=FORMATS[kind] + "\n" + COMMON_EPILOG,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        _add_common(p, kind)
    return parser


def overrides_from_args(a: argparse.Namespace) -> dict:
    o = {"kind": a.kind,
         "model.family": a.model_family, "model.matrix": a.matrix, "model.t": a.t,
         "model.rho": a.rho, "model.radius": a.radius,
         "run.iters": a.iters, "run.samples": a.samples, "run.starts": a.starts,
         "run.seed": a.seed, "run.out": a.out, "run.workers": a.workers,
         "constants.K": a.K, "constants.c": a.c, "constants.grid": a.grid,
         "constants.delta": a.delta, "constants.depth": a.depth,
         "constants.resolution": a.resolution}
    if a.kind == "sweep":
        o.update({"sweep.family": a.family, "sweep.t_range": a.t_range})
        if a.no_refine:
            o["sweep.refine"] = False
        if a.no_entropy:
            o["sweep.entropy"] = False
    return o


def main(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors; those count as invalid input here
        return EXIT_OK if e.code == 0 else EXIT_INVALID
    try:
        ov = overrides_from_args(a)
        cfg = load_config(a.config, ov) if a.config else parse_config("", ov)
    except ConfigError as e:
        for err in e.errors:
            print(f"srblab: invalid configuration: {err}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as e:
        print(f"srblab: cannot read config: {e}", file=sys.stderr)
        return EXIT_INVALID
    try:
        man = run_experiment(cfg, workers=cfg.run.workers, record_time=a.record_time)
    except Exception as e:  # noqa: BLE001 - reported as a runtime failure
        print(f"srblab: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    for f in man.files:
        print(f["name"])
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
