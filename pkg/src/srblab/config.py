"""Experiment configuration: TOML text in, validated dataclasses out.

Every problem found is collected and reported together. Syntax errors carry a
line and column, validation errors the dotted key path.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import models

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

KINDS = ("check", "srb", "hyptimes", "lyapunov", "entropy", "sweep", "unstable", "preimages")
MODEL_FAMILIES = ("linear", "cat", "doubling", "pitchfork", "hopf")
SWEEP_FAMILIES = ("pitchfork-t", "pitchfork-rho", "hopf-t", "constant")
# the pitchfork strength whose certificate passes on the default cones
PITCHFORK_RHO = 0.8


class ConfigError(ValueError):
    """Base class; ``errors`` lists every problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(str(e) for e in self.errors))


@dataclass
class ParseError:
    message: str
    line: int
    column: int

    def __str__(self):
        return f"line {self.line}, column {self.column}: {self.message}"


@dataclass
class ValidationError:
    path: str
    message: str

    def __str__(self):
        return f"{self.path}: {self.message}"


class ConfigParseError(ConfigError):
    pass


class ConfigValidationError(ConfigError):
    pass


# --------------------------------------------------------------------------
# sections


@dataclass
class ModelSection:
    family: str = "cat"
    matrix: list | None = None
    t: float = 1.0
    rho: float | None = None
    radius: float = 0.1
    n: int = 2
    stable_stretch: float = 1.0


@dataclass
class ConeSection:
    a: float = 0.5
    a_stable: float = 1.5


@dataclass
class ConstantsSection:
    c: float | None = None
    delta: float = 0.05
    grid: int = 32
    K: int = 8
    depth: int = 40
    resolution: int | None = None


@dataclass
class RunSection:
    iters: int = 1000
    samples: int = 10_000
    starts: int = 200
    seed: int = 0
    out: str | None = None
    workers: int | None = None
    points: list | None = None


@dataclass
class SweepSection:
    family: str = "pitchfork-t"
    t_range: str = "0:1:0.25"
    refine: bool = True
    entropy: bool = True
    rho: float | None = None


@dataclass
class ExperimentConfig:
    kind: str = "srb"
    model: ModelSection = field(default_factory=ModelSection)
    cone: ConeSection = field(default_factory=ConeSection)
    constants: ConstantsSection = field(default_factory=ConstantsSection)
    run: RunSection = field(default_factory=RunSection)
    sweep: SweepSection = field(default_factory=SweepSection)

    def canonical(self) -> dict:
        """Everything that influences results (not the output location or worker count)."""
        d = asdict(self)
        d["run"].pop("out")
        d["run"].pop("workers")
        return d

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


SECTIONS = {"model": ModelSection, "cone": ConeSection, "constants": ConstantsSection,
            "run": RunSection, "sweep": SweepSection}


# --------------------------------------------------------------------------
# parsing


def _loads(text: str) -> dict:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        line = getattr(e, "lineno", 0) or 0
        col = getattr(e, "colno", 0) or 0
        msg = getattr(e, "msg", str(e))
        raise ConfigParseError([ParseError(msg, line, col)]) from None


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


_TYPES = {
    ("model", "family"): str, ("model", "matrix"): list, ("model", "t"): "num",
    ("model", "rho"): "num", ("model", "radius"): "num", ("model", "n"): "int",
    ("model", "stable_stretch"): "num",
    ("cone", "a"): "num", ("cone", "a_stable"): "num",
    ("constants", "c"): "num", ("constants", "delta"): "num", ("constants", "grid"): "int",
    ("constants", "K"): "int", ("constants", "depth"): "int", ("constants", "resolution"): "int",
    ("run", "iters"): "int", ("run", "samples"): "int", ("run", "starts"): "int",
    ("run", "seed"): "int", ("run", "out"): str, ("run", "workers"): "int",
    ("run", "points"): list,
    ("sweep", "family"): str, ("sweep", "t_range"): str, ("sweep", "refine"): bool,
    ("sweep", "entropy"): bool, ("sweep", "rho"): "num",
}


def _type_ok(v, want) -> bool:
    if want == "num":
        return _is_num(v)
    if want == "int":
        return _is_int(v)
    return isinstance(v, want)


def _type_name(want) -> str:
    return {"num": "number", "int": "integer"}.get(want, getattr(want, "__name__", str(want)))


def parse_t_range(spec: str) -> list[float]:
    """``start:stop:step`` (inclusive of ``stop`` up to rounding) as a list."""
    parts = spec.split(":")
    if len(parts) != 3:
        raise ValueError("expected start:stop:step")
    a, b, h = (float(p) for p in parts)
    if h <= 0 or b < a:
        raise ValueError("need step > 0 and stop >= start")
    n = int(np.floor((b - a) / h + 1e-9))
    return [round(a + i * h, 12) for i in range(n + 1)]


def parse_config(text: str, overrides: dict | None = None) -> ExperimentConfig:
    """Parse and validate a TOML experiment description.

    ``overrides`` maps ``"section.key"`` (or ``"kind"``) to values applied
    after parsing, as the command line does. Raises
    :class:`ConfigParseError` or :class:`ConfigValidationError` listing every
    problem.
    """
    raw = _loads(text) if text.strip() else {}
    for key, v in (overrides or {}).items():
        if v is None:
            continue
        if "." in key:
            sec, k = key.split(".", 1)
            raw.setdefault(sec, {})[k] = v
        else:
            raw[key] = v
    errors: list[ValidationError] = []
    cfg = ExperimentConfig()
    for key, v in raw.items():
        if key == "kind":
            if not isinstance(v, str) or v not in KINDS:
                errors.append(ValidationError("kind", f"must be one of {', '.join(KINDS)}"))
            else:
                cfg.kind = v
            continue
        if key not in SECTIONS:
            errors.append(ValidationError(key, "unknown key"))
            continue
        if not isinstance(v, dict):
            errors.append(ValidationError(key, "must be a table"))
            continue
        sec = getattr(cfg, key)
        names = {f.name for f in fields(sec)}
        for k, val in v.items():
            path = f"{key}.{k}"
            if k not in names:
                errors.append(ValidationError(path, "unknown key"))
            elif not _type_ok(val, _TYPES[(key, k)]):
                errors.append(ValidationError(path, f"must be a {_type_name(_TYPES[(key, k)])}"))
            else:
                setattr(sec, k, float(val) if _TYPES[(key, k)] == "num" else val)
    errors += _validate(cfg, raw)
    if errors:
        raise ConfigValidationError(errors)
    return cfg


def _positive(errors, path, v, strict=True):
    if v is not None and (v <= 0 if strict else v < 0):
        errors.append(ValidationError(path, "must be positive" if strict else "must be >= 0"))


def _validate(cfg: ExperimentConfig, raw: dict) -> list:
    errors: list[ValidationError] = []
    m = cfg.model
    if m.family not in MODEL_FAMILIES:
        errors.append(ValidationError("model.family", f"must be one of {', '.join(MODEL_FAMILIES)}"))
    if m.family == "linear" and m.matrix is None:
        errors.append(ValidationError("model.matrix", "required for the linear family"))
    if m.matrix is not None:
        errors += _check_matrix(m.matrix)
    if m.family == "pitchfork":
        if not 0.0 <= m.t <= 1.0:
            errors.append(ValidationError("model.t", "must lie in [0, 1]"))
        rho = PITCHFORK_RHO if m.rho is None else m.rho
        lo, hi = models.pitchfork_rho_interval(m.n)
        if not lo < rho < hi:
            errors.append(ValidationError(
                "model.rho", f"rho={rho:g} outside the admissible interval ({lo:.3f}, {hi:g}) "
                             f"for the pitchfork matrix with n={m.n}"))
    if m.family == "hopf":
        if not -1.0 <= m.t <= 1.0:
            errors.append(ValidationError("model.t", "must lie in [-1, 1]"))
        if m.rho is not None and not 0 < m.rho < 1:
            errors.append(ValidationError("model.rho", "must lie in (0, 1)"))
    if not 0 < m.radius < 0.5:
        errors.append(ValidationError("model.radius", "must lie in (0, 0.5)"))
    _positive(errors, "model.stable_stretch", m.stable_stretch)
    _positive(errors, "cone.a", cfg.cone.a)
    _positive(errors, "cone.a_stable", cfg.cone.a_stable)
    k = cfg.constants
    _positive(errors, "constants.c", k.c)
    _positive(errors, "constants.delta", k.delta)
    if k.grid < 32:
        errors.append(ValidationError("constants.grid", "must be at least 32"))
    _positive(errors, "constants.K", k.K)
    _positive(errors, "constants.depth", k.depth)
    _positive(errors, "constants.resolution", k.resolution)
    r = cfg.run
    for name in ("iters", "samples"):
        _positive(errors, f"run.{name}", getattr(r, name))
    _positive(errors, "run.starts", r.starts, strict=False)
    _positive(errors, "run.seed", r.seed, strict=False)
    _positive(errors, "run.workers", r.workers)
    if r.points is not None:
        try:
            P = np.asarray(r.points, dtype=float)
            if P.ndim != 2:
                raise ValueError
        except (ValueError, TypeError):
            errors.append(ValidationError("run.points", "must be a list of coordinate lists"))
    s = cfg.sweep
    if s.family not in SWEEP_FAMILIES:
        errors.append(ValidationError("sweep.family", f"must be one of {', '.join(SWEEP_FAMILIES)}"))
    try:
        parse_t_range(s.t_range)
    except ValueError as e:
        errors.append(ValidationError("sweep.t_range", str(e)))
    return errors


def _check_matrix(M) -> list:
    errs = []
    try:
        A = np.array(M)
    except ValueError:
        return [ValidationError("model.matrix", "rows must have equal length")]
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        return [ValidationError("model.matrix", "must be a square list of lists")]
    if A.dtype.kind not in "iu":
        return [ValidationError("model.matrix", "entries must be integers")]
    if A.shape[0] > 3:
        errs.append(ValidationError("model.matrix", "dimension must be at most 3"))
    if round(np.linalg.det(A.astype(float))) == 0:
        errs.append(ValidationError("model.matrix", "matrix singular"))
    return errs


# --------------------------------------------------------------------------


def build_model(m: ModelSection) -> models.MapModel:
    if m.family == "linear":
        return models.linear(m.matrix)
    if m.family == "cat":
        return models.cat_map() if m.matrix is None else models.linear(m.matrix, "cat")
    if m.family == "doubling":
        return models.doubling()
    if m.family == "pitchfork":
        return models.pitchfork(n=m.n, rho=PITCHFORK_RHO if m.rho is None else m.rho, t=m.t,
                                radius=m.radius, stable_stretch=m.stable_stretch)
    kw = {} if m.matrix is None else {"matrix": m.matrix}
    return models.hopf(t=m.t, rho=0.5 if m.rho is None else m.rho, radius=m.radius,
                       stable_stretch=m.stable_stretch, **kw)


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), overrides)
