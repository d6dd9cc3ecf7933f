"""Points and modular arithmetic on the flat torus T^d = R^d / Z^d."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def wrap(x):
    """Reduce coordinates into [0, 1)."""
    x = np.asarray(x, dtype=float)
    y = x - np.floor(x)
    # floor can leave exactly 1.0 after rounding of tiny negatives
    return np.where(y >= 1.0, 0.0, y)


def delta(x, y):
    """Shortest displacement from ``y`` to ``x``, componentwise in [-1/2, 1/2)."""
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return d - np.floor(d + 0.5)


def dist(x, y):
    """Torus (quotient Euclidean) distance; broadcasts over leading axes."""
    return np.linalg.norm(delta(x, y), axis=-1)


@dataclass(frozen=True)
class TorusPoint:
    """A point of T^d with coordinates kept in [0, 1)."""

    coords: tuple

    def __post_init__(self):
        c = wrap(np.atleast_1d(np.asarray(self.coords, dtype=float)))
        if c.ndim != 1 or not 1 <= c.size <= 3:
            raise ValueError(f"torus dimension must be 1, 2 or 3, got {c.shape}")
        object.__setattr__(self, "coords", tuple(float(v) for v in c))

    @property
    def dim(self) -> int:
        return len(self.coords)

    def array(self) -> np.ndarray:
        return np.array(self.coords)

    def __add__(self, other):
        o = other.array() if isinstance(other, TorusPoint) else np.asarray(other, float)
        return TorusPoint(self.array() + o)

    def __sub__(self, other):
        o = other.array() if isinstance(other, TorusPoint) else np.asarray(other, float)
        return TorusPoint(self.array() - o)

    def distance(self, other: "TorusPoint") -> float:
        return float(dist(self.array(), other.array()))


def as_points(x, d: int | None = None) -> np.ndarray:
    """Coerce a TorusPoint, sequence or array into an (N, d) float array."""
    if isinstance(x, TorusPoint):
        x = x.array()
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1) if d is None or a.size == d else a.reshape(-1, 1)
    if d is not None and a.shape[-1] != d:
        raise ValueError(f"expected points of dimension {d}, got shape {a.shape}")
    return a
