import numpy as np
import pytest

from srblab import models
from srblab.conditions import certified_cones
from srblab.natext import (disk_disjointness_probe, extend_preorbit, hyperbolic_preorbit,
                           orbit_word, preorbit_distance, unstable_direction,
                           verify_backward_contraction)

PHI = (1 + 5**0.5) / 2


def test_doubling_word():
    pre = extend_preorbit(models.doubling(), [0.0], (2, 1, 1))
    assert np.allclose(pre.points[:, 0], [0.0, 0.5, 0.25, 0.125])
    assert pre.shifted().word == (1, 1)
    assert pre.truncated(1).points.shape == (2, 1)


def test_pitchfork_matrix_two_branches():
    m = models.linear(models.pitchfork_matrix())
    a = extend_preorbit(m, [0.0, 0.0, 0.0], (1,)).points[1]
    b = extend_preorbit(m, [0.0, 0.0, 0.0], (2,)).points[1]
    assert np.allclose(a, 0) and np.allclose(b, [0, 0, 0.5])


def test_orbit_word_reproduces_orbit():
    m = models.doubling()
    orbit = m.orbit([0.1234], 12, seed=0)
    word = orbit_word(m, orbit)
    pre = extend_preorbit(m, orbit[-1], word)
    assert np.allclose(pre.points[::-1, 0], orbit[:, 0], atol=1e-9)


def test_preorbit_distance():
    m = models.doubling()
    p = extend_preorbit(m, [0.0], (1, 1))
    q = extend_preorbit(m, [0.0], (2, 1))
    assert preorbit_distance(p, p) == 0.0
    assert preorbit_distance(p, q) == pytest.approx(0.5 * 0.5 + 0.25 * 0.25)


def test_cat_unstable_direction():
    m = models.cat_map()
    cu, _ = certified_cones(m)
    pre = extend_preorbit(m, [0.3, 0.1], (1,) * 40)
    est = unstable_direction(m, pre, cu)
    u = np.array([1.0, 1 / PHI]) / np.hypot(1, 1 / PHI)
    assert abs(abs(est.frame[:, 0] @ u) - 1) < 1e-8
    assert verify_backward_contraction(m, pre, est, 2 * np.log(PHI**2)) == pytest.approx(0, abs=1e-9)


def test_3d_unstable_plane_and_defect():
    m = models.linear(models.pitchfork_matrix())
    cu, _ = certified_cones(m)
    pre = extend_preorbit(m, [0.3, 0.1, 0.7], np.random.default_rng(2).integers(1, 3, 40))
    est = unstable_direction(m, pre, cu)
    P = est.frame @ est.frame.T
    u = np.array([1.0, 1 / PHI, 0.0]) / np.hypot(1, 1 / PHI)
    assert np.allclose(P @ u, u, atol=1e-8)
    assert np.allclose(P @ [0, 0, 1.0], [0, 0, 1.0], atol=1e-8)
    assert verify_backward_contraction(m, pre, est, 1.3) == 0.0
    assert verify_backward_contraction(m, pre, est, 2.0) > 0.0


def test_hyperbolic_preorbit_ends_at_hyperbolic_time():
    m = models.pitchfork(rho=0.8)
    cu, _ = certified_cones(m)
    pre = hyperbolic_preorbit(m, [0.31, 0.17, 0.53], 0.2, cu, depth=20, horizon=200)
    assert pre is not None and pre.depth == 20
    assert np.allclose(m.step(pre.points[1:]), pre.points[:-1], atol=1e-9)
    est = unstable_direction(m, pre, cu, tol=None)
    assert verify_backward_contraction(m, pre, est, 0.2) == 0.0


def test_disjointness_probe():
    t = np.linspace(0, 0.1, 50)
    a = np.stack([t, np.zeros_like(t)], axis=1)
    assert disk_disjointness_probe(a, a) == "coincide"
    assert disk_disjointness_probe(a, a + [0, 0.3]) == "disjoint"
    assert disk_disjointness_probe(a, np.vstack([a[:10], a[10:] + [0, 0.3]])) == "violation"
