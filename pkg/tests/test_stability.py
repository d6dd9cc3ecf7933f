import numpy as np
import pytest

from srblab import models
from srblab.measures import dirac, lebesgue
from srblab.stability import Family, SweepSettings, convex_fit, stability_sweep


def test_convex_fit_recovers_weights():
    a = dirac([0.2, 0.2], resolution=8)
    b = lebesgue(2, resolution=8)
    target = a.scaled(0.3) + b.scaled(0.7)
    w, d = convex_fit(target, [a, b])
    assert w == pytest.approx([0.3, 0.7], abs=1e-6)
    assert d < 1e-6


def test_family_models():
    J = Family("pitchfork-t").model(0.0).jacobian(np.zeros((1, 3)))[0]
    assert np.allclose(J, models.pitchfork_matrix())
    assert Family("hopf-t").model(1.0).hopf_modulus == pytest.approx(0.5)
    with pytest.raises(ValueError):
        Family("nope").model(0.0)


def test_out_of_class_is_flagged():
    ok, why = Family("pitchfork-rho").admissible(0.3)
    assert not ok and "admissible interval" in why
    assert Family("pitchfork-rho").admissible(0.8)[0]


def test_small_sweep_rows():
    s = SweepSettings(n=20, samples=500, entropy=False)
    rep = stability_sweep(Family("pitchfork-rho"), [0.3, 0.8], s, workers=1)
    assert [r.t for r in rep.rows] == [0.3, 0.8]
    assert rep.rows[0].valid is False
    assert rep.rows[1].valid is True
    assert rep.distances[0] is not None
    assert rep.to_csv().startswith("t,")
