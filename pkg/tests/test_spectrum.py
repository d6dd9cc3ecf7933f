import numpy as np
import pytest

from srblab import models
from srblab.spectrum import (entropy_from_formula, lyapunov_ensemble, lyapunov_qr, modulus,
                             multiplicities)

LOG_PHI2 = np.log((3 + 5**0.5) / 2)


def test_multiplicities():
    assert multiplicities([0.5, 0.505, -1.0]) == (2, 1)
    assert multiplicities([LOG_PHI2, np.log(2), -LOG_PHI2]) == (1, 1, 1)


def test_cat_exponents():
    s = lyapunov_qr(models.cat_map(), [0.2, 0.3], 500)
    assert s.exponents == pytest.approx([LOG_PHI2, -LOG_PHI2], abs=1e-3)
    assert s.multiplicities == (1, 1)


def test_3d_exponents():
    s = lyapunov_qr(models.linear(models.pitchfork_matrix()), [0.2, 0.3, 0.4], 500)
    assert s.exponents == pytest.approx([LOG_PHI2, np.log(2), -LOG_PHI2], abs=2e-3)


def test_doubling_exponent():
    s = lyapunov_qr(models.doubling(), [0.1], 200)
    assert s.exponents == pytest.approx([np.log(2)], abs=1e-12)


def test_exponents_sum_to_logdet():
    m = models.pitchfork(rho=0.8)
    ex, _, logdet = lyapunov_ensemble(m, np.random.default_rng(0).random((8, 3)), 400, workers=1)
    assert np.allclose(ex.sum(axis=1), logdet, atol=1e-10)


def test_short_orbit_rejected():
    with pytest.raises(ValueError):
        lyapunov_qr(models.cat_map(), [0.1, 0.2], 50)


@pytest.mark.parametrize("model, h", [(models.cat_map(), LOG_PHI2),
                                      (models.doubling(), np.log(2))])
def test_linear_entropy(model, h):
    rep = entropy_from_formula(model, n_lyap=400, n_starts=8, workers=1)
    assert rep.h_formula == pytest.approx(h, abs=1e-6)
    assert rep.discrepancy < 0.02


def test_modulus():
    assert modulus([0, 0.5, 1.0], [1.0, None, 1.5]) == (0.5, 1.0)
