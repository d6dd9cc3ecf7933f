import numpy as np
import pytest

from srblab import models
from srblab.conditions import (InvalidCertificate, birkhoff_bound, derive_birkhoff_bound,
                               spot_check)


def test_birkhoff_bound_arithmetic():
    expected = 0.6 * np.log(0.95) + 0.4 * np.log(1.5)
    assert birkhoff_bound(0.95, 1.5, 0.6) == pytest.approx(expected, rel=1e-14)
    assert birkhoff_bound(0.95, 1.5, 0.6) == pytest.approx(0.1314101, abs=1e-7)


def test_cat_certificate(certified):
    m, cu, cs, cert = certified("cat")
    assert cert.valid
    assert cert.O_region.empty
    assert cert.L == pytest.approx(cert.lambda_u)
    assert np.exp(0.85) < cert.L <= 2.618034
    assert cert.c == pytest.approx(np.log(cert.lambda_u))
    assert derive_birkhoff_bound(cert) == pytest.approx(cert.c)
    assert all(v <= 0 for v in spot_check(m, cert, cu, cs, n=500).values())


def test_3d_sigma(certified):
    _, _, _, cert = certified("linear3")
    assert cert.valid
    assert 2.0 < cert.sigma <= 5.236068


def test_doubling_has_no_stable_bundle(certified):
    _, _, cs, cert = certified("doubling")
    assert cs is None
    assert cert.valid
    assert cert.c == pytest.approx(np.log(2), abs=1e-9)


def test_pitchfork_certificate(certified):
    m, cu, cs, cert = certified("pitchfork")
    assert cert.valid
    assert cert.L < 1 < cert.lambda_u
    assert 0 < cert.c < np.log(cert.lambda_u)
    assert all(v <= 0 for v in spot_check(m, cert, cu, cs, n=500).values())


def test_invalid_certificate_refuses_bound():
    from srblab.conditions import certified_cones, certify

    m = models.pitchfork(rho=0.3)
    cu, cs = certified_cones(m)
    cert = certify(m, cu, cs, gamma0=0.1)
    assert not cert.valid
    assert cert.violations
    with pytest.raises(InvalidCertificate):
        derive_birkhoff_bound(cert)
