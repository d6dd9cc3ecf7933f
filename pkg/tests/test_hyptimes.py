import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from srblab import models
from srblab.conditions import certified_cones
from srblab.hyptimes import (NonpositiveC, detect_hyperbolic_times, ensemble_table,
                             pliss_times, record_orbit, rows_to_csv, select_c,
                             verify_expansion_at_times)


def _brute(a, c):
    a = np.asarray(a, float)
    return [n for n in range(1, len(a) + 1)
            if all(a[n - k:n].sum() <= -c * k + 1e-12 for k in range(1, n + 1))]


def test_worked_sequence():
    assert list(pliss_times([-1.0, 0.5, -1.0, -1.0], 0.5)) == [1, 4]
    assert list(pliss_times([-1.0, 0.5, -2.0, -1.0], 0.5)) == [1, 3, 4]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(-8, 8), min_size=1, max_size=40), st.integers(1, 4))
def test_scan_matches_brute_force(ints, c4):
    # dyadic values keep the partial sums exact
    a = [v / 4 for v in ints]
    c = c4 / 4
    assert list(pliss_times(a, c)) == _brute(a, c)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-8, 8), min_size=1, max_size=30),
       st.lists(st.integers(-8, 8), min_size=1, max_size=30))
def test_concatenation(u, v):
    # a hyperbolic time of the first block followed by one of the second block
    # relative to its own start is hyperbolic for the concatenation
    a, b = [x / 4 for x in u], [x / 4 for x in v]
    c = 0.25
    ta, tb = set(pliss_times(a, c)), set(pliss_times(b, c))
    tab = set(pliss_times(a + b, c))
    if len(a) in ta:
        assert {len(a) + t for t in tb} <= tab


def test_linear_every_time_is_hyperbolic():
    m = models.cat_map()
    cu, cs = certified_cones(m)
    rec = record_orbit(m, [0.2, 0.3], 200, cu, cs)
    rep = detect_hyperbolic_times(rec, 0.5)
    assert rep.frequency_hat == 1.0
    assert verify_expansion_at_times(rec, rep, m, cu, max_pairs=None) == 0.0


def test_nonpositive_c():
    with pytest.raises(NonpositiveC):
        detect_hyperbolic_times([-1.0], 0.0)


def test_select_c():
    assert select_c([-1.0, -0.8, -1.2]) == pytest.approx(0.5)
    with pytest.raises(NonpositiveC):
        select_c([0.1, 0.2])


def test_ensemble_csv():
    rows = ensemble_table(np.array([[-1.0, 0.5, -1.0, -1.0]]), 0.5)
    assert rows[0].n_detected == 2
    assert rows_to_csv(rows).splitlines() == ["orbit_id,n_detected,frequency_hat,birkhoff_avg",
                                              "0,2,0.5,-0.625"]
