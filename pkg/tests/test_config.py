import pytest

from srblab.config import (ConfigParseError, ConfigValidationError, build_model, parse_config,
                           parse_t_range)


def test_defaults():
    cfg = parse_config("")
    assert cfg.kind == "srb" and cfg.model.family == "cat"
    assert build_model(cfg.model).degree == 1


def test_full_document():
    cfg = parse_config("""
kind = "sweep"
[model]
family = "pitchfork"
rho = 0.8
t = 0.5
[constants]
K = 6
[run]
seed = 7
[sweep]
family = "pitchfork-t"
t_range = "0:1:0.5"
""")
    assert cfg.kind == "sweep" and cfg.constants.K == 6 and cfg.run.seed == 7
    assert build_model(cfg.model).bump.t == 0.5


def test_syntax_error_has_position():
    with pytest.raises(ConfigParseError) as e:
        parse_config("[model]\nfamily = \n")
    err = e.value.errors[0]
    assert err.line == 2 and err.column > 0
    assert str(err).startswith("line 2, column")


def test_all_errors_reported_together():
    with pytest.raises(ConfigValidationError) as e:
        parse_config('[model]\nfamily = "nope"\nradius = 2.0\n[run]\nsamples = "x"\nbogus = 1\n')
    paths = {err.path for err in e.value.errors}
    assert {"model.family", "model.radius", "run.samples", "run.bogus"} <= paths


def test_singular_matrix():
    with pytest.raises(ConfigValidationError) as e:
        parse_config('[model]\nfamily = "linear"\nmatrix = [[1, 2], [2, 4]]\n')
    assert any("matrix singular" in str(err) for err in e.value.errors)


def test_rho_outside_interval():
    with pytest.raises(ConfigValidationError) as e:
        parse_config('[model]\nfamily = "pitchfork"\nrho = 0.3\n')
    msg = str(e.value)
    assert "model.rho" in msg and "(0.382, 1)" in msg


def test_overrides_win():
    cfg = parse_config('[run]\nseed = 1\n', {"run.seed": 5, "kind": "lyapunov"})
    assert cfg.run.seed == 5 and cfg.kind == "lyapunov"


def test_digest_stable():
    assert parse_config("").digest() == parse_config("[run]\nseed = 0\n").digest()
    assert parse_config("").digest() != parse_config("[run]\nseed = 1\n").digest()


def test_t_range():
    assert parse_t_range("0:1:0.25") == [0.0, 0.25, 0.5, 0.75, 1.0]
    with pytest.raises(ValueError):
        parse_t_range("1:0:0.1")
