import textwrap

import numpy as np
import pytest

from multirate.config import load_config, load_config_text, parse_overrides, resolve_problem
from multirate.errors import ConfigError, ValidationError

ODE_TEXT = textwrap.dedent("""\
    kind: ode
    name: my-lin
    A_SS: [[-1.0]]
    A_SF: [[0.1]]
    A_FS: [[0.2]]
    A_FF: [[-10.0]]
    y_slow0: [1.0]
    y_fast0: [1.0]
    t_end: 1.0
""")

DAE_TEXT = textwrap.dedent("""\
    kind: dae
    A_SS: [[-1.0]]
    B_SF: [[1.0]]
    A_FF: [[-10.0]]
    B_FS: [[1.0]]
    C_SS: [[-1.0]]
    D_SS: [[1.0]]
    D_SF: [[-0.5]]
    C_FF: [[-1.0]]
    D_FF: [[1.0]]
    D_FS: [[-0.25]]
    y_slow0: [1.0]
    y_fast0: [1.0]
    t_end: 0.5
""")


def test_ode_file_matches_catalog(tmp_path):
    path = tmp_path / "lin.yaml"
    path.write_text(ODE_TEXT)
    entry = load_config(str(path))
    assert entry.id == "my-lin" and not entry.is_dae
    lin2 = resolve_problem("lin2", None)
    np.testing.assert_allclose(entry.reference(0.7)["y_fast"], lin2.reference(0.7)["y_fast"], rtol=0, atol=1e-15)


def test_dae_file():
    entry = load_config_text(DAE_TEXT, "dae.yaml")
    assert entry.is_dae and entry.problem.t_end == 0.5
    assert entry.reference(0.0)["z_slow"][0] == pytest.approx(1.5 / 0.875, abs=1e-14)
    assert entry.id == "dae"


def test_catalog_reference():
    entry = load_config_text("problem: dae-lin\nparams: {b: 0.5, d: 0.25}\n")
    assert entry.metadata["alpha"] == (0.5, 0.25)


def test_unknown_field_cites_line():
    with pytest.raises(ConfigError, match=r"x\.yaml:3: field 'A_XY'"):
        load_config_text("kind: ode\ny_slow0: [1]\nA_XY: [[1]]\ny_fast0: [1]\nt_end: 1\n", "x.yaml")


def test_bad_matrix_cites_field():
    text = ODE_TEXT.replace("A_SF: [[0.1]]", "A_SF: [[0.1, 0.2]]")
    with pytest.raises(ConfigError, match=r"c\.yaml:4: field 'A_SF'"):
        load_config_text(text, "c.yaml")


def test_non_numeric_entry():
    with pytest.raises(ConfigError, match="field 'y_fast0'"):
        load_config_text(ODE_TEXT.replace("y_fast0: [1.0]", "y_fast0: [one]"))


def test_missing_required():
    with pytest.raises(ConfigError, match="missing required field 't_end'"):
        load_config_text("y_slow0: [1]\ny_fast0: [1]\n")


def test_malformed_yaml_line():
    with pytest.raises(ConfigError, match=r"m\.yaml:2: malformed"):
        load_config_text("kind: ode\ny_slow0: @1\nt_end: 1\n", "m.yaml")


def test_bad_kind():
    with pytest.raises(ConfigError, match="'kind'"):
        load_config_text("kind: pde\ny_slow0: [1]\ny_fast0: [1]\nt_end: 1\n")


def test_config_error_is_validation_error():
    assert issubclass(ConfigError, ValidationError)


def test_missing_file():
    with pytest.raises(ConfigError, match="cannot read"):
        load_config("/nonexistent/problem.yaml")


class TestOverrides:
    def test_parse(self):
        assert parse_overrides("b=0.5, d=0.25") == {"b": 0.5, "d": 0.25}

    def test_malformed(self):
        with pytest.raises(ConfigError):
            parse_overrides("b0.5")

    def test_resolve_with_overrides_and_horizon(self):
        entry = resolve_problem("dae-lin", "b=0.5,d=0.25", t_end=2.0)
        assert entry.problem.t_end == 2.0 and entry.metadata["alpha"] == (0.5, 0.25)

    def test_unknown_parameter(self):
        with pytest.raises(ValidationError):
            resolve_problem("dae-lin", "q=1")

    def test_nothing_given(self):
        with pytest.raises(ConfigError):
            resolve_problem(None, None)
