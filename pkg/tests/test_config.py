"""Configuration schema: defaults, validation, overrides, round-trips."""

import json

import pytest

from cns.config import (ConfigError, apply_override, parse_config, serialize,
                        validate)


def minimal():
    return {"grid": {"N1": 16, "N2": 16, "Nz": 17}}


def test_minimal_config_fills_defaults():
    rc = validate(minimal())
    assert rc["grid"]["L1"] == pytest.approx(2.0 * 3.141592653589793)
    assert rc["grid"]["b"] == 1.0
    assert rc["time"]["dt"] == 1e-3
    assert rc["time"]["T"] == 1.0
    assert rc["physics"]["gamma"] == 1.0
    assert rc["physics"]["sigma"] == 1.0
    assert rc["physics"]["c_hat"] == 1.0
    assert rc["picard"]["diff_tol"] == 1e-8
    assert rc["picard"]["max_sweeps"] == 30


def test_grid_size_validation_message():
    doc = minimal()
    doc["grid"]["N1"] = 0
    with pytest.raises(ConfigError, match="N1 must be ≥4 and even"):
        validate(doc)
    doc = minimal()
    doc["grid"]["N2"] = 7
    with pytest.raises(ConfigError, match="N2 must be ≥4 and even"):
        validate(doc)


def test_unknown_keys_rejected_by_name():
    doc = minimal()
    doc["grids"] = {}
    with pytest.raises(ConfigError, match="unknown configuration key: grids"):
        validate(doc)
    doc = minimal()
    doc["grid"]["NZ"] = 17
    with pytest.raises(ConfigError,
                       match="unknown configuration key: grid.NZ"):
        validate(doc)


def test_type_mismatch_reports_dotted_path():
    doc = minimal()
    doc["time"] = {"dt": "fast"}
    with pytest.raises(ConfigError, match="time.dt"):
        validate(doc)


def test_missing_required_key():
    with pytest.raises(ConfigError, match="grid.Nz"):
        validate({"grid": {"N1": 16, "N2": 16}})


def test_int_promoted_to_float_but_not_bool():
    doc = minimal()
    doc["physics"] = {"gamma": 2}
    assert validate(doc)["physics"]["gamma"] == 2.0
    doc["physics"] = {"gamma": True}
    with pytest.raises(ConfigError):
        validate(doc)


def test_round_trip_serialize_parse():
    rc = validate({"grid": {"N1": 8, "N2": 12, "Nz": 9, "b": 0.5},
                   "time": {"dt": 2e-3, "T": 0.1},
                   "data": {"seed": 11, "amplitude": 0.02}})
    text = serialize(rc)
    rc2 = parse_config(text)
    assert rc2.to_dict() == rc.to_dict()
    assert serialize(rc2) == text


def test_parse_config_from_file(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(minimal()))
    rc = parse_config(str(path))
    assert rc["grid"]["N1"] == 16


def test_invalid_json_is_config_error():
    with pytest.raises(ConfigError, match="invalid JSON"):
        parse_config("{not json")


def test_apply_override_types_and_paths():
    doc = minimal()
    apply_override(doc, "grid.N1=64")
    apply_override(doc, "time.dt=0.002")
    apply_override(doc, "mms.solver=stokes")
    apply_override(doc, "output.energy_csv=false")
    rc = validate(doc)
    assert rc["grid"]["N1"] == 64
    assert rc["time"]["dt"] == 0.002
    assert rc["mms"]["solver"] == "stokes"
    assert rc["output"]["energy_csv"] is False


def test_apply_override_malformed():
    with pytest.raises(ConfigError):
        apply_override(minimal(), "grid.N1")
    with pytest.raises(ConfigError):
        apply_override(minimal(), ".=3")


def test_build_grid_and_step_count():
    rc = validate({"grid": {"N1": 8, "N2": 8, "Nz": 9},
                   "time": {"dt": 1e-2, "T": 0.5}})
    g = rc.build_grid()
    assert g.Nt == 50
    assert g.T == pytest.approx(0.5)


def test_build_grid_rejects_non_multiple_horizon():
    rc = validate({"grid": {"N1": 8, "N2": 8, "Nz": 9},
                   "time": {"dt": 3e-3, "T": 0.01}})
    with pytest.raises(ConfigError, match="integer multiple"):
        rc.build_grid()


def test_nz_minimum_for_staggered_solver():
    doc = minimal()
    doc["grid"]["Nz"] = 4
    with pytest.raises(ConfigError, match="Nz must be ≥5"):
        validate(doc)


def test_potential_callback():
    rc = validate(minimal())
    assert rc.potential() is None
    doc = minimal()
    doc["physics"] = {"potential_slope": 0.5}
    phi = validate(doc).potential()
    assert phi(0.0, 0.0, -0.3, 0.0) == pytest.approx(-0.15)
