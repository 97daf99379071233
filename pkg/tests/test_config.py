import json

import pytest

from fedprio.config import (
    DEFAULT_DEVICE_FRACTIONS,
    DEFAULT_TARGETS,
    experiment_id,
    parse_config,
    parse_config_dict,
    parse_sweep_dict,
)
from fedprio.errors import ConfigurationError

MINIMAL = {
    "seed": 42,
    "dataset": {"kind": "synthetic_multiclass"},
}


def binary_dataset():
    return {"kind": "synthetic_binary_users", "num_users": 10}


def test_minimal_config_gets_protocol_defaults():
    cfg = parse_config_dict(dict(MINIMAL))
    assert cfg.seed == 42
    assert cfg.trainer.local_epochs == 5
    assert cfg.trainer.client_fraction == 0.1
    assert cfg.trainer.batch_size is None  # full batch
    assert cfg.criteria == ("DS",)
    assert cfg.score_fn == "prioritized"
    assert cfg.targets == DEFAULT_TARGETS
    assert cfg.device_fractions == DEFAULT_DEVICE_FRACTIONS
    assert cfg.hidden_units == 0


def test_parse_config_file(tmp_path):
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(MINIMAL))
    assert parse_config(path).seed == 42


def test_parse_config_file_errors(tmp_path):
    with pytest.raises(ConfigurationError, match="cannot read"):
        parse_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    with pytest.raises(ConfigurationError, match="invalid JSON"):
        parse_config(bad)


@pytest.mark.parametrize(
    "patch,message",
    [
        ({"criteria": ["DS", "DS"]}, "duplicate criterion"),
        ({"criteria": ["XY"]}, "unknown criterion"),
        ({"criteria": []}, "non-empty"),
        ({"trainer": {"client_fraction": 0}}, "client_fraction"),
        ({"trainer": {"client_fraction": 1.5}}, "client_fraction"),
        ({"trainer": {"learning_rate": 0}}, "learning_rate"),
        ({"trainer": {"local_epochs": 0}}, "local_epochs"),
        ({"targets": [0.8, 0.7]}, "strictly increasing"),
        ({"targets": [0.0]}, "targets"),
        ({"device_fractions": [0.5, 0.5]}, "strictly increasing"),
        ({"score_fn": "median"}, "score_fn"),
        ({"bogus": 1}, "unknown field"),
        ({"seed": "ten"}, "seed"),
    ],
)
def test_invalid_configs_fail_with_field_path(patch, message):
    doc = dict(MINIMAL)
    doc.update(patch)
    with pytest.raises(ConfigurationError, match=message):
        parse_config_dict(doc)


def test_missing_dataset():
    with pytest.raises(ConfigurationError, match="dataset"):
        parse_config_dict({"seed": 1})


def test_cb_rejected_on_multiclass_dataset():
    doc = dict(MINIMAL)
    doc["criteria"] = ["CB"]
    with pytest.raises(ConfigurationError, match="CB requires a binary task"):
        parse_config_dict(doc)


def test_is_rejected_without_sharpness_metadata():
    doc = dict(MINIMAL)
    doc["criteria"] = ["IS"]
    with pytest.raises(ConfigurationError, match="sharpness"):
        parse_config_dict(doc)


def test_cb_is_allowed_on_binary_users():
    cfg = parse_config_dict(
        {"seed": 1, "dataset": binary_dataset(), "criteria": ["CB", "IS", "DS"]}
    )
    assert cfg.criteria == ("CB", "IS", "DS")
    assert cfg.dataset.partition.scheme == "user_keyed"


def test_binary_users_must_stay_user_keyed():
    doc = {
        "seed": 1,
        "dataset": {**binary_dataset(), "partition": {"scheme": "iid"}},
    }
    with pytest.raises(ConfigurationError, match="user_keyed"):
        parse_config_dict(doc)


def test_idx_dataset_requires_paths():
    with pytest.raises(ConfigurationError, match="images"):
        parse_config_dict({"seed": 1, "dataset": {"kind": "idx"}})


def test_experiment_id_format():
    assert experiment_id(("DS",)) == "DS"
    assert experiment_id(("LD", "MW", "DS")) == "LD>MW>DS"


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


def sweep_doc(**extra):
    return {"base": dict(MINIMAL), "criteria_set": ["DS", "LD", "MW"], **extra}


def test_three_criteria_sweep_is_nine_runs():
    sweep = parse_sweep_dict(sweep_doc())
    assert sweep.baseline == ("DS",)
    ids = [experiment_id(o) for o in sweep.orderings]
    assert ids[:2] == ["LD", "MW"]
    assert len(ids) == 8  # plus the baseline = 9 runs
    assert len(set(ids)) == 8
    assert "DS>LD>MW" in ids and "MW>LD>DS" in ids


def test_sweep_deduplicates_orderings_with_warning():
    sweep = parse_sweep_dict(
        sweep_doc(orderings=[["LD", "DS"], ["LD", "DS"], ["DS"]])
    )
    assert sweep.orderings == (("LD", "DS"),)
    assert len(sweep.warnings) == 2


def test_sweep_requires_criteria_set():
    with pytest.raises(ConfigurationError, match="criteria_set"):
        parse_sweep_dict({"base": dict(MINIMAL)})


def test_sweep_explicit_orderings():
    sweep = parse_sweep_dict(sweep_doc(orderings=[["MW", "DS"]]))
    assert sweep.orderings == (("MW", "DS"),)
