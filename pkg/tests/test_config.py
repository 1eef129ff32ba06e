import logging

import pytest

from renewcap.config import (ConfigError, ExperimentConfig, dumps, load_config, loads,
                             save_config)
from renewcap.model import ModelParams


def test_empty_file_gives_defaults(tmp_path, caplog):
    path = tmp_path / "empty.toml"
    path.write_text("")
    with caplog.at_level(logging.INFO, logger="renewcap.config"):
        cfg = load_config(path)
    assert cfg == ExperimentConfig()
    assert cfg.model == ModelParams()
    assert cfg.bsde.aux_size == 5000 and cfg.bsde.epochs_terminal == 4000
    assert cfg.control.batch_size == 2000 and cfg.control.epochs == 50
    assert cfg.selector.n_points == 20
    assert "using defaults" in caplog.text and "model.kappa" in caplog.text


def test_partial_file_fills_missing(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text("seed = 4\n[model]\nkappa = 0.0\nx0 = [0.1, 0.2, 0.3]\n")
    cfg = load_config(path)
    assert cfg.seed == 4 and cfg.model.kappa == 0.0 and cfg.model.x0 == (0.1, 0.2, 0.3)
    assert cfg.model.lam1 == 5.0


@pytest.mark.parametrize("fmt", ["toml", "json"])
def test_round_trip(tmp_path, fmt):
    cfg = ExperimentConfig(seed=3, scale=0.5, scheme="exact-latent",
                           model=ModelParams(kappa=0.2, x0=(0.3, 0.5, 0.1)))
    path = tmp_path / f"cfg.{fmt}"
    save_config(cfg, path)
    back = load_config(path)
    assert back == cfg
    assert dumps(back, fmt) == path.read_text()
    assert back.hash() == cfg.hash()


def test_negative_kappa_names_key_and_line():
    text = "seed = 1\n\n[model]\nT = 1.0\nkappa = -0.5\n"
    with pytest.raises(ConfigError) as err:
        loads(text, source="exp.toml")
    assert err.value.key == "model.kappa" and err.value.line == 5
    assert "exp.toml:5" in str(err.value) and "kappa" in str(err.value)


def test_json_error_line():
    text = '{\n  "model": {\n    "T": 1.0,\n    "kappa": -1\n  }\n}\n'
    with pytest.raises(ConfigError) as err:
        loads(text, "json")
    assert err.value.key == "model.kappa" and err.value.line == 4


@pytest.mark.parametrize("text,key", [
    ("[bsde]\nbatch_size = 10\nbatchsize = 3\n", "bsde.batchsize"),
    ("colour = 1\n", "colour"),
    ("[plots]\nx = 1\n", "plots"),
])
def test_unknown_keys_rejected(text, key):
    with pytest.raises(ConfigError) as err:
        loads(text)
    assert err.value.key == key and err.value.line is not None


@pytest.mark.parametrize("text,key", [
    ('seed = "a"\n', "seed"),
    ("[bsde]\nepochs_other = 2.5\n", "bsde.epochs_other"),
    ("[bsde]\ncache_paths = 1\n", "bsde.cache_paths"),
    ("[model]\nx0 = [0.4, 0.7]\n", "model.x0"),
    ("[model]\nx0 = [1.2, 0.7, 0.0]\n", "model.x0"),
    ("scale = 1.5\n", "scale"),
    ('scheme = "milstein"\n', "scheme"),
    ("[control]\nlr = 0\n", "control.lr"),
    ("model = 3\n", "model"),
])
def test_invalid_values(text, key):
    with pytest.raises(ConfigError) as err:
        loads(text)
    assert err.value.key == key


def test_parse_error_has_line():
    with pytest.raises(ConfigError) as err:
        loads("seed = 1\n[model\n")
    assert err.value.line == 2


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.toml")


def test_integers_accepted_for_reals():
    assert loads("[model]\nT = 2\n").model.T == 2.0


def test_derived_solver_configs():
    cfg = ExperimentConfig(seed=9, scale=0.25)
    assert cfg.bsde_config().seed == 9 and cfg.bsde_config().epochs_terminal == 1000
    assert cfg.control_config().M == 50 and cfg.control_config().epochs == 12
    assert ExperimentConfig(seed=1).hash() != ExperimentConfig(seed=2).hash()
    assert ExperimentConfig(out="a").hash() == ExperimentConfig(out="b").hash()
