import pytest

from qmixlab.config import (
    ALGORITHMS,
    ConfigError,
    build_config,
    config_from_dict,
    load_config,
    save_config,
)


def test_two_step_defaults_follow_published_setup():
    cfg = build_config("two_step", "qmix")
    assert cfg.gamma == 0.99
    assert cfg.lr == 5e-4
    assert cfg.buffer_capacity == 500
    assert cfg.batch_size == 32
    assert cfg.target_update_episodes == 100
    assert cfg.total_env_steps == 10_000
    assert cfg.mixing_embed_dim == 8
    assert cfg.agent_hidden_dim == 64
    assert cfg.eps_start == 1.0 and cfg.eps_end == 1.0
    assert not cfg.recurrent


def test_micro_combat_defaults_follow_published_setup():
    cfg = build_config("micro_combat", "qmix")
    assert cfg.buffer_capacity == 5000
    assert cfg.target_update_episodes == 200
    assert cfg.eps_start == 1.0 and cfg.eps_end == 0.05
    assert cfg.eps_anneal_steps == 50_000
    assert cfg.mixing_embed_dim == 32
    assert cfg.hypernet_bias_hidden == 32
    assert cfg.recurrent
    assert cfg.scenario == "3m"
    assert cfg.eval_period_episodes == 100 and cfg.eval_episodes == 20


def test_overrides_tracked_in_provenance():
    cfg = build_config("two_step", "vdn", overrides={"lr": 1e-3, "batch_size": 32})
    assert cfg.lr == 1e-3
    assert "lr" in cfg.overridden
    assert "batch_size" not in cfg.overridden  # equal to the default
    rows = {name: prov for name, _, prov in cfg.effective_rows()}
    assert rows["lr"] == "override"
    assert rows["gamma"] == "default"


def test_every_field_has_a_provenance_row():
    cfg = build_config("two_step", "qmix")
    names = {name for name, _, _ in cfg.effective_rows()}
    assert {"env", "algorithm", "seed", "gamma", "lr", "buffer_capacity",
            "eval_episodes"} <= names


def test_unknown_field_rejected():
    with pytest.raises(ConfigError):
        build_config("two_step", "qmix", overrides={"learning_rate": 1e-3})


def test_validation_errors_name_the_field():
    with pytest.raises(ConfigError, match="gamma"):
        build_config("two_step", "qmix", overrides={"gamma": 1.0})
    with pytest.raises(ConfigError, match="algorithm"):
        build_config("two_step", "dueling_dqn")
    with pytest.raises(ConfigError, match="env"):
        build_config("chess", "qmix")
    with pytest.raises(ConfigError, match="heuristic"):
        build_config("two_step", "heuristic")
    with pytest.raises(ConfigError, match="batch_size"):
        build_config("two_step", "qmix", overrides={"batch_size": 0})


def test_algorithm_list_is_complete():
    assert set(ALGORITHMS) == {"iql", "vdn", "vdn_s", "qmix", "qmix_lin",
                               "qmix_ns", "heuristic"}


def test_config_file_roundtrip(tmp_path):
    cfg = build_config("micro_combat", "vdn_s", seed=7, overrides={"total_env_steps": 5000})
    path = tmp_path / "run.yaml"
    save_config(cfg, path)
    loaded = load_config(path)
    assert loaded == cfg


def test_config_from_dict_requires_env_and_algorithm():
    with pytest.raises(ConfigError):
        config_from_dict({"algorithm": "qmix"})
    cfg = config_from_dict({"env": "two_step", "algorithm": "qmix", "seed": 3,
                            "lr": 2e-4})
    assert cfg.seed == 3 and cfg.lr == 2e-4
