import yaml

from qmixlab.cli import main
from qmixlab.envs.replay import episodes_in_trace


def test_run_local_writes_artifacts(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["run", "--env", "two_step", "--algo", "vdn", "--seed", "2",
                 "--set", "total_env_steps=200", "--set", "buffer_capacity=30",
                 "--set", "eval_episodes=2", "--out", str(out)])
    assert code == 0
    printed = capsys.readouterr().out
    assert "test_return" in printed
    assert (out / "checkpoint.bin").exists()
    assert (out / "metrics.csv").exists()


def test_run_from_config_file(tmp_path, capsys):
    doc = {"env": "two_step", "algorithm": "iql", "seed": 1,
           "total_env_steps": 120, "buffer_capacity": 20, "eval_episodes": 2}
    cfg_path = tmp_path / "exp.yaml"
    cfg_path.write_text(yaml.safe_dump(doc))
    assert main(["run", "--config", str(cfg_path)]) == 0
    assert "episode" in capsys.readouterr().out


def test_eval_and_dump_qtot(tmp_path, capsys):
    out = tmp_path / "run"
    main(["run", "--env", "two_step", "--algo", "qmix", "--seed", "3",
          "--set", "total_env_steps=200", "--set", "buffer_capacity=30",
          "--set", "eval_episodes=2", "--out", str(out)])
    capsys.readouterr()
    assert main(["eval", "--checkpoint", str(out), "--episodes", "3"]) == 0
    text = capsys.readouterr().out
    assert "mean return" in text
    assert main(["dump-qtot", "--checkpoint", str(out / "checkpoint.bin")]) == 0
    table = capsys.readouterr().out
    assert "state_2b" in table


def test_print_config_shows_provenance(capsys):
    assert main(["print-config", "--env", "micro_combat", "--algo", "qmix"]) == 0
    text = capsys.readouterr().out
    assert "[default]" in text
    assert "buffer_capacity" in text


def test_print_config_from_file(tmp_path, capsys):
    doc = {"env": "two_step", "algorithm": "vdn", "lr": 0.001}
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump(doc))
    assert main(["print-config", "--config", str(path)]) == 0
    text = capsys.readouterr().out
    assert "[override]" in text and "0.001" in text


def test_replay_trace_readable(tmp_path):
    out = tmp_path / "run"
    main(["run", "--env", "micro_combat", "--algo", "vdn", "--seed", "1",
          "--set", "total_env_steps=120", "--set", "buffer_capacity=16",
          "--set", "batch_size=4", "--set", "eval_episodes=2", "--out", str(out)])
    episodes = episodes_in_trace(out / "replays.jsonl")
    assert len(episodes) == 2
    rec = episodes[0][0]
    assert {"state", "obs", "actions", "reward", "terminated", "truncated"} <= set(rec)


def test_cli_run_against_server(tmp_path, capsys, monkeypatch):
    # thin-client mode: the same request goes over HTTP to the service
    import httpx
    from fastapi.testclient import TestClient

    from qmixlab.service.app import create_app

    app = create_app(out_root=tmp_path / "jobs")

    def patched_client(*a, **kw):
        return TestClient(app)

    monkeypatch.setattr(httpx, "Client", patched_client)
    out = tmp_path / "fetched"
    code = main(["run", "--env", "two_step", "--algo", "vdn", "--seed", "5",
                 "--set", "total_env_steps=120", "--set", "buffer_capacity=20",
                 "--set", "eval_episodes=2",
                 "--server", "http://service", "--out", str(out)])
    assert code == 0
    text = capsys.readouterr().out
    assert "submitted exp-" in text
    assert (out / "metrics.csv").exists()
