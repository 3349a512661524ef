"""Experiment orchestration: seeded runs, periodic greedy evaluation,
metrics/CSV emission and checkpointing.

A run is fully determined by its :class:`ExperimentConfig`. Randomness is
split into independent streams (network init, environment seeds,
exploration, replay sampling, evaluation seeds) so evaluation never
perturbs training reproducibility. Evaluation always uses greedy action
selection on immutable parameter snapshots.
"""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .agents import AgentNet, AgentNetConfig, EpsilonSchedule, build_inputs, select_actions
from .checkpoint import load_params, save_params
from .config import ExperimentConfig, load_config, save_config
from .envs import CombatEnv, Env, TwoStepGame
from .envs.replay import step_record, write_trace
from .envs.two_step import PHASE_FIRST, PHASE_MATRIX_A, PHASE_MATRIX_B, PHASE_NAMES
from .learner import Episode, Learner, ReplayBuffer
from .mixers import Mixer, build_mixer, mix_value

CHECKPOINT_FILE = "checkpoint.bin"
CONFIG_FILE = "config.yaml"
METRICS_FILE = "metrics.csv"
TRAIN_LOG_FILE = "train_log.jsonl"
REPLAY_FILE = "replays.jsonl"

_SEED_CAP = 2**31 - 1


@dataclass
class EvalPoint:
    episode: int
    env_steps: int
    metrics: Dict[str, float]
    returns: List[float]


@dataclass
class EvalReport:
    env: str
    algorithm: str
    scenario: Optional[str]
    seed: int
    points: List[EvalPoint] = field(default_factory=list)
    baselines: Dict[str, float] = field(default_factory=dict)

    def final_metric(self, name: str) -> float:
        return self.points[-1].metrics[name]


@dataclass
class RunResult:
    config: ExperimentConfig
    report: EvalReport
    params: Optional[Dict[str, np.ndarray]]
    train_log: List[Dict[str, float]]
    out_dir: Optional[str] = None
    checkpoint_path: Optional[str] = None


# ---------------------------------------------------------------------------
# environment / network construction
# ---------------------------------------------------------------------------

def make_env(config: ExperimentConfig) -> Env:
    if config.env == "two_step":
        return TwoStepGame(gamma=config.gamma)
    return CombatEnv(scenario=config.scenario, gamma=config.gamma)


def agent_net_config(config: ExperimentConfig, env: Env) -> AgentNetConfig:
    # the two-step observation already carries the agent id and there is
    # no meaningful previous action, so its inputs are the raw observation
    extras = config.env == "micro_combat"
    return AgentNetConfig(
        obs_dim=env.spec.obs_dim,
        n_actions=env.spec.n_actions,
        n_agents=env.spec.n_agents,
        hidden_dim=config.agent_hidden_dim,
        recurrent=config.recurrent,
        use_last_action=extras,
        use_agent_id=extras,
    )


def build_networks(config: ExperimentConfig, env: Env,
                   rng: Optional[np.random.Generator] = None):
    rng = rng if rng is not None else np.random.default_rng(0)
    agent = AgentNet.create(agent_net_config(config, env), rng)
    mixer = build_mixer(config.algorithm, env.spec.n_agents, env.spec.state_dim,
                        config.mixing_embed_dim, config.hypernet_bias_hidden, rng)
    return agent, mixer


def load_networks(config: ExperimentConfig, params: Dict[str, np.ndarray]):
    env = make_env(config)
    agent, mixer = build_networks(config, env)
    target = {f"agent.{k}": p for k, p in agent.parameters().items()}
    if mixer is not None:
        target.update({f"mixer.{k}": p for k, p in mixer.parameters().items()})
    if target.keys() != params.keys():
        raise ValueError(
            f"checkpoint does not match the config: {sorted(params)} vs {sorted(target)}"
        )
    for name, p in target.items():
        np.copyto(p.data, params[name])
    return agent, mixer


def load_run(run_dir) -> Tuple[ExperimentConfig, Dict[str, np.ndarray]]:
    run_dir = Path(run_dir)
    if run_dir.is_file():
        run_dir = run_dir.parent
    config = load_config(run_dir / CONFIG_FILE)
    params = load_params(run_dir / CHECKPOINT_FILE)
    return config, params


# ---------------------------------------------------------------------------
# rollouts
# ---------------------------------------------------------------------------

class RolloutController:
    """Carries per-agent hidden state and last actions through one episode."""

    def __init__(self, net: AgentNet) -> None:
        self.net = net
        self.hidden = net.initial_hidden(net.cfg.n_agents)
        self.prev_actions = -np.ones(net.cfg.n_agents, dtype=np.int64)

    def reset(self) -> None:
        self.hidden = self.net.initial_hidden(self.net.cfg.n_agents)
        self.prev_actions = -np.ones(self.net.cfg.n_agents, dtype=np.int64)

    def q_values(self, obs: np.ndarray) -> np.ndarray:
        inputs = build_inputs(self.net.cfg, obs, self.prev_actions)
        q, h = self.net.forward(inputs, self.hidden)
        self.hidden = h.data if hasattr(h, "data") else h
        return q.data

    def act(self, obs: np.ndarray, avail: np.ndarray, epsilon: float,
            rng: np.random.Generator) -> np.ndarray:
        actions = select_actions(self.q_values(obs), avail, epsilon, rng)
        self.prev_actions = actions
        return actions


def rollout_episode(env: Env, act_fn, env_seed: Optional[int],
                    record: Optional[list] = None, episode_idx: int = 0):
    """Play one episode; ``act_fn(obs, avail) -> joint action``.

    Returns (Episode, stats) where stats has the undiscounted return, the
    episode length and the win flag.
    """
    obs, state = env.reset(seed=env_seed)
    obs_list, state_list, avail_list = [obs], [state], [env.available_actions()]
    actions_list, rewards, terminated = [], [], []
    done = False
    t = 0
    while not done:
        actions = act_fn(obs_list[-1], avail_list[-1])
        result = env.step(actions)
        if record is not None:
            record.append(step_record(episode_idx, t, state_list[-1], obs_list[-1],
                                      actions, result.reward, result.terminated,
                                      result.truncated))
        actions_list.append(np.asarray(actions, dtype=np.int64))
        rewards.append(result.reward)
        terminated.append(result.terminated)
        obs_list.append(env.get_obs())
        state_list.append(env.get_state())
        avail_list.append(env.available_actions())
        done = result.terminated or result.truncated
        t += 1
    episode = Episode(
        obs=np.stack(obs_list),
        state=np.stack(state_list),
        avail=np.stack(avail_list),
        actions=np.stack(actions_list),
        rewards=np.asarray(rewards, dtype=np.float64),
        terminated=np.asarray(terminated, dtype=bool),
    )
    stats = {
        "return": float(episode.rewards.sum()),
        "length": episode.length,
        "won": bool(getattr(env, "battle_won", False)),
    }
    return episode, stats


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def _greedy_act_fn(net: AgentNet):
    controller = RolloutController(net)
    rng = np.random.default_rng(0)  # unused at epsilon 0

    def act(obs, avail):
        return controller.act(obs, avail, 0.0, rng)

    return controller, act


def evaluate_policy(env: Env, net: AgentNet, seeds: Sequence[int],
                    record: Optional[list] = None) -> Dict[str, object]:
    """Greedy decentralised rollouts; no learning, no parameter mutation."""
    controller, act = _greedy_act_fn(net)
    returns, wins = [], []
    for i, seed in enumerate(seeds):
        controller.reset()
        _, stats = rollout_episode(env, act, int(seed), record=record, episode_idx=i)
        returns.append(stats["return"])
        wins.append(stats["won"])
    return {"returns": returns, "wins": wins,
            "mean_return": float(np.mean(returns)),
            "win_rate": float(np.mean(wins))}


def evaluate_heuristic(env: CombatEnv, seeds: Sequence[int],
                       record: Optional[list] = None) -> Dict[str, object]:
    """The scripted full-observability baseline, same protocol as above."""
    returns, wins = [], []
    for i, seed in enumerate(seeds):
        _, stats = rollout_episode(env, lambda obs, avail: env.heuristic_ally_actions(),
                                   int(seed), record=record, episode_idx=i)
        returns.append(stats["return"])
        wins.append(stats["won"])
    return {"returns": returns, "wins": wins,
            "mean_return": float(np.mean(returns)),
            "win_rate": float(np.mean(wins))}


def _eval_metrics(config: ExperimentConfig, result: Dict[str, object]) -> Dict[str, float]:
    if config.env == "micro_combat":
        return {"test_win_rate": float(result["win_rate"]),
                "test_return": float(result["mean_return"])}
    return {"test_return": float(result["mean_return"])}


# ---------------------------------------------------------------------------
# the experiment loop
# ---------------------------------------------------------------------------

def run_experiment(config: ExperimentConfig, out_dir=None) -> RunResult:
    config.validate()
    streams = np.random.SeedSequence(config.seed).spawn(5)
    init_rng = np.random.default_rng(streams[0])
    env_rng = np.random.default_rng(streams[1])
    explore_rng = np.random.default_rng(streams[2])
    sample_rng = np.random.default_rng(streams[3])
    eval_rng = np.random.default_rng(streams[4])

    env = make_env(config)
    eval_env = make_env(config)
    eval_seeds = [int(s) for s in eval_rng.integers(0, _SEED_CAP, size=config.eval_episodes)]
    report = EvalReport(env=config.env, algorithm=config.algorithm,
                        scenario=config.scenario, seed=config.seed)

    if config.algorithm == "heuristic":
        replays: list = []
        result = evaluate_heuristic(eval_env, eval_seeds, record=replays)
        report.points.append(EvalPoint(0, 0, _eval_metrics(config, result),
                                       [float(r) for r in result["returns"]]))
        report.baselines["heuristic_win_rate"] = float(result["win_rate"])
        run = RunResult(config, report, params=None, train_log=[])
        _write_outputs(run, out_dir, replays)
        return run

    agent, mixer = build_networks(config, env, init_rng)
    learner = Learner(agent, mixer, gamma=config.gamma, lr=config.lr,
                      rms_alpha=config.rms_alpha, rms_eps=config.rms_eps,
                      batch_size=config.batch_size)
    buffer = ReplayBuffer(config.buffer_capacity, env.spec.episode_limit)
    schedule = EpsilonSchedule(config.eps_start, config.eps_end, config.eps_anneal_steps)
    controller = RolloutController(agent)
    train_log: List[Dict[str, float]] = []

    env_steps = 0
    episode_idx = 0

    def eval_point(record: Optional[list] = None) -> None:
        result = evaluate_policy(eval_env, agent, eval_seeds, record=record)
        report.points.append(EvalPoint(episode_idx, env_steps,
                                       _eval_metrics(config, result),
                                       [float(r) for r in result["returns"]]))

    eval_point()
    while env_steps < config.total_env_steps:
        epsilon = schedule(env_steps)
        controller.reset()
        seed = int(env_rng.integers(0, _SEED_CAP))
        episode, _ = rollout_episode(
            env, lambda obs, avail: controller.act(obs, avail, epsilon, explore_rng), seed
        )
        buffer.add(episode)
        env_steps += episode.length
        episode_idx += 1
        if len(buffer) >= config.batch_size:
            for _ in range(config.train_steps_per_episode):
                metrics = learner.train_step(buffer, sample_rng)
                train_log.append({"episode": episode_idx, "env_steps": env_steps,
                                  "loss": metrics["loss"],
                                  "grad_norm": metrics["grad_norm"],
                                  "epsilon": epsilon})
        if episode_idx % config.target_update_episodes == 0:
            learner.sync_target()
        if episode_idx % config.eval_period_episodes == 0:
            eval_point()

    replays: list = []
    if report.points[-1].episode != episode_idx:
        eval_point(record=replays)
    else:
        # re-record the final evaluation for the replay trace
        evaluate_policy(eval_env, agent, eval_seeds, record=replays)

    if config.env == "micro_combat":
        baseline = evaluate_heuristic(make_env(config), eval_seeds)
        report.baselines["heuristic_win_rate"] = float(baseline["win_rate"])

    params = {name: p.data.copy() for name, p in learner.parameters().items()}
    run = RunResult(config, report, params=params, train_log=train_log)
    _write_outputs(run, out_dir, replays)
    return run


def _write_outputs(run: RunResult, out_dir, replays: list) -> None:
    if out_dir is None:
        return
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_config(run.config, out_dir / CONFIG_FILE)
    emit_metrics_csv(run.report, out_dir / METRICS_FILE)
    if run.params is not None:
        save_params(out_dir / CHECKPOINT_FILE, run.params)
        run.checkpoint_path = str(out_dir / CHECKPOINT_FILE)
    with (out_dir / TRAIN_LOG_FILE).open("w") as fh:
        for entry in run.train_log:
            fh.write(json.dumps({k: (float(v) if isinstance(v, float) else v)
                                 for k, v in entry.items()}) + "\n")
    write_trace(out_dir / REPLAY_FILE, replays)
    run.out_dir = str(out_dir)


# ---------------------------------------------------------------------------
# reporting
# ---------------------------------------------------------------------------

def emit_metrics_csv(report: EvalReport, path) -> None:
    """One row per checkpoint metric; byte-stable across identical runs."""
    scenario = report.scenario or report.env
    lines = ["episode,env_steps,metric_name,value,seed,algorithm,scenario"]
    for point in report.points:
        for name, value in point.metrics.items():
            lines.append(f"{point.episode},{point.env_steps},{name},{float(value)!r},"
                         f"{report.seed},{report.algorithm},{scenario}")
    for name, value in report.baselines.items():
        lines.append(f"0,0,{name},{float(value)!r},{report.seed},{report.algorithm},{scenario}")
    Path(path).write_text("\n".join(lines) + "\n")


def dump_qtot_table(agent: AgentNet, mixer: Optional[Mixer]) -> Dict[str, object]:
    """Joint values for all four joint actions in each two-step game state.

    Factored heads produce one 2x2 matrix per state; independent learners
    (no joint head) report each agent's action values instead.
    """
    if agent.cfg.obs_dim != TwoStepGame().spec.obs_dim:
        raise ValueError("q-table dumps require a two-step checkpoint")
    hidden = agent.initial_hidden(agent.cfg.n_agents)
    phases = (PHASE_FIRST, PHASE_MATRIX_A, PHASE_MATRIX_B)
    inputs_first = build_inputs(agent.cfg, TwoStepGame.phase_observations(PHASE_FIRST))
    _, hidden_after = agent.forward(inputs_first, hidden)
    hidden_after = hidden_after.data if hasattr(hidden_after, "data") else hidden_after
    out: Dict[str, object] = {"kind": "per_agent" if mixer is None else "q_tot",
                              "states": [PHASE_NAMES[p] for p in phases]}
    tables = {}
    for phase in phases:
        h = hidden if phase == PHASE_FIRST else hidden_after
        inputs = build_inputs(agent.cfg, TwoStepGame.phase_observations(phase))
        q, _ = agent.forward(inputs, h)
        q = q.data
        state_vec = TwoStepGame.phase_state(phase)
        if mixer is None:
            tables[PHASE_NAMES[phase]] = [[float(v) for v in row] for row in q]
        else:
            matrix = [[mix_value(mixer, np.array([q[0, u1], q[1, u2]]), state_vec)
                       for u2 in range(q.shape[1])] for u1 in range(q.shape[0])]
            tables[PHASE_NAMES[phase]] = matrix
    out["tables"] = tables
    return out


def format_qtot_table(dump: Dict[str, object]) -> str:
    lines = []
    for state in dump["states"]:
        lines.append(state)
        for row in dump["tables"][state]:
            lines.append("  " + "  ".join(f"{v:7.2f}" for v in row))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# multi-seed driver
# ---------------------------------------------------------------------------

def _sweep_worker(args) -> RunResult:
    config, out_dir = args
    return run_experiment(config, out_dir)


def run_sweep(configs: Sequence[ExperimentConfig], out_root=None,
              max_workers: Optional[int] = None) -> List[RunResult]:
    """Run independent experiments, in parallel processes when possible."""
    jobs = []
    for cfg in configs:
        sub = None
        if out_root is not None:
            sub = Path(out_root) / f"{cfg.algorithm}_seed{cfg.seed}"
        jobs.append((cfg, sub))
    if max_workers == 1 or len(jobs) == 1:
        return [_sweep_worker(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(_sweep_worker, jobs))


def bootstrap_ci(values: Sequence[float], n_boot: int = 2000, level: float = 0.95,
                 seed: int = 0) -> Tuple[float, float]:
    """Percentile bootstrap interval for the median."""
    values = np.asarray(values, dtype=np.float64)
    rng = np.random.default_rng(seed)
    medians = np.median(rng.choice(values, size=(n_boot, values.size), replace=True), axis=1)
    lo = float(np.percentile(medians, 100 * (1 - level) / 2))
    hi = float(np.percentile(medians, 100 * (1 + level) / 2))
    return lo, hi


def summarize_sweep(results: Sequence[RunResult], metric: str) -> Dict[str, object]:
    finals = [r.report.final_metric(metric) for r in results]
    lo, hi = bootstrap_ci(finals)
    return {"metric": metric, "values": finals, "median": float(np.median(finals)),
            "ci95": (lo, hi)}
