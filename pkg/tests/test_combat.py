import numpy as np
import pytest

from qmixlab.envs import CombatEnv, ScenarioConfig, UnavailableActionError, load_scenario, save_scenario
from qmixlab.envs.combat import (
    ATTACK_OFFSET,
    MOVE_E,
    MOVE_N,
    MOVE_W,
    NOOP,
    STOP,
    DEFAULT_UNIT_STATS,
    KILL_BONUS,
    WIN_BONUS,
)


def tiny_scenario(**kw):
    defaults = dict(name="duel", roster=("marine", "marine"), episode_limit=40,
                    spawn_jitter=0.0)
    defaults.update(kw)
    return ScenarioConfig(**defaults)


def place(env, team, idx, x, y):
    unit = (env.allies if team == 0 else env.enemies)[idx]
    unit.pos[0], unit.pos[1] = x, y
    return unit


# ---------------------------------------------------------------------------
# unit and scenario contracts
# ---------------------------------------------------------------------------

def test_unit_hp_and_shield_caps():
    assert DEFAULT_UNIT_STATS["marine"].max_hp == 45
    assert DEFAULT_UNIT_STATS["stalker"].max_hp == 80
    assert DEFAULT_UNIT_STATS["zealot"].max_hp == 100
    assert DEFAULT_UNIT_STATS["colossus"].max_hp == 200
    assert DEFAULT_UNIT_STATS["marine"].max_shield == 0
    assert DEFAULT_UNIT_STATS["stalker"].max_shield == 80
    assert DEFAULT_UNIT_STATS["zealot"].max_shield == 50
    assert DEFAULT_UNIT_STATS["colossus"].max_shield == 150


def test_scenario_validation():
    with pytest.raises(ValueError):
        ScenarioConfig("bad", ("marine",), episode_limit=10, shoot_range=10.0, sight_range=9.0)
    with pytest.raises(ValueError):
        ScenarioConfig("bad", ("gremlin",), episode_limit=10)


def test_builtin_episode_limits():
    limits = {"3m": 60, "5m": 60, "8m": 120, "2s_3z": 120, "3s_5z": 150, "1c_3s_5z": 200}
    for name, limit in limits.items():
        assert load_scenario(name).episode_limit == limit


def test_scenario_file_roundtrip(tmp_path):
    sc = tiny_scenario(episode_limit=25, spawn_jitter=0.5)
    path = tmp_path / "duel.yaml"
    save_scenario(sc, path)
    loaded = load_scenario(str(path))
    assert loaded.roster == sc.roster
    assert loaded.episode_limit == 25
    assert loaded.spawn_jitter == 0.5
    assert loaded.unit_stats["marine"] == sc.unit_stats["marine"]


def test_unknown_scenario_rejected():
    with pytest.raises(ValueError):
        load_scenario("999zerglings")


# ---------------------------------------------------------------------------
# observations
# ---------------------------------------------------------------------------

def test_out_of_sight_slot_is_zero():
    env = CombatEnv(tiny_scenario(map_width=40.0))
    env.reset(seed=0)
    me = place(env, 0, 0, 5.0, 5.0)
    place(env, 0, 1, 6.0, 5.0)
    place(env, 1, 0, 15.0, 5.0)   # distance 10 > sight 9
    place(env, 1, 1, 9.5, 5.0)    # distance 4.5
    obs = env.get_obs()[0]
    own, slot = 1, 4
    ally = obs[own: own + slot]
    enemy_far = obs[own + slot: own + 2 * slot]
    enemy_near = obs[own + 2 * slot: own + 3 * slot]
    assert np.allclose(enemy_far, 0.0)
    assert ally[0] == 1.0
    # distance 4.5 with sight range 9 normalises to 0.5
    assert np.allclose(enemy_near, [1.0, 0.5, 0.5, 0.0])


def test_own_features_exclude_absolute_coordinates():
    env = CombatEnv(tiny_scenario())
    env.reset(seed=0)
    a = env.get_obs()[0].copy()
    # translate the whole world; observations must be unchanged
    for u in env.units:
        u.pos += np.array([1.0, 1.0])
    b = env.get_obs()[0]
    assert np.allclose(a, b)


def test_dead_units_never_observed():
    env = CombatEnv(tiny_scenario())
    env.reset(seed=0)
    env.enemies[0].alive = False
    obs = env.get_obs()
    own, slot = 1, 4
    for a in range(2):
        assert np.allclose(obs[a][own + slot: own + 2 * slot], 0.0)


def test_dead_agent_observation_is_zero():
    env = CombatEnv(tiny_scenario())
    env.reset(seed=0)
    env.allies[0].alive = False
    assert np.allclose(env.get_obs()[0], 0.0)


def test_mixed_map_has_type_features():
    env = CombatEnv("2s_3z")
    env.reset(seed=0)
    # own: hp + shield + 2 types; others: 9 slots * (4 + 2 types)
    assert env.spec.obs_dim == 4 + 9 * 6


# ---------------------------------------------------------------------------
# global state
# ---------------------------------------------------------------------------

def test_state_centre_relative_and_normalised():
    env = CombatEnv(tiny_scenario())
    env.reset(seed=0)
    place(env, 0, 0, 16.0, 16.0)  # map centre
    state = env.get_state()
    assert state[0] == 0.0 and state[1] == 0.0
    assert state[2] == 1.0  # full-health marine normalises to 1.0


def test_state_dim_constant_across_episode(rng):
    env = CombatEnv(tiny_scenario())
    env.reset(seed=3)
    dims = {len(env.get_state())}
    for _ in range(5):
        avail = env.available_actions()
        actions = [np.flatnonzero(m)[0] for m in avail]
        res = env.step(actions)
        dims.add(len(env.get_state()))
        if res.terminated or res.truncated:
            break
    assert dims == {env.spec.state_dim}


def test_state_includes_last_actions():
    env = CombatEnv(tiny_scenario())
    env.reset(seed=0)
    base = env.spec.state_dim - 2 * env.n_actions
    assert np.allclose(env.get_state()[base:], 0.0)  # no last action at reset
    env.step([STOP, STOP])
    tail = env.get_state()[base:]
    expected = np.zeros(2 * env.n_actions)
    expected[STOP] = 1.0
    expected[env.n_actions + STOP] = 1.0
    assert np.allclose(tail, expected)


# ---------------------------------------------------------------------------
# availability
# ---------------------------------------------------------------------------

def test_attack_range_boundary_inclusive():
    env = CombatEnv(tiny_scenario())
    env.reset(seed=0)
    place(env, 0, 0, 10.0, 16.0)
    place(env, 1, 0, 16.0, 16.0)   # exactly 6.0 away
    place(env, 1, 1, 16.1, 16.0)   # 6.1 away
    avail = env.available_actions()
    assert avail[0, ATTACK_OFFSET + 0]
    assert not avail[0, ATTACK_OFFSET + 1]


def test_moves_unavailable_off_map():
    env = CombatEnv(tiny_scenario())
    env.reset(seed=0)
    place(env, 0, 0, 0.5, 16.0)
    avail = env.available_actions()
    assert not avail[0, MOVE_W]
    assert avail[0, MOVE_E]


def test_dead_agent_noop_only():
    env = CombatEnv(tiny_scenario())
    env.reset(seed=0)
    env.allies[0].alive = False
    avail = env.available_actions()
    assert avail[0, NOOP]
    assert avail[0].sum() == 1
    assert not avail[1, NOOP]  # living agents cannot idle via noop


def test_unavailable_action_raises_with_agent_and_action():
    env = CombatEnv(tiny_scenario())
    env.reset(seed=0)
    place(env, 0, 0, 2.0, 16.0)
    place(env, 1, 0, 30.0, 16.0)
    place(env, 1, 1, 30.0, 17.0)
    with pytest.raises(UnavailableActionError) as err:
        env.step([ATTACK_OFFSET, STOP])
    assert err.value.agent == 0 and err.value.action == ATTACK_OFFSET


# ---------------------------------------------------------------------------
# dynamics
# ---------------------------------------------------------------------------

def test_shield_absorbs_damage_first():
    sc = tiny_scenario(roster=("stalker", "stalker"))
    env = CombatEnv(sc)
    env.reset(seed=0)
    target = env.enemies[0]
    target.shield, target.hp = 5.0, 45.0
    applied = env._apply_damage(target, 9.0)
    assert applied == 9.0
    assert target.shield == 0.0 and target.hp == 41.0


def test_damage_capped_at_remaining_pool():
    env = CombatEnv(tiny_scenario())
    env.reset(seed=0)
    target = env.enemies[0]
    target.hp = 2.0
    assert env._apply_damage(target, 6.0) == 2.0
    assert target.hp == 0.0


def test_normalised_reward_arithmetic():
    env = CombatEnv(tiny_scenario())
    # max_raw = 2 * 45 hp + 2 * 10 kill + 200 win = 310 for the duel map
    assert np.isclose(env.reward_scale, 20.0 / 310.0)
    # a step dealing raw 20 on a 400-point scenario would normalise to 1.0
    assert 20.0 * (20.0 / 400.0) == 1.0


def test_kill_and_win_bonuses_paid_once():
    env = CombatEnv(tiny_scenario(map_width=60.0, map_height=20.0))
    env.reset(seed=0)
    # isolate: allies in range of enemy 0, enemy units far from allies
    place(env, 0, 0, 10.0, 10.0)
    place(env, 0, 1, 10.0, 11.0)
    e0 = place(env, 1, 0, 14.0, 10.0)
    e1 = place(env, 1, 1, 50.0, 10.0)
    e0.hp = 7.0
    e1.attack_target = -1
    total_raw = 0.0
    res = env.step([ATTACK_OFFSET, ATTACK_OFFSET])
    total_raw += res.reward / env.reward_scale
    assert not e0.alive
    # damage capped at 7 remaining, plus one kill bonus, no win bonus yet
    assert np.isclose(total_raw, 7.0 + KILL_BONUS)
    assert not res.terminated


def test_win_pays_win_bonus_and_terminates():
    env = CombatEnv(tiny_scenario())
    env.reset(seed=0)
    place(env, 0, 0, 10.0, 16.0)
    place(env, 0, 1, 10.0, 17.0)
    place(env, 1, 0, 14.0, 16.0)
    place(env, 1, 1, 14.0, 17.0)
    for e in env.enemies:
        e.hp = 6.0
    res = env.step([ATTACK_OFFSET, ATTACK_OFFSET + 1])
    assert res.terminated and env.battle_won
    assert np.isclose(res.reward / env.reward_scale, 12.0 + 2 * KILL_BONUS + WIN_BONUS)


def test_simultaneous_fire_kills_both():
    env = CombatEnv(tiny_scenario())
    env.reset(seed=0)
    a0 = place(env, 0, 0, 10.0, 16.0)
    place(env, 0, 1, 2.0, 2.0)
    e0 = place(env, 1, 0, 14.0, 16.0)
    place(env, 1, 1, 30.0, 30.0)
    a0.hp = 6.0
    e0.hp = 6.0
    e0.attack_target = a0.uid
    res = env.step([ATTACK_OFFSET, STOP])
    # both were alive at the start of the tick, so both shots land
    assert not a0.alive and not e0.alive
    assert res.reward / env.reward_scale >= 6.0 + KILL_BONUS


def test_cooldown_gates_fire_rate():
    sc = tiny_scenario(roster=("stalker", "stalker"), map_width=60.0)
    env = CombatEnv(sc)
    env.reset(seed=0)
    place(env, 0, 0, 10.0, 10.0)
    place(env, 0, 1, 10.0, 30.0)
    target = place(env, 1, 0, 14.0, 10.0)
    place(env, 1, 1, 55.0, 30.0)
    hp0 = target.pool()
    env.step([ATTACK_OFFSET, STOP])
    assert target.pool() == hp0 - 13.0           # fired
    hp1 = target.pool()
    env.step([ATTACK_OFFSET, STOP])
    assert target.pool() == hp1                   # cooling down (cd 2)
    env.step([ATTACK_OFFSET, STOP])
    assert target.pool() == hp1 - 13.0            # ready again


def test_truncation_at_episode_limit_counts_as_loss():
    env = CombatEnv(tiny_scenario(episode_limit=3, spawn_gap=20.0, map_width=64.0))
    env.reset(seed=0)
    res = None
    for _ in range(3):
        res = env.step([STOP, STOP])
    assert res.truncated and not res.terminated and not env.battle_won


def test_episode_return_never_exceeds_cap(rng):
    env = CombatEnv(tiny_scenario())
    for seed in range(10):
        env.reset(seed=seed)
        total, done = 0.0, False
        while not done:
            avail = env.available_actions()
            actions = [np.flatnonzero(m)[rng.integers(np.flatnonzero(m).size)] for m in avail]
            res = env.step(actions)
            total += res.reward
            done = res.terminated or res.truncated
        assert total <= 20.0 + 1e-9


def test_damage_conservation(rng):
    env = CombatEnv(tiny_scenario())
    env.reset(seed=5)
    done = False
    while not done:
        pool_before = sum(e.pool() for e in env.enemies)
        avail = env.available_actions()
        actions = [np.flatnonzero(m)[rng.integers(np.flatnonzero(m).size)] for m in avail]
        res = env.step(actions)
        pool_after = sum(e.pool() for e in env.enemies)
        raw = res.reward / env.reward_scale
        kills = sum(1 for e in env.enemies if not e.alive)
        bonus = KILL_BONUS * 0  # recompute damage component only
        damage = raw - (KILL_BONUS * (kills - getattr(env, "_k", 0))) \
            - (WIN_BONUS if res.terminated and env.battle_won else 0.0)
        env._k = kills
        assert np.isclose(pool_before - pool_after, damage, atol=1e-9)
        done = res.terminated or res.truncated


def test_trajectory_determinism():
    def play(seed):
        env = CombatEnv(tiny_scenario(spawn_jitter=1.5))
        env.reset(seed=seed)
        rewards = []
        rng = np.random.default_rng(1)
        done = False
        while not done:
            avail = env.available_actions()
            actions = [np.flatnonzero(m)[rng.integers(np.flatnonzero(m).size)] for m in avail]
            res = env.step(actions)
            rewards.append(res.reward)
            done = res.terminated or res.truncated
        return np.asarray(rewards)

    assert np.array_equal(play(17), play(17))
    assert not np.array_equal(play(17), play(18))


# ---------------------------------------------------------------------------
# scripted controllers
# ---------------------------------------------------------------------------

def test_enemy_targets_nearest_ally():
    env = CombatEnv(tiny_scenario())
    env.reset(seed=0)
    e = place(env, 1, 0, 16.0, 16.0)
    place(env, 0, 0, 19.0, 16.0)  # distance 3
    place(env, 0, 1, 21.0, 16.0)  # distance 5
    kind, target = env._focus_intent(e, env.allies)
    assert kind == "attack" and target.uid == 0


def test_enemy_retargets_only_after_target_dies():
    env = CombatEnv(tiny_scenario())
    env.reset(seed=0)
    e = place(env, 1, 0, 16.0, 16.0)
    a0 = place(env, 0, 0, 19.0, 16.0)
    place(env, 0, 1, 17.0, 16.0)  # now closer
    e.attack_target = a0.uid
    kind, target = env._focus_intent(e, env.allies)
    assert target.uid == a0.uid  # persistence beats proximity
    a0.alive = False
    kind, target = env._focus_intent(e, env.allies)
    assert target.uid == 1


def test_scripted_policy_deterministic():
    env = CombatEnv(tiny_scenario())
    env.reset(seed=11)
    first = env.scripted_enemy_intents()
    second = env.scripted_enemy_intents()
    assert [(k, getattr(t, "uid", t)) for k, t in first] == \
           [(k, getattr(t, "uid", t)) for k, t in second]


def test_heuristic_attacks_closest_in_range():
    env = CombatEnv(tiny_scenario())
    env.reset(seed=0)
    place(env, 0, 0, 16.0, 16.0)
    place(env, 1, 0, 20.0, 16.0)
    place(env, 1, 1, 26.0, 16.0)
    actions = env.heuristic_ally_actions()
    assert actions[0] == ATTACK_OFFSET + 0


def test_heuristic_moves_along_largest_gap_axis():
    env = CombatEnv(tiny_scenario(map_width=64.0, map_height=64.0))
    env.reset(seed=0)
    place(env, 0, 0, 10.0, 10.0)
    place(env, 0, 1, 10.0, 12.0)
    place(env, 1, 0, 30.0, 14.0)   # dx 20 > dy 4: move east
    place(env, 1, 1, 30.0, 16.0)
    for a in env.allies:
        a.attack_target = -1
    actions = env.heuristic_ally_actions()
    assert actions[0] == MOVE_E
    # derived oracle: vertical gap dominates -> move north
    place(env, 0, 0, 30.0, 2.0)
    env.allies[0].attack_target = -1
    place(env, 1, 0, 32.0, 24.0)
    assert env.heuristic_ally_actions()[0] == MOVE_N


def test_heuristic_keeps_target_while_alive():
    env = CombatEnv(tiny_scenario())
    env.reset(seed=0)
    me = place(env, 0, 0, 16.0, 16.0)
    t0 = place(env, 1, 0, 20.0, 16.0)
    place(env, 1, 1, 26.0, 16.0)
    assert env.heuristic_ally_actions()[0] == ATTACK_OFFSET + 0
    place(env, 1, 1, 17.0, 16.0)  # another enemy becomes closer
    assert env.heuristic_ally_actions()[0] == ATTACK_OFFSET + 0
    t0.alive = False
    assert env.heuristic_ally_actions()[0] == ATTACK_OFFSET + 1
