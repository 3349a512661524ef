"""Deterministic grid-combat environment: symmetric team fights with
partial observability, action masking and a scripted opponent.

Two identical unit groups spawn as mirrored clusters with seeded jitter on
a bounded continuous map. Allied units are controlled through the agent
interface; enemy units follow a built-in focus-fire controller. The team
reward is the damage dealt to enemies plus kill and victory bonuses,
rescaled so a perfect episode returns exactly 20.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np
import yaml

from .base import Env, EnvSpec, StepResult

# action ids in every scenario: attack slots follow the fixed prefix
NOOP, STOP, MOVE_N, MOVE_S, MOVE_E, MOVE_W = range(6)
ATTACK_OFFSET = 6
MOVE_DELTAS = {MOVE_N: (0.0, 1.0), MOVE_S: (0.0, -1.0), MOVE_E: (1.0, 0.0), MOVE_W: (-1.0, 0.0)}

KILL_BONUS = 10.0
WIN_BONUS = 200.0
MAX_EPISODE_RETURN = 20.0


@dataclass(frozen=True)
class UnitStats:
    max_hp: float
    max_shield: float
    damage: float
    cooldown: int


# hp/shield caps follow the reference unit roster; damage and cooldown are
# local balance constants chosen so melee types out-trade ranged up close
DEFAULT_UNIT_STATS: Dict[str, UnitStats] = {
    "marine": UnitStats(45.0, 0.0, 6.0, 1),
    "stalker": UnitStats(80.0, 80.0, 13.0, 2),
    "zealot": UnitStats(100.0, 50.0, 8.0, 1),
    "colossus": UnitStats(200.0, 150.0, 15.0, 2),
}


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything that defines one combat map; both teams share the roster."""

    name: str
    roster: Tuple[str, ...]
    episode_limit: int
    map_width: float = 32.0
    map_height: float = 32.0
    sight_range: float = 9.0
    shoot_range: float = 6.0
    spawn_gap: float = 8.0
    spawn_jitter: float = 1.5
    unit_spacing: float = 2.0
    unit_stats: Dict[str, UnitStats] = field(default_factory=lambda: dict(DEFAULT_UNIT_STATS))

    def __post_init__(self) -> None:
        if not self.roster:
            raise ValueError("scenario roster is empty")
        unknown = [t for t in self.roster if t not in self.unit_stats]
        if unknown:
            raise ValueError(f"scenario {self.name!r} uses unknown unit types {unknown}")
        if self.shoot_range > self.sight_range:
            raise ValueError(
                f"shoot_range {self.shoot_range} exceeds sight_range {self.sight_range}"
            )
        if self.episode_limit < 1:
            raise ValueError("episode_limit must be >= 1")

    @property
    def mixed_types(self) -> bool:
        return len(set(self.roster)) > 1

    @property
    def has_shields(self) -> bool:
        return any(self.unit_stats[t].max_shield > 0 for t in self.roster)


BUILTIN_SCENARIOS: Dict[str, ScenarioConfig] = {
    "3m": ScenarioConfig("3m", ("marine",) * 3, episode_limit=60),
    "5m": ScenarioConfig("5m", ("marine",) * 5, episode_limit=60),
    "8m": ScenarioConfig("8m", ("marine",) * 8, episode_limit=120),
    "2s_3z": ScenarioConfig("2s_3z", ("stalker",) * 2 + ("zealot",) * 3, episode_limit=120),
    "3s_5z": ScenarioConfig("3s_5z", ("stalker",) * 3 + ("zealot",) * 5, episode_limit=150),
    "1c_3s_5z": ScenarioConfig(
        "1c_3s_5z", ("colossus",) + ("stalker",) * 3 + ("zealot",) * 5, episode_limit=200
    ),
}


def load_scenario(name_or_path) -> ScenarioConfig:
    """Resolve a built-in scenario name or parse a scenario document."""
    if isinstance(name_or_path, ScenarioConfig):
        return name_or_path
    key = str(name_or_path)
    if key in BUILTIN_SCENARIOS:
        return BUILTIN_SCENARIOS[key]
    path = Path(key)
    if not path.exists():
        raise ValueError(
            f"unknown scenario {key!r}; not a built-in ({sorted(BUILTIN_SCENARIOS)}) "
            "and no such file"
        )
    doc = yaml.safe_load(path.read_text())
    stats = dict(DEFAULT_UNIT_STATS)
    for type_name, row in (doc.get("unit_stats") or {}).items():
        base = stats.get(type_name, UnitStats(1.0, 0.0, 1.0, 1))
        stats[type_name] = replace(base, **row)
    return ScenarioConfig(
        name=doc.get("name", path.stem),
        roster=tuple(doc["roster"]),
        episode_limit=int(doc["episode_limit"]),
        map_width=float(doc.get("map_width", 32.0)),
        map_height=float(doc.get("map_height", 32.0)),
        sight_range=float(doc.get("sight_range", 9.0)),
        shoot_range=float(doc.get("shoot_range", 6.0)),
        spawn_gap=float(doc.get("spawn_gap", 8.0)),
        spawn_jitter=float(doc.get("spawn_jitter", 1.5)),
        unit_spacing=float(doc.get("unit_spacing", 2.0)),
        unit_stats=stats,
    )


def save_scenario(scenario: ScenarioConfig, path) -> None:
    doc = {
        "name": scenario.name,
        "roster": list(scenario.roster),
        "episode_limit": scenario.episode_limit,
        "map_width": scenario.map_width,
        "map_height": scenario.map_height,
        "sight_range": scenario.sight_range,
        "shoot_range": scenario.shoot_range,
        "spawn_gap": scenario.spawn_gap,
        "spawn_jitter": scenario.spawn_jitter,
        "unit_spacing": scenario.unit_spacing,
        "unit_stats": {
            name: {"max_hp": s.max_hp, "max_shield": s.max_shield,
                   "damage": s.damage, "cooldown": s.cooldown}
            for name, s in scenario.unit_stats.items()
        },
    }
    Path(path).write_text(yaml.safe_dump(doc, sort_keys=False))


@dataclass
class Unit:
    uid: int
    team: int  # 0 = ally, 1 = enemy
    type_name: str
    stats: UnitStats
    pos: np.ndarray
    hp: float
    shield: float
    cooldown: int = 0
    alive: bool = True
    attack_target: int = -1  # persistent focus for scripted control

    def pool(self) -> float:
        return self.hp + self.shield


def _distance(a: Unit, b: Unit) -> float:
    return float(math.hypot(a.pos[0] - b.pos[0], a.pos[1] - b.pos[1]))


class CombatEnv(Env):
    def __init__(self, scenario="3m", gamma: float = 0.99) -> None:
        self.scenario = load_scenario(scenario)
        sc = self.scenario
        self.n_agents = len(sc.roster)
        self.n_enemies = len(sc.roster)
        self.n_actions = ATTACK_OFFSET + self.n_enemies
        self.type_names: Tuple[str, ...] = tuple(sorted(set(sc.roster)))
        self._type_dim = len(self.type_names) if sc.mixed_types else 0
        self._shield_dim = 1 if sc.has_shields else 0
        # per other-unit slot: visible flag, distance, rel x, rel y (+ type)
        slot = 4 + self._type_dim
        own = 1 + self._shield_dim + self._type_dim
        obs_dim = own + (self.n_agents - 1 + self.n_enemies) * slot
        unit_feats = 4 + self._shield_dim + self._type_dim  # cx, cy, hp, cd (+shield) (+type)
        state_dim = (self.n_agents + self.n_enemies) * unit_feats + self.n_agents * self.n_actions
        self.spec = EnvSpec(
            n_agents=self.n_agents,
            n_actions=self.n_actions,
            obs_dim=obs_dim,
            state_dim=state_dim,
            episode_limit=sc.episode_limit,
            gamma=gamma,
        )
        max_raw = sum(
            sc.unit_stats[t].max_hp + sc.unit_stats[t].max_shield for t in sc.roster
        ) + KILL_BONUS * self.n_enemies + WIN_BONUS
        self.reward_scale = MAX_EPISODE_RETURN / max_raw
        self._rng = np.random.default_rng(0)
        self.units: List[Unit] = []
        self._t = 0
        self._last_actions = -np.ones(self.n_agents, dtype=np.int64)
        self._done = True
        self.battle_won = False

    # -- setup ---------------------------------------------------------

    def _spawn_team(self, team: int) -> List[Unit]:
        sc = self.scenario
        cx = sc.map_width / 2.0 + (sc.spawn_gap / 2.0) * (1 if team else -1)
        cy = sc.map_height / 2.0
        units = []
        k = len(sc.roster)
        for i, type_name in enumerate(sc.roster):
            base_y = cy + (i - (k - 1) / 2.0) * sc.unit_spacing
            jitter = self._rng.uniform(-sc.spawn_jitter, sc.spawn_jitter, size=2)
            pos = np.array([cx + jitter[0], base_y + jitter[1]])
            pos[0] = min(max(pos[0], 0.0), sc.map_width)
            pos[1] = min(max(pos[1], 0.0), sc.map_height)
            stats = sc.unit_stats[type_name]
            units.append(Unit(
                uid=team * k + i, team=team, type_name=type_name, stats=stats,
                pos=pos, hp=stats.max_hp, shield=stats.max_shield,
            ))
        return units

    def reset(self, seed=None):
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self.units = self._spawn_team(0) + self._spawn_team(1)
        self._t = 0
        self._last_actions = -np.ones(self.n_agents, dtype=np.int64)
        self._done = False
        self.battle_won = False
        return self.get_obs(), self.get_state()

    @property
    def allies(self) -> List[Unit]:
        return self.units[: self.n_agents]

    @property
    def enemies(self) -> List[Unit]:
        return self.units[self.n_agents:]

    # -- features ------------------------------------------------------

    def _type_onehot(self, unit: Unit) -> List[float]:
        if not self._type_dim:
            return []
        vec = [0.0] * self._type_dim
        vec[self.type_names.index(unit.type_name)] = 1.0
        return vec

    def get_obs(self) -> np.ndarray:
        sc = self.scenario
        obs = np.zeros((self.n_agents, self.spec.obs_dim))
        for a, me in enumerate(self.allies):
            if not me.alive:
                continue
            feats: List[float] = [me.hp / me.stats.max_hp]
            if self._shield_dim:
                feats.append(me.shield / me.stats.max_shield if me.stats.max_shield else 0.0)
            feats.extend(self._type_onehot(me))
            others = [u for u in self.allies if u is not me] + self.enemies
            for other in others:
                if other.alive:
                    d = _distance(me, other)
                    if d <= sc.sight_range:
                        feats.extend([
                            1.0,
                            d / sc.sight_range,
                            (other.pos[0] - me.pos[0]) / sc.sight_range,
                            (other.pos[1] - me.pos[1]) / sc.sight_range,
                        ])
                        feats.extend(self._type_onehot(other))
                        continue
                # dead or out of range: the whole slot stays zero
                feats.extend([0.0] * (4 + self._type_dim))
            obs[a] = feats
        return obs

    def get_state(self) -> np.ndarray:
        sc = self.scenario
        feats: List[float] = []
        cx, cy = sc.map_width / 2.0, sc.map_height / 2.0
        for u in self.units:
            if not u.alive:
                feats.extend([0.0] * (4 + self._shield_dim + self._type_dim))
                continue
            feats.extend([
                (u.pos[0] - cx) / (sc.map_width / 2.0),
                (u.pos[1] - cy) / (sc.map_height / 2.0),
                u.hp / u.stats.max_hp,
            ])
            if self._shield_dim:
                feats.append(u.shield / u.stats.max_shield if u.stats.max_shield else 0.0)
            feats.append(u.cooldown / max(u.stats.cooldown, 1))
            feats.extend(self._type_onehot(u))
        last = np.zeros((self.n_agents, self.n_actions))
        for a, act in enumerate(self._last_actions):
            if act >= 0:  # -1 marks "no action taken yet"
                last[a, act] = 1.0
        return np.concatenate([np.asarray(feats), last.ravel()])

    def available_actions(self) -> np.ndarray:
        sc = self.scenario
        avail = np.zeros((self.n_agents, self.n_actions), dtype=bool)
        for a, me in enumerate(self.allies):
            if not me.alive:
                avail[a, NOOP] = True
                continue
            avail[a, STOP] = True
            for action, (dx, dy) in MOVE_DELTAS.items():
                nx, ny = me.pos[0] + dx, me.pos[1] + dy
                if 0.0 <= nx <= sc.map_width and 0.0 <= ny <= sc.map_height:
                    avail[a, action] = True
            for j, enemy in enumerate(self.enemies):
                if enemy.alive and _distance(me, enemy) <= sc.shoot_range:
                    avail[a, ATTACK_OFFSET + j] = True
        return avail

    # -- scripted control ----------------------------------------------

    def _focus_intent(self, unit: Unit, targets: Sequence[Unit]):
        """Shared attack-nearest-with-persistence rule.

        Returns ("attack", target) or ("move", (dx, dy)) or ("stop", None).
        """
        living = [t for t in targets if t.alive]
        if not living:
            return ("stop", None)
        current = next((t for t in living if t.uid == unit.attack_target), None)
        if current is None:
            current = min(living, key=lambda t: (_distance(unit, t), t.uid))
            unit.attack_target = current.uid
        if _distance(unit, current) <= self.scenario.shoot_range:
            return ("attack", current)
        dx = current.pos[0] - unit.pos[0]
        dy = current.pos[1] - unit.pos[1]
        # walk along the axis with the larger gap; fall back to the other axis
        order = ["x", "y"] if abs(dx) >= abs(dy) else ["y", "x"]
        for axis in order:
            step = (math.copysign(1.0, dx), 0.0) if axis == "x" else (0.0, math.copysign(1.0, dy))
            nx, ny = unit.pos[0] + step[0], unit.pos[1] + step[1]
            if 0.0 <= nx <= self.scenario.map_width and 0.0 <= ny <= self.scenario.map_height:
                return ("move", step)
        return ("stop", None)

    def scripted_enemy_intents(self):
        return [
            self._focus_intent(e, self.allies) if e.alive else ("stop", None)
            for e in self.enemies
        ]

    def heuristic_ally_actions(self) -> np.ndarray:
        """Full-observability baseline: attack the closest enemy and keep
        firing at it until it dies."""
        actions = np.zeros(self.n_agents, dtype=np.int64)
        for a, me in enumerate(self.allies):
            if not me.alive:
                actions[a] = NOOP
                continue
            kind, payload = self._focus_intent(me, self.enemies)
            if kind == "attack":
                actions[a] = ATTACK_OFFSET + (payload.uid - self.n_agents)
            elif kind == "move":
                dx, dy = payload
                if dx > 0:
                    actions[a] = MOVE_E
                elif dx < 0:
                    actions[a] = MOVE_W
                elif dy > 0:
                    actions[a] = MOVE_N
                else:
                    actions[a] = MOVE_S
            else:
                actions[a] = STOP
        return actions

    # -- dynamics ------------------------------------------------------

    def _apply_damage(self, target: Unit, amount: float) -> float:
        """Shields absorb first; returns damage actually applied."""
        applied = min(amount, target.pool())
        shield_hit = min(applied, target.shield)
        target.shield -= shield_hit
        target.hp -= applied - shield_hit
        return applied

    def step(self, joint_action) -> StepResult:
        if self._done:
            raise RuntimeError("step() called on a finished episode; call reset()")
        self._check_available(joint_action)
        sc = self.scenario
        enemy_intents = self.scripted_enemy_intents()
        alive_at_start = [u.alive for u in self.units]

        # moves commit first (allies in id order, then enemies)
        attacks: List[Tuple[Unit, Unit]] = []
        for a, me in enumerate(self.allies):
            action = int(joint_action[a])
            if not me.alive:
                continue
            if action in MOVE_DELTAS:
                dx, dy = MOVE_DELTAS[action]
                me.pos[0] = min(max(me.pos[0] + dx, 0.0), sc.map_width)
                me.pos[1] = min(max(me.pos[1] + dy, 0.0), sc.map_height)
            elif action >= ATTACK_OFFSET:
                attacks.append((me, self.enemies[action - ATTACK_OFFSET]))
        for enemy, (kind, payload) in zip(self.enemies, enemy_intents):
            if not enemy.alive:
                continue
            if kind == "move":
                enemy.pos[0] = min(max(enemy.pos[0] + payload[0], 0.0), sc.map_width)
                enemy.pos[1] = min(max(enemy.pos[1] + payload[1], 0.0), sc.map_height)
            elif kind == "attack":
                attacks.append((enemy, payload))

        # attacks fire simultaneously: everyone alive at the start of the
        # tick shoots, even if killed this tick; damage caps at the pool
        # remaining per target, applied in attacker id order
        raw_reward = 0.0
        for attacker, target in attacks:
            if attacker.cooldown > 0:
                continue  # weapon not ready; the action just waits
            attacker.cooldown = attacker.stats.cooldown
            applied = self._apply_damage(target, attacker.stats.damage)
            if attacker.team == 0:
                raw_reward += applied

        newly_dead_enemies = 0
        for u in self.units:
            if alive_at_start[u.uid] and u.hp <= 0.0:
                u.alive = False
                u.hp = 0.0
                u.shield = 0.0
                if u.team == 1:
                    newly_dead_enemies += 1
            if u.alive:
                u.cooldown = max(0, u.cooldown - 1)

        raw_reward += KILL_BONUS * newly_dead_enemies
        enemies_alive = any(e.alive for e in self.enemies)
        allies_alive = any(a.alive for a in self.allies)
        if not enemies_alive:
            raw_reward += WIN_BONUS
            self.battle_won = True

        self._t += 1
        self._last_actions = np.asarray(joint_action, dtype=np.int64).copy()
        terminated = not enemies_alive or not allies_alive
        truncated = not terminated and self._t >= sc.episode_limit
        self._done = terminated or truncated
        return StepResult(
            reward=raw_reward * self.reward_scale,
            terminated=terminated,
            truncated=truncated,
        )
