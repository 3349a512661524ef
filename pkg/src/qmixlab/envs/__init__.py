from .base import Env, EnvSpec, StepResult, UnavailableActionError
from .combat import (
    BUILTIN_SCENARIOS,
    CombatEnv,
    ScenarioConfig,
    UnitStats,
    load_scenario,
    save_scenario,
)
from .two_step import TwoStepGame

__all__ = [
    "Env",
    "EnvSpec",
    "StepResult",
    "UnavailableActionError",
    "TwoStepGame",
    "CombatEnv",
    "ScenarioConfig",
    "UnitStats",
    "BUILTIN_SCENARIOS",
    "load_scenario",
    "save_scenario",
]
