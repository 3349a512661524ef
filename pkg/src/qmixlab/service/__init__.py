from .app import create_app
from .core import JobManager, effective_config, evaluate_checkpoint, qtot_tables

__all__ = [
    "create_app",
    "JobManager",
    "effective_config",
    "evaluate_checkpoint",
    "qtot_tables",
]
