"""Instruction-conditioned level generation on a small bat/wall grid world.

Modules: ``level`` (grids), ``fitness`` (measures, goal fitness, Progress),
``instruction`` (datasets and text features), ``neural`` (dense nets),
``encoder`` (task-specific instruction encoder), ``env_rl`` (editing
environment and PPO), ``evalbench`` (variants and evaluation), ``cli``.
"""

from .level import ConfigError, Level, TileKind, random_level

__all__ = ["ConfigError", "Level", "TileKind", "random_level"]
__version__ = "0.1.0"
