"""Level measures, goal-conditioned fitness in [-5, 5] and the Progress metric.

Passable tiles are EMPTY and BAT; connectivity is 4-neighbourhood.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Iterable, Optional

import numpy as np
from scipy import ndimage

from .level import ConfigError, Level, TileKind

FITNESS_MAX = 5.0


class TaskId(IntEnum):
    RG = 0
    PL = 1
    WC = 2
    BC = 3
    BD = 4


N_TASKS = len(TaskId)
_TASKS = tuple(TaskId)


class Direction(Enum):
    TOP = "top"
    BOTTOM = "bottom"
    LEFT = "left"
    RIGHT = "right"


@dataclass(frozen=True)
class MeasureVector:
    rg: int
    pl: int
    wc: int
    bc: int
    bd: float

    def as_array(self) -> np.ndarray:
        return np.array([self.rg, self.pl, self.wc, self.bc, self.bd], dtype=np.float64)

    def __getitem__(self, task: TaskId):
        return (self.rg, self.pl, self.wc, self.bc, self.bd)[task]


@dataclass(frozen=True)
class GoalSpec:
    """Per-task targets; ``None`` means the task is not instructed.

    ``bd`` is a (Direction, target fraction) pair.
    """

    rg: Optional[float] = None
    pl: Optional[float] = None
    wc: Optional[float] = None
    bc: Optional[float] = None
    bd: Optional[tuple] = None

    def active(self) -> np.ndarray:
        return np.array([g is not None for g in (self.rg, self.pl, self.wc, self.bc, self.bd)])

    def active_tasks(self) -> list:
        goals = (self.rg, self.pl, self.wc, self.bc, self.bd)
        return [_TASKS[i] for i in range(N_TASKS) if goals[i] is not None]

    def target(self, task: TaskId) -> Optional[float]:
        g = (self.rg, self.pl, self.wc, self.bc, self.bd)[task]
        if task == TaskId.BD and g is not None:
            return float(g[1])
        return None if g is None else float(g)

    @property
    def direction(self) -> Direction:
        return self.bd[0] if self.bd is not None else Direction.TOP

    def targets(self) -> np.ndarray:
        """Targets as a 5-vector, NaN where inactive."""
        return np.array([np.nan if self.target(t) is None else self.target(t) for t in TaskId])

    def to_dict(self) -> dict:
        out = {}
        for t in TaskId:
            g = self.target(t)
            if g is None:
                continue
            if t == TaskId.BD:
                out["BD"] = {"dir": self.bd[0].value, "frac": g}
            else:
                out[t.name] = g
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "GoalSpec":
        kw = {k.lower(): float(v) for k, v in d.items() if k != "BD"}
        if "BD" in d:
            kw["bd"] = (Direction(d["BD"]["dir"]), float(d["BD"]["frac"]))
        return cls(**kw)


def passable_mask(level: Level) -> np.ndarray:
    return level.tiles != TileKind.WALL


_FOUR = ndimage.generate_binary_structure(2, 1)


def count_regions(level: Level) -> int:
    _, n = ndimage.label(passable_mask(level), structure=_FOUR)
    return int(n)


def max_path_length(level: Level) -> int:
    """Largest shortest-path distance between two passable tiles of the same region.

    All-sources BFS run in lockstep: every passable tile owns one bit of a
    per-cell uint64 bitset, and each sweep ORs the 4-neighbour bitsets into
    each cell. The number of sweeps that still change something is the
    maximum eccentricity, i.e. the diameter taken within components.
    """
    mask = passable_mask(level)
    n = int(mask.sum())
    if n <= 1:
        return 0
    h, w = mask.shape
    reach = np.zeros(((n + 63) // 64, h, w), dtype=np.uint64)
    rows, cols = np.nonzero(mask)
    ids = np.arange(n)
    reach[ids // 64, rows, cols] = np.left_shift(np.uint64(1), (ids % 64).astype(np.uint64))
    keep = np.where(mask, ~np.uint64(0), np.uint64(0))
    steps = 0
    while True:
        nxt = reach.copy()
        nxt[:, 1:, :] |= reach[:, :-1, :]
        nxt[:, :-1, :] |= reach[:, 1:, :]
        nxt[:, :, 1:] |= reach[:, :, :-1]
        nxt[:, :, :-1] |= reach[:, :, 1:]
        nxt &= keep
        if np.array_equal(nxt, reach):
            return steps
        reach = nxt
        steps += 1


def wall_count(level: Level) -> int:
    return int(np.count_nonzero(level.tiles == TileKind.WALL))


def bat_count(level: Level) -> int:
    return int(np.count_nonzero(level.tiles == TileKind.BAT))


def _half(level: Level, direction: Direction) -> np.ndarray:
    h, w = level.height, level.width
    if direction is Direction.TOP:
        return level.tiles[: h // 2, :]
    if direction is Direction.BOTTOM:
        return level.tiles[math.ceil(h / 2):, :]
    if direction is Direction.LEFT:
        return level.tiles[:, : w // 2]
    return level.tiles[:, math.ceil(w / 2):]


def bat_direction_fraction(level: Level, direction: Direction) -> float:
    total = bat_count(level)
    if total == 0:
        return 0.0
    return float(np.count_nonzero(_half(level, direction) == TileKind.BAT)) / total


def measure(level: Level, direction: Direction = Direction.TOP) -> MeasureVector:
    return MeasureVector(
        rg=count_regions(level),
        pl=max_path_length(level),
        wc=wall_count(level),
        bc=bat_count(level),
        bd=bat_direction_fraction(level, direction),
    )


_MEASURES = (count_regions, max_path_length, wall_count, bat_count)


def measure_tasks(level: Level, tasks: Iterable[TaskId], direction: Direction = Direction.TOP) -> np.ndarray:
    """Raw measures for the listed tasks only; NaN elsewhere. Used on hot paths."""
    out = np.full(N_TASKS, np.nan)
    for t in tasks:
        if t == TaskId.BD:
            out[t] = bat_direction_fraction(level, direction)
        else:
            out[t] = _MEASURES[t](level)
    return out


def task_ranges(width: int, height: int) -> np.ndarray:
    """Maximal raw range per task on a ``width`` x ``height`` grid."""
    n = width * height
    return np.array([math.ceil(n / 2), n - 1, n, n, 1.0], dtype=np.float64)


def check_goals(goals: GoalSpec, width: int, height: int) -> None:
    ranges = task_ranges(width, height)
    for t in goals.active_tasks():
        g = goals.target(t)
        if not (0.0 <= g <= ranges[t]):
            raise ConfigError(f"goal {g} for {t.name} outside [0, {ranges[t]}]")


def goal_distance(measures: np.ndarray, targets: np.ndarray, ranges: np.ndarray) -> np.ndarray:
    """|g - m| / range per task (NaN where the target is NaN)."""
    return np.abs(targets - measures) / ranges


def goal_fitness(m: MeasureVector, goals: GoalSpec, width: int, height: int) -> np.ndarray:
    """Per-task fitness in [-5, 5]; +5 at an exact match, 0 for inactive tasks."""
    check_goals(goals, width, height)
    dist = goal_distance(m.as_array(), goals.targets(), task_ranges(width, height))
    fit = np.clip(FITNESS_MAX - 2 * FITNESS_MAX * dist, -FITNESS_MAX, FITNESS_MAX)
    return np.where(goals.active(), fit, 0.0)


def progress_raw(g: float, s0: float, sT: float) -> float:
    """Unclamped 1 - |(g - sT) / (g - s0)|."""
    if g == s0:
        return 1.0 if sT == g else 0.0
    return 1.0 - abs((g - sT) / (g - s0))


def progress(g: float, s0: float, sT: float) -> float:
    return max(0.0, progress_raw(g, s0, sT))
