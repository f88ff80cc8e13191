"""2D tile levels: random generation, single-cell edits and a text format."""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple, Sequence

import numpy as np

DEFAULT_WIDTH = 16
DEFAULT_HEIGHT = 16
DEFAULT_PROBS = (0.6, 0.3, 0.1)


class ConfigError(ValueError):
    """Invalid configuration (dimensions, probabilities, goals...)."""


class LevelParseError(ValueError):
    def __init__(self, message: str, row: int, col: int):
        super().__init__(f"{message} at row {row}, col {col}")
        self.row = row
        self.col = col


class TileKind(IntEnum):
    EMPTY = 0
    WALL = 1
    BAT = 2

    @property
    def code(self) -> str:
        return TILE_CODES[self]


_CHANNELS = np.array([[int(k)] for k in TileKind], dtype=np.uint8)


TILE_CODES = {TileKind.EMPTY: ".", TileKind.WALL: "#", TileKind.BAT: "b"}
CODE_TILES = {c: t for t, c in TILE_CODES.items()}


class Position(NamedTuple):
    row: int
    col: int


@dataclass(frozen=True, eq=False)
class Level:
    """Row-major grid of tiles, origin top-left.

    ``tiles`` is a read-only uint8 array of shape (height, width) holding
    ``TileKind`` values.
    """

    width: int
    height: int
    tiles: np.ndarray

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise ConfigError(f"level must be at least 2x2, got {self.width}x{self.height}")
        tiles = np.array(self.tiles, dtype=np.uint8).reshape(self.height, self.width)
        if tiles.size and tiles.max() > TileKind.BAT:
            raise ConfigError("unknown tile value")
        tiles.flags.writeable = False
        object.__setattr__(self, "tiles", tiles)

    @classmethod
    def filled(cls, width: int, height: int, kind: TileKind) -> "Level":
        return cls(width, height, np.full((height, width), int(kind), dtype=np.uint8))

    def __getitem__(self, pos) -> TileKind:
        r, c = pos
        return TileKind(int(self.tiles[r, c]))

    def __eq__(self, other):
        if not isinstance(other, Level):
            return NotImplemented
        return (self.width, self.height) == (other.width, other.height) and np.array_equal(
            self.tiles, other.tiles
        )

    def __hash__(self):
        return hash((self.width, self.height, self.tiles.tobytes()))

    def __repr__(self):
        return f"Level({self.width}x{self.height})\n{render_level(self)}"

    def in_bounds(self, pos) -> bool:
        r, c = pos
        return 0 <= r < self.height and 0 <= c < self.width

    def one_hot(self) -> np.ndarray:
        """Flattened 3-channel one-hot encoding, channel-major (EMPTY, WALL, BAT)."""
        return (self.tiles.reshape(1, -1) == _CHANNELS).astype(np.float64).reshape(-1)


def _check_probs(probs: Sequence[float]) -> np.ndarray:
    p = np.asarray(probs, dtype=np.float64)
    if p.shape != (3,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ConfigError(f"tile probabilities must be 3 non-negative values summing to 1, got {probs}")
    return p


def random_level(width: int = DEFAULT_WIDTH, height: int = DEFAULT_HEIGHT, seed: int = 0,
                 probs: Sequence[float] = DEFAULT_PROBS) -> Level:
    if width < 2 or height < 2:
        raise ConfigError(f"level must be at least 2x2, got {width}x{height}")
    p = _check_probs(probs)
    rng = np.random.default_rng(seed)
    tiles = rng.choice(3, size=(height, width), p=p).astype(np.uint8)
    return Level(width, height, tiles)


def set_tile(level: Level, pos, kind: TileKind) -> Level:
    """Return a copy of ``level`` with one cell rewritten."""
    if not level.in_bounds(pos):
        raise IndexError(f"position {tuple(pos)} outside {level.width}x{level.height} level")
    r, c = pos
    if level.tiles[r, c] == kind:
        return level
    tiles = level.tiles.copy()
    tiles[r, c] = kind
    return Level(level.width, level.height, tiles)


def render_level(level: Level) -> str:
    lut = np.array([TILE_CODES[k] for k in TileKind])
    return "\n".join("".join(row) for row in lut[level.tiles])


def parse_level(text: str) -> Level:
    lines = text.replace("\r\n", "\n").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise LevelParseError("empty level text", 0, 0)
    width = len(lines[0])
    rows = []
    for r, line in enumerate(lines):
        if len(line) != width:
            raise LevelParseError(f"ragged row (expected {width} cells, got {len(line)})", r, min(len(line), width))
        row = []
        for c, ch in enumerate(line):
            if ch not in CODE_TILES:
                raise LevelParseError(f"unknown tile code {ch!r}", r, c)
            row.append(CODE_TILES[ch])
        rows.append(row)
    try:
        return Level(width, len(rows), np.array(rows, dtype=np.uint8))
    except ConfigError as e:
        raise LevelParseError(str(e), 0, 0) from e
