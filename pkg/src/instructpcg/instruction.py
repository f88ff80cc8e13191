"""Templated instruction corpora and text featurization.

The single-objective set has 5 tasks x 2 condition levels x 8 templates = 80
records; the multi-objective set covers the 10 unordered task pairs x 4
level combinations with 6-7 conjunction templates each, 256 records in all.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import re
import string
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .fitness import N_TASKS, Direction, GoalSpec, TaskId, measure_tasks
from .level import DEFAULT_HEIGHT, DEFAULT_PROBS, DEFAULT_WIDTH, ConfigError, random_level

LOW, HIGH = "LOW", "HIGH"
TRAIN, HOLDOUT = "train", "holdout"
HOLDOUT_FRACTION = 0.2
N_SINGLE_TEMPLATES = 8
DEFAULT_MULTI_SIZE = 256
PERCENTILE_SAMPLES = 10_000
DIRECTIONS = (Direction.TOP, Direction.BOTTOM, Direction.LEFT, Direction.RIGHT)


class DatasetKind(Enum):
    SINGLE = "single"
    MULTI = "multi"


@dataclass(frozen=True)
class InstructionRecord:
    text: str
    active: tuple
    goals: GoalSpec
    split: str = TRAIN

    def __post_init__(self):
        active = tuple(bool(a) for a in self.active)
        if len(active) != N_TASKS or not any(active):
            raise ValueError(f"invalid active mask {self.active!r}")
        if tuple(self.goals.active()) != active:
            raise ValueError(f"goals do not match active mask for {self.text!r}")
        object.__setattr__(self, "active", active)

    @property
    def tasks(self) -> list:
        return [t for t in TaskId if self.active[t]]

    @property
    def composition(self) -> str:
        return "+".join(t.name for t in self.tasks)

    def to_json(self) -> str:
        return json.dumps(
            {"text": self.text, "active": list(self.active), "goals": self.goals.to_dict(), "split": self.split},
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line: str) -> "InstructionRecord":
        d = json.loads(line)
        missing = {"text", "active", "goals", "split"} - d.keys()
        if missing:
            raise ValueError(f"record missing fields {sorted(missing)}")
        if d["split"] not in (TRAIN, HOLDOUT):
            raise ValueError(f"unknown split {d['split']!r}")
        return cls(d["text"], tuple(d["active"]), GoalSpec.from_dict(d["goals"]), d["split"])


@dataclass(frozen=True)
class InstructionDataset:
    records: tuple
    kind: DatasetKind

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def split(self, name: str) -> list:
        return [r for r in self.records if r.split == name]

    def mean_length(self) -> float:
        return float(np.mean([len(r.text) for r in self.records]))


# --- templates --------------------------------------------------------------

SINGLE_TEMPLATES = {
    (TaskId.RG, LOW): [
        "A level with few regions", "Keep the number of regions low", "Make one big connected region",
        "Only a couple of regions please", "Few separate regions", "Minimize the number of regions",
        "I want few regions", "Connect everything into few regions",
    ],
    (TaskId.RG, HIGH): [
        "A level with many regions", "Increase the number of regions", "Split the map into many regions",
        "Lots of separate regions", "Many isolated regions", "Maximize the number of regions",
        "I want many regions", "Create lots of disconnected regions",
    ],
    (TaskId.PL, LOW): [
        "Short path length", "Make the path short", "A level with a short path",
        "Keep the longest path short", "I want a short path", "Reduce the path length",
        "The path should be short", "Short paths only",
    ],
    (TaskId.PL, HIGH): [
        "Long path length", "Make the path long", "A level with a long path",
        "Extend the path as far as possible", "I want a long path", "Increase the path length",
        "The path should be long", "A long winding path",
    ],
    (TaskId.WC, LOW): [
        "Few walls", "A level with few walls", "Remove most of the walls", "Keep the wall count low",
        "Only a small number of walls", "I want fewer walls", "Not many walls please", "Reduce the walls",
    ],
    (TaskId.WC, HIGH): [
        "Many walls", "A level with many walls", "Add lots of walls", "Keep the wall count high",
        "A large number of walls", "I want more walls", "Plenty of walls please", "Increase the walls",
    ],
    (TaskId.BC, LOW): [
        "Few bats", "A level with few bats", "Remove most of the bats", "Keep the bat count low",
        "Only a small number of bats", "I want fewer bats", "Not many bats please", "Reduce the bats",
    ],
    (TaskId.BC, HIGH): [
        "Many bats", "A level with many bats", "Add lots of bats", "Keep the bat count high",
        "A large number of bats", "I want more bats", "Plenty of bats please", "Increase the bats",
    ],
    (TaskId.BD, LOW): [
        "No bats on the {d} side", "Keep bats away from the {d}", "The {d} half should have no bats",
        "Move the bats out of the {d}", "Avoid bats in the {d} half", "Bats must stay off the {d} side",
        "Clear the bats from the {d}", "No bats toward the {d}",
    ],
    (TaskId.BD, HIGH): [
        "All bats on the {d} side", "Put every bat in the {d} half", "Bats should gather at the {d}",
        "Move the bats to the {d}", "Place the bats in the {d} half", "Bats must stay on the {d} side",
        "Crowd the bats into the {d}", "All bats toward the {d}",
    ],
}

# Phrase variants used inside conjunctions.
PHRASES = {
    (TaskId.RG, LOW): ["few separate regions", "a single connected region", "a small number of regions"],
    (TaskId.RG, HIGH): ["many separate regions", "lots of disconnected regions", "a large number of regions"],
    (TaskId.PL, LOW): ["a short path length", "only a short path", "a path that stays short"],
    (TaskId.PL, HIGH): ["a long path length", "a very long path", "a path that winds far"],
    (TaskId.WC, LOW): ["few walls", "a small number of walls", "not many walls"],
    (TaskId.WC, HIGH): ["many walls", "a large number of walls", "plenty of walls"],
    (TaskId.BC, LOW): ["few bats", "a small number of bats", "not many bats"],
    (TaskId.BC, HIGH): ["many bats", "a large number of bats", "plenty of bats"],
    (TaskId.BD, LOW): ["no bats on the {d} side", "bats kept away from the {d}", "the {d} half free of bats"],
    (TaskId.BD, HIGH): ["all bats on the {d} side", "bats gathered at the {d}", "every bat in the {d} half"],
}

CONJUNCTIONS = [
    "Make a level with {a} and {b}",
    "I want {a}, and also {b}",
    "Generate {a} together with {b}",
    "Please create {a} as well as {b}",
    "Design a map that has {a} plus {b}",
    "The level should have {a} and {b}",
    "Build a stage featuring {a} along with {b}",
]


def _holdout_count(n: int) -> int:
    return max(1, round(HOLDOUT_FRACTION * n))


# --- goal values ------------------------------------------------------------

@lru_cache(maxsize=8)
def goal_percentiles(width: int = DEFAULT_WIDTH, height: int = DEFAULT_HEIGHT,
                     probs: tuple = DEFAULT_PROBS, samples: int = PERCENTILE_SAMPLES,
                     seed: int = 12345) -> dict:
    """LOW/HIGH goals per count task: 25th/75th percentile of the raw measure
    over ``samples`` random levels. Returns {(task, level): value}."""
    tasks = (TaskId.RG, TaskId.PL, TaskId.WC, TaskId.BC)
    values = np.empty((samples, len(tasks)))
    for i in range(samples):
        level = random_level(width, height, seed * 1_000_003 + i, probs)
        values[i] = measure_tasks(level, tasks)[list(tasks)]
    out = {}
    for j, t in enumerate(tasks):
        lo, hi = np.percentile(values[:, j], [25, 75], method="nearest")
        if lo == hi:
            raise ConfigError(f"{width}x{height} grid too small to separate LOW/HIGH goals for {t.name}")
        out[(t, LOW)] = float(lo)
        out[(t, HIGH)] = float(hi)
    out[(TaskId.BD, LOW)] = 0.0
    out[(TaskId.BD, HIGH)] = 1.0
    return out


def _goal_spec(conds: Sequence[tuple], values: Mapping, direction: Direction) -> GoalSpec:
    kw = {}
    for task, lvl in conds:
        g = values[(task, lvl)]
        if task == TaskId.BD:
            kw["bd"] = (direction, g)
        else:
            kw[task.name.lower()] = g
    return GoalSpec(**kw)


def _mask(tasks: Iterable[TaskId]) -> tuple:
    m = [False] * N_TASKS
    for t in tasks:
        m[t] = True
    return tuple(m)


def generate_datasets(seed: int = 0, width: int = DEFAULT_WIDTH, height: int = DEFAULT_HEIGHT,
                      probs: tuple = DEFAULT_PROBS, multi_size: int = DEFAULT_MULTI_SIZE,
                      percentile_samples: int = PERCENTILE_SAMPLES):
    """Build the (single, multi) instruction datasets for a grid size."""
    values = goal_percentiles(width, height, tuple(probs), percentile_samples)
    rng = np.random.default_rng(seed)

    single = []
    for (task, lvl), templates in SINGLE_TEMPLATES.items():
        n_hold = _holdout_count(len(templates))
        for i, tpl in enumerate(templates):
            direction = DIRECTIONS[i % 4]
            text = tpl.format(d=direction.value)
            split = HOLDOUT if i >= len(templates) - n_hold else TRAIN
            single.append(InstructionRecord(text, _mask([task]), _goal_spec([(task, lvl)], values, direction), split))

    combos = [
        (a, la, b, lb)
        for a, b in itertools.combinations(TaskId, 2)
        for la, lb in itertools.product((LOW, HIGH), repeat=2)
    ]
    base, extra = divmod(multi_size, len(combos))
    if base < 2 or base + (extra > 0) > len(CONJUNCTIONS):
        raise ConfigError(f"cannot build {multi_size} multi-objective records from {len(combos)} combinations")
    n_templates = np.full(len(combos), base)
    n_templates[rng.permutation(len(combos))[:extra]] += 1
    conj_offset = rng.integers(len(CONJUNCTIONS), size=len(combos))

    multi = []
    for k, (a, la, b, lb) in enumerate(combos):
        n = int(n_templates[k])
        n_hold = _holdout_count(n)
        for j in range(n):
            direction = DIRECTIONS[(k + j) % 4]
            pa = PHRASES[(a, la)][j % 3].format(d=direction.value)
            pb = PHRASES[(b, lb)][(j + k) % 3].format(d=direction.value)
            if j % 2:
                pa, pb = pb, pa
            text = CONJUNCTIONS[(conj_offset[k] + j) % len(CONJUNCTIONS)].format(a=pa, b=pb)
            split = HOLDOUT if j >= n - n_hold else TRAIN
            multi.append(InstructionRecord(text, _mask([a, b]), _goal_spec([(a, la), (b, lb)], values, direction), split))

    return (InstructionDataset(tuple(single), DatasetKind.SINGLE),
            InstructionDataset(tuple(multi), DatasetKind.MULTI))


def write_dataset(dataset: InstructionDataset, path) -> None:
    Path(path).write_text("".join(r.to_json() + "\n" for r in dataset.records), encoding="utf-8")


def read_dataset(path) -> InstructionDataset:
    records = tuple(
        InstructionRecord.from_json(line)
        for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()
    )
    if not records:
        raise ValueError(f"{path}: empty dataset")
    kind = DatasetKind.SINGLE if all(sum(r.active) == 1 for r in records) else DatasetKind.MULTI
    return InstructionDataset(records, kind)


# --- featurization ----------------------------------------------------------

class EmbeddingSource(Enum):
    HASH = "hash"
    EXTERNAL = "external"


@dataclass(frozen=True)
class Embedding:
    values: np.ndarray
    source: EmbeddingSource = EmbeddingSource.HASH

    @property
    def dim(self) -> int:
        return len(self.values)


_PUNCT = str.maketrans("", "", string.punctuation)


def tokenize(text: str) -> list:
    return text.lower().translate(_PUNCT).split()


@lru_cache(maxsize=65536)
def _hash_token(token: str, dim: int, seed: int) -> tuple:
    h = hashlib.blake2b(f"{seed}\x00{token}".encode(), digest_size=8).digest()
    s = hashlib.blake2b(f"{seed}\x00{token}".encode(), digest_size=1, person=b"sign").digest()
    return int.from_bytes(h, "little") % dim, 1.0 if s[0] & 1 else -1.0


def featurize(text: str, dim: int = 256, seed: int = 0) -> Embedding:
    """Signed feature hashing of word unigrams and bigrams, L2-normalized."""
    if dim < 16:
        raise ValueError(f"featurizer dim must be >= 16, got {dim}")
    words = tokenize(text)
    if not words:
        raise ValueError(f"instruction {text!r} is empty after normalization")
    grams = words + [f"{a} {b}" for a, b in zip(words, words[1:])]
    vec = np.zeros(dim)
    for g in grams:
        i, sign = _hash_token(g, dim, seed)
        vec[i] += sign
    norm = np.linalg.norm(vec)
    if norm == 0:
        # every feature cancelled out; fall back to the unsigned histogram
        for g in grams:
            vec[_hash_token(g, dim, seed)[0]] += 1.0
        norm = np.linalg.norm(vec)
    return Embedding(vec / norm, EmbeddingSource.HASH)


class MissingEmbeddingError(KeyError):
    pass


@dataclass
class EmbeddingTable:
    """Exact-match text -> externally computed sentence embedding."""

    vectors: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return len(next(iter(self.vectors.values())).values)

    def __len__(self):
        return len(self.vectors)

    def __getitem__(self, text: str) -> Embedding:
        try:
            return self.vectors[text]
        except KeyError:
            raise MissingEmbeddingError(f"no external embedding for instruction {text!r}") from None

    def require(self, texts: Iterable[str]) -> None:
        missing = [t for t in texts if t not in self.vectors]
        if missing:
            listing = "\n  ".join(missing)
            raise MissingEmbeddingError(f"{len(missing)} instruction(s) have no external embedding:\n  {listing}")


def load_external_embeddings(path) -> EmbeddingTable:
    vectors = {}
    dim = None
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        d = json.loads(line)
        text, vec = d["text"], np.asarray(d["vector"], dtype=np.float64)
        if text in vectors:
            raise ValueError(f"{path}:{lineno}: duplicate text {text!r}")
        if vec.ndim != 1 or (dim is not None and len(vec) != dim):
            raise ValueError(f"{path}:{lineno}: vector dimension {vec.shape} differs from {dim}")
        if not np.all(np.isfinite(vec)):
            raise ValueError(f"{path}:{lineno}: non-finite vector entries")
        dim = len(vec)
        vectors[text] = Embedding(vec, EmbeddingSource.EXTERNAL)
    if not vectors:
        raise ValueError(f"{path}: no embeddings")
    return EmbeddingTable(vectors)


def write_external_embeddings(table: EmbeddingTable | Mapping, path) -> None:
    vectors = table.vectors if isinstance(table, EmbeddingTable) else table
    lines = []
    for text, emb in vectors.items():
        v = emb.values if isinstance(emb, Embedding) else np.asarray(emb)
        lines.append(json.dumps({"text": text, "vector": [float(x) for x in v]}))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


class Featurizer:
    """Text front-end: hash featurizer by default, external table when given."""

    def __init__(self, dim: int = 256, seed: int = 0, table: EmbeddingTable | None = None):
        self.table = table
        self.dim = table.dim if table is not None else dim
        self.seed = seed
        self._cache = {}

    def __call__(self, text: str) -> np.ndarray:
        v = self._cache.get(text)
        if v is None:
            emb = self.table[text] if self.table is not None else featurize(text, self.dim, self.seed)
            v = self._cache[text] = emb.values
        return v
