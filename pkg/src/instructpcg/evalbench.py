"""Experiment matrix: Progress evaluation, model variants, embedding export."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .encoder import (
    EncoderConfig,
    EncoderTrainConfig,
    StateBuffer,
    embed_instruction,
    init_encoder,
    train_encoder,
)
from .env_rl import (
    EncoderConditioner,
    EnvConfig,
    PPOConfig,
    ScalarConditioner,
    derive_env_seed,
    run_episodes,
    train_agent,
)
from .instruction import Featurizer, InstructionRecord

log = logging.getLogger(__name__)


class VariantId(Enum):
    MIPCGRL_FULL = "MIPCGRL_FULL"
    NO_CLS = "NO_CLS"
    NO_REG = "NO_REG"
    IPCGRL_SINGLEHEAD = "IPCGRL_SINGLEHEAD"
    CPCGRL_SCALAR = "CPCGRL_SCALAR"


# Encoder switches per variant; everything else is shared with the full model.
VARIANT_SWITCHES = {
    VariantId.MIPCGRL_FULL: {},
    VariantId.NO_CLS: {"use_cls": False},
    VariantId.NO_REG: {"multi_head": False},
    VariantId.IPCGRL_SINGLEHEAD: {"use_cls": False, "multi_head": False},
    VariantId.CPCGRL_SCALAR: {},
}


def variant_encoder_config(base: EncoderConfig, variant: VariantId) -> EncoderConfig:
    return replace(base, **VARIANT_SWITCHES[variant])


def config_diff(a, b) -> dict:
    return {f.name: (getattr(a, f.name), getattr(b, f.name))
            for f in fields(a) if getattr(a, f.name) != getattr(b, f.name)}


# --- evaluation ---------------------------------------------------------------

@dataclass(frozen=True)
class EpisodeLog:
    variant: str
    instruction_set: str
    composition: str
    seed: int
    text: str
    episode: int
    progress: float


@dataclass(frozen=True)
class EvalRow:
    variant: str
    instruction_set: str
    composition: str
    mean_progress: float
    std_progress: float | None
    episodes: int
    seeds: tuple


REPORT_FIELDS = ("variant", "instruction_set", "composition", "mean_progress", "std_progress", "episodes", "seeds")


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)
    episodes: list = field(default_factory=list)

    def extend(self, other: "EvalReport") -> "EvalReport":
        self.rows.extend(other.rows)
        self.episodes.extend(other.episodes)
        return self

    def lookup(self, variant, composition, instruction_set=None) -> EvalRow:
        variant = getattr(variant, "value", variant)
        for r in self.rows:
            if r.variant == variant and r.composition == composition and \
                    (instruction_set is None or r.instruction_set == instruction_set):
                return r
        raise KeyError((variant, composition, instruction_set))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_FIELDS)
        for r in self.rows:
            w.writerow([r.variant, r.instruction_set, r.composition, repr(r.mean_progress),
                        "" if r.std_progress is None else repr(r.std_progress), r.episodes,
                        " ".join(str(s) for s in r.seeds)])
        return buf.getvalue()

    def episodes_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["variant", "instruction_set", "composition", "seed", "text", "episode", "progress"])
        for e in self.episodes:
            w.writerow([e.variant, e.instruction_set, e.composition, e.seed, e.text, e.episode, repr(e.progress)])
        return buf.getvalue()


def aggregate(logs: Sequence[EpisodeLog]) -> list:
    """Mean over seeds of the per-seed mean Progress, per (variant, set, composition)."""
    groups = {}
    for e in logs:
        groups.setdefault((e.variant, e.instruction_set, e.composition), {}).setdefault(e.seed, []).append(e.progress)
    rows = []
    for (variant, iset, comp), by_seed in sorted(groups.items()):
        seeds = tuple(sorted(by_seed))
        per_seed = np.array([np.mean(by_seed[s]) for s in seeds])
        std = float(per_seed.std(ddof=1)) if len(seeds) >= 2 else None
        rows.append(EvalRow(variant, iset, comp, float(per_seed.mean()), std,
                            sum(len(v) for v in by_seed.values()), seeds))
    return rows


def episode_progress(ep) -> float:
    """Mean Progress over the episode's instructed tasks."""
    return float(np.mean(list(ep.progress().values())))


def evaluate(policy, conditioner: Callable, records: Sequence[InstructionRecord], env: EnvConfig,
             episodes_per_record: int = 2, seeds: Sequence[int] = (0,), greedy: bool = True,
             variant: str = "", instruction_set: str = "") -> EvalReport:
    """Progress of ``policy`` on every record.

    ``policy`` and ``conditioner`` may each be a mapping from seed to object,
    for variants trained once per seed.
    """
    logs = []
    variant = getattr(variant, "value", variant)
    for seed in seeds:
        pol = policy[seed] if isinstance(policy, dict) else policy
        cond = conditioner[seed] if isinstance(conditioner, dict) else conditioner
        env_s = env if getattr(cond, "dim", env.cond_dim) == env.cond_dim else replace(env, cond_dim=cond.dim)
        jobs = [(r, derive_env_seed(seed, k * episodes_per_record + j, stream=11))
                for k, r in enumerate(records) for j in range(episodes_per_record)]
        results = run_episodes(pol, cond, jobs, env_s, seed=derive_env_seed(seed, 0, stream=12), greedy=greedy)
        for i, ep in enumerate(results):
            logs.append(EpisodeLog(variant, instruction_set, ep.record.composition, seed, ep.record.text,
                                   i % episodes_per_record, episode_progress(ep)))
    return EvalReport(aggregate(logs), logs)


# --- variants -----------------------------------------------------------------

@dataclass(frozen=True)
class BenchConfig:
    encoder: EncoderConfig = EncoderConfig()
    encoder_train: EncoderTrainConfig = EncoderTrainConfig()
    env: EnvConfig = EnvConfig()
    ppo: PPOConfig = PPOConfig()
    episodes_per_record: int = 2
    greedy: bool = True
    featurizer_seed: int = 0


@dataclass
class VariantArtifacts:
    encoders: dict = field(default_factory=dict)       # seed -> EncoderModel
    policies: dict = field(default_factory=dict)       # seed -> PolicyBundle
    conditioners: dict = field(default_factory=dict)   # seed -> conditioner
    metrics: dict = field(default_factory=dict)        # seed -> TrainingMetrics
    histories: dict = field(default_factory=dict)      # seed -> EncoderHistory


def build_conditioner(variant: VariantId, cfg: BenchConfig, encoder_records, buffer: StateBuffer | None,
                      seed: int, featurizer: Featurizer | None = None, artifacts: VariantArtifacts | None = None):
    if variant is VariantId.CPCGRL_SCALAR:
        return ScalarConditioner(cfg.env.width, cfg.env.height)
    featurizer = featurizer or Featurizer(cfg.encoder.embed_dim, cfg.featurizer_seed)
    enc_cfg = variant_encoder_config(cfg.encoder, variant)
    model, history = train_encoder(init_encoder(enc_cfg, seed), encoder_records, buffer, featurizer,
                                   replace(cfg.encoder_train, seed=seed))
    if artifacts is not None:
        artifacts.encoders[seed] = model
        artifacts.histories[seed] = history
    return EncoderConditioner(model, featurizer)


def run_variant(variant: VariantId, cfg: BenchConfig, seeds: Sequence[int], encoder_records,
                agent_records, eval_sets: dict, buffer: StateBuffer | None = None,
                featurizer: Featurizer | None = None):
    """Train (encoder, agent) per seed for one variant and evaluate it.

    ``eval_sets`` maps an instruction-set name to its records. Returns
    (EvalReport, VariantArtifacts).
    """
    art = VariantArtifacts()
    for seed in seeds:
        cond = build_conditioner(variant, cfg, encoder_records, buffer, seed, featurizer, art)
        env = replace(cfg.env, cond_dim=cond.dim)
        policy, metrics = train_agent(cond, agent_records, env, cfg.ppo, seed=seed)
        art.conditioners[seed], art.policies[seed], art.metrics[seed] = cond, policy, metrics
        log.info("%s seed %d trained", variant.value, seed)
    report = EvalReport()
    for name, records in eval_sets.items():
        report.extend(evaluate(art.policies, art.conditioners, records, cfg.env, cfg.episodes_per_record,
                               seeds, cfg.greedy, variant.value, name))
    return report, art


def paired_seed_comparison(report: EvalReport, a: VariantId, b: VariantId, composition: str) -> dict:
    """Per-seed mean Progress of two variants on one composition and their difference."""
    def per_seed(v):
        out = {}
        for e in report.episodes:
            if e.variant == v.value and e.composition == composition:
                out.setdefault(e.seed, []).append(e.progress)
        return {s: float(np.mean(p)) for s, p in out.items()}
    pa, pb = per_seed(a), per_seed(b)
    seeds = sorted(set(pa) & set(pb))
    return {"seeds": seeds, a.value: [pa[s] for s in seeds], b.value: [pb[s] for s in seeds],
            "mean_diff": float(np.mean([pa[s] - pb[s] for s in seeds])) if seeds else float("nan")}


# --- embedding space ----------------------------------------------------------

@dataclass
class EmbeddingExport:
    texts: list
    compositions: list
    kinds: list                 # "single" / "multi"
    matrix: np.ndarray
    projection: np.ndarray
    explained_variance: np.ndarray

    def embeddings_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["text", "composition", "kind"] + [f"z{i}" for i in range(self.matrix.shape[1])])
        for t, c, k, row in zip(self.texts, self.compositions, self.kinds, self.matrix):
            w.writerow([t, c, k] + [repr(float(x)) for x in row])
        return buf.getvalue()

    def projection_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["text", "composition", "kind", "pc1", "pc2"])
        for t, c, k, (x, y) in zip(self.texts, self.compositions, self.kinds, self.projection):
            w.writerow([t, c, k, repr(float(x)), repr(float(y))])
        return buf.getvalue()


def pca_project(x: np.ndarray, k: int = 2):
    """Centered projection onto the top-k principal axes; returns (points, variances)."""
    x = np.asarray(x, dtype=np.float64)
    centered = x - x.mean(axis=0)
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    # deterministic sign: largest-magnitude loading of each axis is positive
    signs = np.sign(vt[np.arange(len(vt)), np.abs(vt).argmax(axis=1)])
    signs[signs == 0] = 1.0
    vt = vt * signs[:, None]
    k_eff = min(k, vt.shape[0])
    proj = np.zeros((len(x), k))
    proj[:, :k_eff] = centered @ vt[:k_eff].T
    var = np.zeros(k)
    denom = max(len(x) - 1, 1)
    var[:k_eff] = s[:k_eff] ** 2 / denom
    return proj, var


def export_embeddings(model, records: Sequence[InstructionRecord], featurizer: Featurizer | None = None,
                      conditioner: Callable | None = None) -> EmbeddingExport:
    if conditioner is None:
        featurizer = featurizer or Featurizer(model.config.embed_dim)
        rows = [embed_instruction(model, featurizer(r.text)) for r in records]
    else:
        rows = [conditioner(r) for r in records]
    matrix = np.stack(rows)
    proj, var = pca_project(matrix)
    kinds = ["single" if sum(r.active) == 1 else "multi" for r in records]
    return EmbeddingExport([r.text for r in records], [r.composition for r in records], kinds, matrix, proj, var)


@dataclass(frozen=True)
class Separation:
    overall: float
    per_group: dict


def cluster_separation(x: np.ndarray, labels: Sequence) -> Separation:
    """Mean silhouette coefficient (Euclidean); singleton groups score 0."""
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels)
    groups = np.unique(labels)
    if len(groups) < 2:
        raise ValueError("silhouette needs at least two groups")
    sq = (x * x).sum(axis=1)
    dist = np.sqrt(np.maximum(sq[:, None] + sq[None, :] - 2 * x @ x.T, 0.0))
    np.fill_diagonal(dist, 0.0)
    member = labels[:, None] == groups[None, :]          # (n, g)
    sums = dist @ member                                 # total distance to each group
    sizes = member.sum(axis=0)
    own = member.argmax(axis=1)
    n = len(x)
    own_size = sizes[own]
    a = np.where(own_size > 1, sums[np.arange(n), own] / np.maximum(own_size - 1, 1), 0.0)
    other = sums / sizes[None, :]
    other[np.arange(n), own] = np.inf
    b = other.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where((own_size > 1) & (denom > 0), (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    per_group = {str(g): float(s[labels == g].mean()) for g in groups}
    return Separation(float(s.mean()), per_group)
