"""Task-specific instruction encoder.

A text embedding goes through E to a latent of ``d * n_task`` values, split
into one contiguous block per task. The multi-label classifier C predicts
which tasks the instruction mentions; each block is scaled by its task
probability (treated as a constant in the backward pass) and, together with a
state drawn from the offline buffer, fed to the decoder D which regresses the
per-task fitness of that state under the instruction's goals.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import neural
from .fitness import FITNESS_MAX, N_TASKS, Direction, TaskId, bat_direction_fraction, measure, task_ranges
from .instruction import DIRECTIONS, Featurizer, InstructionRecord
from .level import DEFAULT_HEIGHT, DEFAULT_PROBS, DEFAULT_WIDTH, Level, random_level

log = logging.getLogger(__name__)


def derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


@dataclass(frozen=True)
class EncoderConfig:
    embed_dim: int = 256
    d: int = 32
    n_task: int = N_TASKS
    e_hidden: tuple = (256,)
    c_hidden: tuple = ()
    d_hidden: tuple = (256, 256)
    state_dim: int = 3 * DEFAULT_WIDTH * DEFAULT_HEIGHT
    hidden: str = "tanh"
    use_cls: bool = True        # False: p == 1 everywhere and no BCE term
    multi_head: bool = True     # False: one decoder output regressing the mean active fitness
    hard_threshold: bool = False
    lambda_cls: float = 1.0

    @property
    def latent_dim(self) -> int:
        return self.d * self.n_task

    @property
    def n_heads(self) -> int:
        return self.n_task if self.multi_head else 1


@dataclass
class EncoderModel:
    E: neural.DenseNet
    C: neural.DenseNet
    D: neural.DenseNet
    config: EncoderConfig

    def copy(self) -> "EncoderModel":
        return EncoderModel(self.E.copy(), self.C.copy(), self.D.copy(), self.config)


def init_encoder(config: EncoderConfig = EncoderConfig(), seed: int = 0) -> EncoderModel:
    rng = np.random.default_rng(seed)
    c = config
    E = neural.init_net((c.embed_dim, *c.e_hidden, c.latent_dim), hidden=c.hidden, rng=rng)
    C = neural.init_net((c.latent_dim, *c.c_hidden, c.n_task), hidden=c.hidden, output="sigmoid", rng=rng)
    D = neural.init_net((c.latent_dim + c.state_dim, *c.d_hidden, c.n_heads), hidden=c.hidden, rng=rng)
    return EncoderModel(E, C, D, config)


# --- state buffer -------------------------------------------------------------

@dataclass
class StateBuffer:
    """Offline sample of levels with one-hot features and raw measures.

    ``measures`` holds RG, PL, WC, BC and BD (for TOP); ``bd_by_dir`` holds
    the bat fraction for each of the four directions.
    """

    levels: list
    features: np.ndarray
    measures: np.ndarray
    bd_by_dir: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        if not self.levels:
            raise ValueError("state buffer is empty")

    def __len__(self):
        return len(self.levels)

    def fitness_targets(self, idx: np.ndarray, records: Sequence[InstructionRecord]) -> np.ndarray:
        """Goal fitness of buffer states ``idx[k]`` under ``records[k]``; (B, 5), 0 where inactive."""
        m = self.measures[idx].copy()
        dirs = np.array([DIRECTIONS.index(r.goals.direction) for r in records])
        m[:, TaskId.BD] = self.bd_by_dir[idx, dirs]
        targets = np.array([r.goals.targets() for r in records])
        dist = np.abs(targets - m) / task_ranges(self.width, self.height)
        fit = np.clip(FITNESS_MAX - 2 * FITNESS_MAX * dist, -FITNESS_MAX, FITNESS_MAX)
        return np.where(np.isnan(targets), 0.0, fit)


def build_state_buffer(n: int = 10_000, width: int = DEFAULT_WIDTH, height: int = DEFAULT_HEIGHT,
                       seed: int = 0, probs=DEFAULT_PROBS, levels: Sequence[Level] | None = None) -> StateBuffer:
    if levels is None:
        if n < 1:
            raise ValueError("state buffer needs at least one entry")
        levels = [random_level(width, height, derive_seed(seed, i), probs) for i in range(n)]
    levels = list(levels)
    features = np.stack([lv.one_hot() for lv in levels])
    measures = np.empty((len(levels), N_TASKS))
    bd = np.empty((len(levels), len(DIRECTIONS)))
    for i, lv in enumerate(levels):
        measures[i] = measure(lv, Direction.TOP).as_array()
        bd[i] = [bat_direction_fraction(lv, d) for d in DIRECTIONS]
    return StateBuffer(levels, features, measures, bd, levels[0].width, levels[0].height)


# --- forward pieces -----------------------------------------------------------

def _emb_values(emb) -> np.ndarray:
    return np.asarray(getattr(emb, "values", emb), dtype=np.float64)


def encode(model: EncoderModel, emb) -> np.ndarray:
    return neural.forward(model.E, _emb_values(emb))


def classify(model: EncoderModel, z_enc) -> np.ndarray:
    """Task probabilities in (0, 1); all ones when the classifier is disabled."""
    if not model.config.use_cls:
        z = np.asarray(z_enc)
        return np.ones(z.shape[:-1] + (model.config.n_task,))
    return neural.forward(model.C, z_enc)


def weight_subvectors(z_enc, p, d: int | None = None) -> np.ndarray:
    """Scale contiguous block i of ``z_enc`` by ``p[i]``."""
    z = np.asarray(z_enc, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    n_task = p.shape[-1]
    d = d if d is not None else z.shape[-1] // n_task
    if z.shape[-1] != d * n_task:
        raise ValueError(f"latent length {z.shape[-1]} is not {n_task} blocks of {d}")
    return z * np.repeat(p, d, axis=-1)


def predict_fitness(model: EncoderModel, z_weighted, state_features) -> np.ndarray:
    x = np.concatenate([np.asarray(z_weighted), np.asarray(state_features)], axis=-1)
    return neural.forward(model.D, x)


def _weighting_probs(model: EncoderModel, p: np.ndarray) -> np.ndarray:
    if not model.config.use_cls:
        return np.ones_like(p)
    if model.config.hard_threshold:
        return (p > 0.5).astype(np.float64)
    return p


def embed_instruction(model: EncoderModel, instruction, featurizer: Featurizer | None = None) -> np.ndarray:
    """Text (or embedding) -> weighted task latent fed to the policy."""
    if isinstance(instruction, str):
        featurizer = featurizer or Featurizer(model.config.embed_dim)
        instruction = featurizer(instruction)
    z = encode(model, instruction)
    p = _weighting_probs(model, classify(model, z))
    return weight_subvectors(z, p, model.config.d)


# --- training -----------------------------------------------------------------

def regression_targets(model: EncoderModel, fitness: np.ndarray, active: np.ndarray):
    """(targets, mask) matching the decoder's head layout."""
    if model.config.multi_head:
        return fitness, active.astype(np.float64)
    mean_fit = (fitness * active).sum(axis=1, keepdims=True) / active.sum(axis=1, keepdims=True)
    return mean_fit, np.ones_like(mean_fit)


def loss_and_grads(model: EncoderModel, emb: np.ndarray, states: np.ndarray, targets: np.ndarray,
                   mask: np.ndarray, labels: np.ndarray, lambda_cls: float | None = None):
    """Combined loss on a batch and gradients for E, C and D.

    MSE is averaged over the unmasked (item, head) entries; BCE over all
    (item, task) entries. The probabilities used for weighting carry no
    gradient, so C only receives the BCE gradient.
    """
    cfg = model.config
    lam = cfg.lambda_cls if lambda_cls is None else lambda_cls
    e_cache = neural.forward_cache(model.E, emb)
    z = e_cache[0][-1]
    c_cache = neural.forward_cache(model.C, z)
    logits = c_cache[0][-1]
    p = neural.sigmoid(logits)
    pw = _weighting_probs(model, p)
    zw = weight_subvectors(z, pw, cfg.d)
    d_in = np.concatenate([zw, states], axis=1)
    d_cache = neural.forward_cache(model.D, d_in)
    pred = d_cache[0][-1]

    denom = max(mask.sum(), 1.0)
    err = (pred - targets) * mask
    mse = float((err * err).sum() / denom)
    gD, g_in = neural.backward(model.D, d_in, 2.0 * err / denom, logits=True, cache=d_cache)
    g_z = g_in[:, : cfg.latent_dim] * np.repeat(pw, cfg.d, axis=1)

    if cfg.use_cls:
        # log(1 + e^x) - y*x, written stably
        bce_terms = np.maximum(logits, 0) - logits * labels + np.log1p(np.exp(-np.abs(logits)))
        bce = float(bce_terms.mean())
        g_logits = lam * (p - labels) / labels.size
        gC, g_zc = neural.backward(model.C, z, g_logits, logits=True, cache=c_cache)
        g_z = g_z + g_zc
    else:
        bce = 0.0
        gC = model.C.zeros_like()
    gE, _ = neural.backward(model.E, emb, g_z, logits=True, cache=e_cache, input_grad=False)
    return {"mse": mse, "bce": bce, "total": mse + lam * bce}, {"E": gE, "C": gC, "D": gD}


@dataclass
class EncoderTrainConfig:
    epochs: int = 100
    batch_size: int = 32
    lr: float = 1e-3
    states_per_record: int = 4
    lambda_cls: float | None = None
    freeze: tuple = ()
    seed: int = 0


@dataclass
class EncoderHistory:
    rows: list = field(default_factory=list)   # (epoch, mse, bce, total)

    def total(self) -> np.ndarray:
        return np.array([r[3] for r in self.rows])

    def to_csv(self) -> str:
        lines = ["epoch,mse,bce,total"]
        lines += [f"{e},{m!r},{b!r},{t!r}" for e, m, b, t in self.rows]
        return "\n".join(lines) + "\n"


def train_encoder(model: EncoderModel, records: Sequence[InstructionRecord], buffer: StateBuffer,
                  featurizer: Featurizer | None = None, train: EncoderTrainConfig = EncoderTrainConfig()):
    """Jointly minimise masked MSE + lambda * BCE. Returns (trained copy, history)."""
    if not records:
        raise ValueError("no instruction records to train on")
    if len(buffer) == 0:
        raise ValueError("state buffer is empty")
    model = model.copy()
    cfg = model.config
    if buffer.features.shape[1] != cfg.state_dim:
        raise ValueError(f"buffer state dim {buffer.features.shape[1]} != encoder state dim {cfg.state_dim}")
    featurizer = featurizer or Featurizer(cfg.embed_dim)
    embs = np.stack([featurizer(r.text) for r in records])
    if embs.shape[1] != cfg.embed_dim:
        raise ValueError(f"embedding dim {embs.shape[1]} != encoder input dim {cfg.embed_dim}")
    labels_all = np.array([r.active for r in records], dtype=np.float64)
    rng = np.random.default_rng(train.seed)

    trainable = [n for n in ("E", "C", "D") if n not in train.freeze and (n != "C" or cfg.use_cls)]
    nets = {"E": model.E, "C": model.C, "D": model.D}
    opt = {n: neural.AdamState.for_params(nets[n].params, lr=train.lr) for n in trainable}

    history = EncoderHistory()
    for epoch in range(1, train.epochs + 1):
        order = np.concatenate([rng.permutation(len(records)) for _ in range(train.states_per_record)])
        sums = np.zeros(3)
        n_batches = 0
        for start in range(0, len(order), train.batch_size):
            idx = order[start:start + train.batch_size]
            s_idx = rng.integers(len(buffer), size=len(idx))
            fit = buffer.fitness_targets(s_idx, [records[i] for i in idx])
            targets, mask = regression_targets(model, fit, labels_all[idx])
            losses, grads = loss_and_grads(model, embs[idx], buffer.features[s_idx], targets, mask,
                                           labels_all[idx], train.lambda_cls)
            for n in trainable:
                neural.adam_step(opt[n], nets[n].params, grads[n])
            sums += (losses["mse"], losses["bce"], losses["total"])
            n_batches += 1
        mse, bce, total = sums / n_batches
        history.rows.append((epoch, mse, bce, total))
        log.debug("encoder epoch %d mse=%.4f bce=%.4f", epoch, mse, bce)
    return model, history


def subset_accuracy(model: EncoderModel, records: Sequence[InstructionRecord],
                    featurizer: Featurizer | None = None) -> float:
    """Fraction of records whose thresholded task probabilities match the active mask exactly."""
    featurizer = featurizer or Featurizer(model.config.embed_dim)
    embs = np.stack([featurizer(r.text) for r in records])
    p = classify(model, encode(model, embs))
    labels = np.array([r.active for r in records])
    return float(np.mean(np.all((p > 0.5) == labels, axis=1)))
