"""Instruction-conditioned level editing environment and a PPO trainer.

The agent edits one cell per step under a raster-scan cursor. Reward is the
weighted reduction of normalized goal distance over the instructed tasks, so
the undiscounted return of an episode telescopes to
``sum_i w_i * (dist_i(s_0) - dist_i(s_T))``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Callable, Sequence

import numpy as np

from . import neural
from .fitness import (N_TASKS, Direction, GoalSpec, MeasureVector, TaskId, measure, measure_tasks, progress,
                      task_ranges)
from .instruction import Featurizer, InstructionRecord
from .level import DEFAULT_HEIGHT, DEFAULT_PROBS, DEFAULT_WIDTH, Level, Position, TileKind, random_level, set_tile

log = logging.getLogger(__name__)


class ActionKind(IntEnum):
    NOOP = 0
    SET_EMPTY = 1
    SET_WALL = 2
    SET_BAT = 3


N_ACTIONS = len(ActionKind)
ACTION_TILES = {ActionKind.SET_EMPTY: TileKind.EMPTY, ActionKind.SET_WALL: TileKind.WALL,
                ActionKind.SET_BAT: TileKind.BAT}


class EpisodeDoneError(RuntimeError):
    pass


@dataclass(frozen=True)
class RewardWeights:
    rg: float = 1.0
    pl: float = 1.0
    wc: float = 0.15
    bc: float = 0.15
    bd: float = 0.15

    def __post_init__(self):
        if min(self.as_array()) <= 0:
            raise ValueError("reward weights must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([self.rg, self.pl, self.wc, self.bc, self.bd])


@dataclass(frozen=True)
class EnvConfig:
    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT
    probs: tuple = DEFAULT_PROBS
    max_steps: int | None = None        # default 2 * W * H
    change_budget: int | None = None    # default floor(0.3 * W * H)
    weights: RewardWeights = RewardWeights()
    cond_dim: int = 160

    @property
    def n_cells(self) -> int:
        return self.width * self.height

    @property
    def episode_steps(self) -> int:
        return self.max_steps if self.max_steps is not None else 2 * self.n_cells

    @property
    def budget(self) -> int:
        return self.change_budget if self.change_budget is not None else math.floor(0.3 * self.n_cells)

    @property
    def obs_dim(self) -> int:
        return 3 * self.n_cells + 2 + self.cond_dim


@dataclass(frozen=True)
class EnvState:
    level: Level
    cursor: Position
    step: int
    changes: int
    initial: MeasureVector
    goals: GoalSpec
    direction: Direction
    condition: np.ndarray
    current: np.ndarray          # raw measures of active tasks (NaN elsewhere)
    config: EnvConfig

    @property
    def tasks(self) -> list:
        return self.goals.active_tasks()

    @property
    def done(self) -> bool:
        return self.step >= self.config.episode_steps or self.changes >= self.config.budget


def observe(state: EnvState) -> np.ndarray:
    cfg = state.config
    cursor = np.array([state.cursor.row / max(cfg.height - 1, 1), state.cursor.col / max(cfg.width - 1, 1)])
    return np.concatenate([state.level.one_hot(), cursor, state.condition])


def goal_distances(state_or_measures, goals: GoalSpec, config: EnvConfig) -> np.ndarray:
    m = state_or_measures.current if isinstance(state_or_measures, EnvState) else state_or_measures
    return np.abs(goals.targets() - m) / task_ranges(config.width, config.height)


def env_reset(config: EnvConfig, seed: int, record: InstructionRecord, z) -> tuple:
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (config.cond_dim,):
        raise ValueError(f"condition vector shape {z.shape} != ({config.cond_dim},)")
    level = random_level(config.width, config.height, seed, config.probs)
    direction = record.goals.direction
    initial = measure(level, direction)
    current = np.where(record.goals.active(), initial.as_array(), np.nan)
    z = z.copy()
    z.flags.writeable = False
    state = EnvState(level, Position(0, 0), 0, 0, initial, record.goals, direction, z, current, config)
    return state, observe(state)


def env_step(state: EnvState, action) -> tuple:
    """Apply one action; returns (next_state, observation, reward, done)."""
    if state.done:
        raise EpisodeDoneError("episode already finished; call env_reset")
    cfg = state.config
    action = ActionKind(int(action))
    level, changes, current = state.level, state.changes, state.current
    reward = 0.0
    if action != ActionKind.NOOP:
        new_level = set_tile(level, state.cursor, ACTION_TILES[action])
        if new_level is not level:
            changes += 1
            after = measure_tasks(new_level, state.tasks, state.direction)
            ranges = task_ranges(cfg.width, cfg.height)
            targets = state.goals.targets()
            w = cfg.weights.as_array()
            for t in state.tasks:
                before_d = abs(targets[t] - current[t]) / ranges[t]
                after_d = abs(targets[t] - after[t]) / ranges[t]
                reward += w[t] * (before_d - after_d)
            level, current = new_level, after
    flat = state.cursor.row * cfg.width + state.cursor.col + 1
    cursor = Position(*divmod(flat % cfg.n_cells, cfg.width))
    nxt = replace(state, level=level, cursor=cursor, step=state.step + 1, changes=changes, current=current)
    return nxt, observe(nxt), reward, nxt.done


def episode_return_oracle(state0: EnvState, final: EnvState) -> float:
    """Telescoped return sum_i w_i (dist_i(s_0) - dist_i(s_T)), recomputed from scratch."""
    cfg = state0.config
    tasks = state0.tasks
    m0 = measure_tasks(state0.level, tasks, state0.direction)
    mT = measure_tasks(final.level, tasks, final.direction)
    d0 = goal_distances(m0, state0.goals, cfg)
    dT = goal_distances(mT, state0.goals, cfg)
    w = cfg.weights.as_array()
    return float(sum(w[t] * (d0[t] - dT[t]) for t in tasks))


# --- conditioning -------------------------------------------------------------

class EncoderConditioner:
    """Instruction text -> frozen encoder latent, computed once per text."""

    def __init__(self, model, featurizer: Featurizer | None = None):
        from .encoder import embed_instruction
        self._embed = embed_instruction
        self.model = model
        self.featurizer = featurizer or Featurizer(model.config.embed_dim)
        self.dim = model.config.latent_dim
        self._cache = {}

    def __call__(self, record) -> np.ndarray:
        text = record if isinstance(record, str) else record.text
        z = self._cache.get(text)
        if z is None:
            z = self._cache[text] = self._embed(self.model, self.featurizer(text))
        return z


class ScalarConditioner:
    """Text-free condition: (active flag, goal / range) for each task."""

    def __init__(self, width: int = DEFAULT_WIDTH, height: int = DEFAULT_HEIGHT):
        self.ranges = task_ranges(width, height)
        self.dim = 2 * N_TASKS

    def __call__(self, record: InstructionRecord) -> np.ndarray:
        g = record.goals.targets()
        active = ~np.isnan(g)
        out = np.zeros(self.dim)
        out[0::2] = active
        out[1::2] = np.where(active, g / self.ranges, 0.0)
        return out


# --- policy ---------------------------------------------------------------------

@dataclass(frozen=True)
class PPOConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.2
    epochs: int = 4
    minibatch: int = 256
    ent_coef: float = 0.01
    vf_coef: float = 0.5
    lr: float = 3e-4
    max_grad_norm: float = 0.5
    rollout_length: int = 128
    n_envs: int = 16
    updates: int = 100
    hidden: tuple = (256, 256)
    activation: str = "relu"
    probe_interval: int = 1
    normalize_rewards: bool = True
    normalize_obs: bool = True


class ObsNormalizer:
    """Running per-feature mean/variance; inputs are standardized and clipped."""

    clip = 10.0

    def __init__(self, dim: int, mean=None, var=None, count: float = 1e-4):
        self.mean = np.zeros(dim) if mean is None else np.asarray(mean, dtype=np.float64).copy()
        self.var = np.ones(dim) if var is None else np.asarray(var, dtype=np.float64).copy()
        self.count = float(count)

    def update(self, x: np.ndarray) -> None:
        x = x.reshape(-1, self.mean.shape[0])
        b_mean, b_var, b_n = x.mean(axis=0), x.var(axis=0), len(x)
        delta = b_mean - self.mean
        total = self.count + b_n
        self.mean = self.mean + delta * b_n / total
        self.var = (self.var * self.count + b_var * b_n + delta ** 2 * self.count * b_n / total) / total
        self.count = total

    def __call__(self, obs) -> np.ndarray:
        return np.clip((np.asarray(obs) - self.mean) / np.sqrt(self.var + 1e-8), -self.clip, self.clip)


@dataclass
class PolicyBundle:
    actor: neural.DenseNet
    critic: neural.DenseNet
    ppo: PPOConfig
    env: EnvConfig
    actor_opt: neural.AdamState | None = None
    critic_opt: neural.AdamState | None = None
    obs_norm: ObsNormalizer | None = None

    def inputs(self, obs) -> np.ndarray:
        """Observation as fed to the networks."""
        return obs if self.obs_norm is None else self.obs_norm(obs)

    def probs(self, obs) -> np.ndarray:
        return neural.forward(self.actor, self.inputs(obs))

    def value(self, obs) -> np.ndarray:
        return neural.forward(self.critic, self.inputs(obs))[..., 0]

    def act(self, obs, rng: np.random.Generator, greedy: bool = False):
        """(actions, log-probs, values) for a batch of observations."""
        logits = neural.forward(self.actor, self.inputs(obs), logits=True)
        logp = neural.log_softmax(logits)
        if greedy:
            a = logp.argmax(axis=1)
        else:
            a = sample_categorical(np.exp(logp), rng)
        return a, logp[np.arange(len(a)), a], self.value(obs)


class RandomPolicy:
    """Uniformly random actions; the controllability baseline."""

    def act(self, obs, rng: np.random.Generator, greedy: bool = False):
        n = len(obs)
        return rng.integers(N_ACTIONS, size=n), np.full(n, -np.log(N_ACTIONS)), np.zeros(n)


def sample_categorical(p: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(len(p))[:, None]
    return np.minimum((u > np.cumsum(p, axis=1)).sum(axis=1), p.shape[1] - 1)


def init_policy(env: EnvConfig, ppo: PPOConfig = PPOConfig(), seed: int = 0) -> PolicyBundle:
    rng = np.random.default_rng(seed)
    actor = neural.init_net((env.obs_dim, *ppo.hidden, N_ACTIONS), hidden=ppo.activation, output="softmax", rng=rng)
    critic = neural.init_net((env.obs_dim, *ppo.hidden, 1), hidden=ppo.activation, rng=rng)
    # small final actor layer: near-uniform initial policy
    actor.params[-2] *= 0.01
    return PolicyBundle(actor, critic, ppo, env,
                        neural.AdamState.for_params(actor.params, lr=ppo.lr, eps=1e-5),
                        neural.AdamState.for_params(critic.params, lr=ppo.lr, eps=1e-5),
                        ObsNormalizer(env.obs_dim) if ppo.normalize_obs else None)


# --- rollouts -------------------------------------------------------------------

@dataclass
class Episode:
    record: InstructionRecord
    seed: int
    initial: MeasureVector
    final_level: Level
    final: np.ndarray           # raw measures of active tasks at s_T
    ret: float
    length: int

    def progress(self) -> dict:
        """Progress per instructed task (BD measured against the goal direction)."""
        return {t: progress(self.record.goals.target(t), self.initial[t], self.final[t]) for t in self.record.tasks}


@dataclass
class Batch:
    obs: np.ndarray          # (T, N, obs_dim)
    actions: np.ndarray      # (T, N)
    logp: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    last_value: np.ndarray   # (N,)
    episodes: list


class VecRunner:
    """N environments stepped in lockstep with automatic reset.

    Each reset samples an instruction (uniformly, from ``rng``), computes its
    condition once and keeps it for the whole episode.
    """

    def __init__(self, conditioner: Callable, records: Sequence[InstructionRecord], env: EnvConfig,
                 n_envs: int, seed: int):
        self.conditioner = conditioner
        self.records = list(records)
        self.env = env
        self.rng = np.random.default_rng(seed)
        self.seed = seed
        self.n_episodes = 0
        self.states = [self._reset() for _ in range(n_envs)]
        self.returns = np.zeros(n_envs)

    def _reset(self):
        rec = self.records[int(self.rng.integers(len(self.records)))]
        ep_seed = derive_env_seed(self.seed, self.n_episodes)
        self.n_episodes += 1
        state, obs = env_reset(self.env, ep_seed, rec, self.conditioner(rec))
        return [state, obs, rec, ep_seed]

    def collect(self, policy, steps: int) -> Batch:
        n = len(self.states)
        obs_buf = np.empty((steps, n, self.env.obs_dim))
        act = np.empty((steps, n), dtype=np.int64)
        logp = np.empty((steps, n))
        rew = np.empty((steps, n))
        val = np.empty((steps, n))
        done = np.empty((steps, n), dtype=bool)
        episodes = []
        for t in range(steps):
            obs = np.stack([s[1] for s in self.states])
            a, lp, v = policy.act(obs, self.rng)
            obs_buf[t], act[t], logp[t], val[t] = obs, a, lp, v
            for i, slot in enumerate(self.states):
                state, _, rec, ep_seed = slot
                nxt, o, r, d = env_step(state, a[i])
                self.returns[i] += r
                rew[t, i], done[t, i] = r, d
                if d:
                    episodes.append(Episode(rec, ep_seed, nxt.initial, nxt.level, nxt.current,
                                            float(self.returns[i]), nxt.step))
                    self.returns[i] = 0.0
                    self.states[i] = self._reset()
                else:
                    slot[0], slot[1] = nxt, o
        last_obs = np.stack([s[1] for s in self.states])
        last_v = policy.act(last_obs, np.random.default_rng(0))[2]
        return Batch(obs_buf, act, logp, rew, val, done, last_v, episodes)


def derive_env_seed(seed: int, episode: int, stream: int = 0) -> int:
    return int(np.random.SeedSequence([int(seed), 7919 + int(stream), int(episode)]).generate_state(1)[0])


def run_episodes(policy, conditioner: Callable, jobs: Sequence[tuple], env: EnvConfig,
                 seed: int = 0, greedy: bool = False) -> list:
    """Play one full episode per (record, env_seed) job, all in lockstep."""
    rng = np.random.default_rng(seed)
    live = []
    for rec, ep_seed in jobs:
        state, obs = env_reset(env, ep_seed, rec, conditioner(rec))
        live.append([state, obs, rec, ep_seed, 0.0])
    results = [None] * len(live)
    active = list(range(len(live)))
    while active:
        obs = np.stack([live[i][1] for i in active])
        a, _, _ = policy.act(obs, rng, greedy=greedy)
        still = []
        for k, i in enumerate(active):
            state, _, rec, ep_seed, ret = live[i]
            nxt, o, r, d = env_step(state, a[k])
            live[i] = [nxt, o, rec, ep_seed, ret + r]
            if d:
                results[i] = Episode(rec, ep_seed, nxt.initial, nxt.level, nxt.current, ret + r, nxt.step)
            else:
                still.append(i)
        active = still
    return results


def rollout(policy, conditioner: Callable, records: Sequence[InstructionRecord], env: EnvConfig,
            seed: int = 0, n_envs: int = 8, steps: int = 128) -> Batch:
    """Collect ``steps`` transitions from each of ``n_envs`` environments."""
    return VecRunner(conditioner, records, env, n_envs, seed).collect(policy, steps)


# --- PPO ------------------------------------------------------------------------

def gae(rewards, values, dones, last_value, gamma: float, lam: float, normalize: bool = True):
    """Generalized advantage estimates and returns over (T, N) arrays.

    ``dones[t]`` marks that the episode ended with the transition at ``t``.
    Returns are computed from the raw advantages; only the advantages are
    normalized when ``normalize`` is set.
    """
    rewards, values, dones = (np.asarray(x, dtype=np.float64) for x in (rewards, values, dones))
    if not (rewards.shape == values.shape == dones.shape):
        raise ValueError("rewards, values and dones must have the same shape")
    T = len(rewards)
    adv = np.zeros_like(rewards)
    next_value = np.asarray(last_value, dtype=np.float64)
    running = np.zeros_like(next_value)
    for t in reversed(range(T)):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        running = delta + gamma * lam * nonterminal * running
        adv[t] = running
        next_value = values[t]
    returns = adv + values
    if normalize:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    return adv, returns


def ppo_loss_and_grads(policy: PolicyBundle, obs, actions, old_logp, advantages, returns, ppo: PPOConfig):
    """Clipped surrogate + value + entropy loss on one minibatch, with gradients.

    ``obs`` are raw observations; the policy's normalizer (if any) is applied here.
    """
    B = len(actions)
    obs = policy.inputs(obs)
    a_cache = neural.forward_cache(policy.actor, obs)
    logits = a_cache[0][-1]
    logp_all = neural.log_softmax(logits)
    p = np.exp(logp_all)
    idx = np.arange(B)
    ratio = np.exp(logp_all[idx, actions] - old_logp)
    clipped = np.clip(ratio, 1.0 - ppo.clip, 1.0 + ppo.clip)
    surr = np.minimum(ratio * advantages, clipped * advantages)
    entropy = -(p * logp_all).sum(axis=1)

    use_unclipped = ratio * advantages <= clipped * advantages
    d_ratio = np.where(use_unclipped, advantages, 0.0)
    onehot = np.zeros_like(p)
    onehot[idx, actions] = 1.0
    g_logits = -(d_ratio * ratio)[:, None] * (onehot - p) / B
    g_logits += ppo.ent_coef * p * (logp_all + entropy[:, None]) / B
    g_actor, _ = neural.backward(policy.actor, obs, g_logits, logits=True, cache=a_cache, input_grad=False)

    c_cache = neural.forward_cache(policy.critic, obs)
    v = c_cache[0][-1][:, 0]
    g_v = (2.0 * ppo.vf_coef * (v - returns) / B)[:, None]
    g_critic, _ = neural.backward(policy.critic, obs, g_v, logits=True, cache=c_cache, input_grad=False)

    stats = {
        "policy_loss": float(-surr.mean()),
        "value_loss": float(((v - returns) ** 2).mean()),
        "entropy": float(entropy.mean()),
        "clip_frac": float(np.mean(np.abs(ratio - 1.0) > ppo.clip)),
    }
    stats["loss"] = stats["policy_loss"] + ppo.vf_coef * stats["value_loss"] - ppo.ent_coef * stats["entropy"]
    return stats, g_actor, g_critic


def ppo_update(policy: PolicyBundle, batch: Batch, ppo: PPOConfig | None = None,
               rng: np.random.Generator | None = None):
    """Minibatched clipped-surrogate epochs over one rollout batch. Mutates ``policy``."""
    ppo = ppo or policy.ppo
    rng = rng if rng is not None else np.random.default_rng(0)
    adv, ret = gae(batch.rewards, batch.values, batch.dones, batch.last_value, ppo.gamma, ppo.gae_lambda)
    obs = batch.obs.reshape(-1, batch.obs.shape[-1])
    acts = batch.actions.reshape(-1)
    old = batch.logp.reshape(-1)
    adv, ret = adv.reshape(-1), ret.reshape(-1)
    n = len(acts)
    if n == 0:
        raise ValueError("empty batch")
    if policy.actor_opt is None:
        policy.actor_opt = neural.AdamState.for_params(policy.actor.params, lr=ppo.lr, eps=1e-5)
        policy.critic_opt = neural.AdamState.for_params(policy.critic.params, lr=ppo.lr, eps=1e-5)
    totals, count = {}, 0
    for _ in range(ppo.epochs):
        order = rng.permutation(n)
        for start in range(0, n, ppo.minibatch):
            mb = order[start:start + ppo.minibatch]
            stats, ga, gc = ppo_loss_and_grads(policy, obs[mb], acts[mb], old[mb], adv[mb], ret[mb], ppo)
            neural.clip_grad_norm(ga, ppo.max_grad_norm)
            neural.clip_grad_norm(gc, ppo.max_grad_norm)
            neural.adam_step(policy.actor_opt, policy.actor.params, ga)
            neural.adam_step(policy.critic_opt, policy.critic.params, gc)
            for k, v in stats.items():
                totals[k] = totals.get(k, 0.0) + v
            count += 1
    return policy, {k: v / count for k, v in totals.items()}


# --- training loop --------------------------------------------------------------

METRIC_FIELDS = ("update", "mean_return", "train_progress", "probe_progress", "policy_loss",
                 "value_loss", "entropy", "clip_frac")


@dataclass
class TrainingMetrics:
    rows: list = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        i = METRIC_FIELDS.index(name)
        return np.array([r[i] for r in self.rows], dtype=np.float64)

    def to_csv(self) -> str:
        lines = [",".join(METRIC_FIELDS)]
        for r in self.rows:
            lines.append(",".join([str(r[0])] + [repr(float(x)) for x in r[1:]]))
        return "\n".join(lines) + "\n"


class ReturnNormalizer:
    """Scales rewards by the running std of per-env discounted returns."""

    def __init__(self, n_envs: int, gamma: float):
        self.gamma = gamma
        self.ret = np.zeros(n_envs)
        self.count = 1e-4
        self.mean = 0.0
        self.var = 1.0

    def __call__(self, rewards: np.ndarray, dones: np.ndarray) -> np.ndarray:
        seen = np.empty_like(rewards)
        for t in range(len(rewards)):
            self.ret = self.ret * self.gamma + rewards[t]
            seen[t] = self.ret
            self.ret = np.where(dones[t], 0.0, self.ret)
        # Chan et al. parallel mean/variance merge
        b_mean, b_var, b_n = seen.mean(), seen.var(), seen.size
        delta = b_mean - self.mean
        total = self.count + b_n
        self.mean += delta * b_n / total
        self.var = (self.var * self.count + b_var * b_n + delta ** 2 * self.count * b_n / total) / total
        self.count = total
        return rewards / np.sqrt(self.var + 1e-8)


def mean_progress(episodes: Sequence[Episode]) -> float:
    if not episodes:
        return float("nan")
    return float(np.mean([np.mean(list(ep.progress().values())) for ep in episodes]))


def train_agent(conditioner: Callable, records: Sequence[InstructionRecord], env: EnvConfig,
                ppo: PPOConfig = PPOConfig(), seed: int = 0, probe_records: Sequence[InstructionRecord] | None = None,
                probe_seeds: int = 1, callback: Callable | None = None):
    """Alternate rollouts and PPO updates. Returns (PolicyBundle, TrainingMetrics)."""
    if conditioner.dim != env.cond_dim:
        env = replace(env, cond_dim=conditioner.dim)
    policy = init_policy(env, ppo, seed)
    runner = VecRunner(conditioner, records, env, ppo.n_envs, derive_env_seed(seed, 0, stream=1))
    update_rng = np.random.default_rng(derive_env_seed(seed, 0, stream=2))
    probe_records = list(probe_records if probe_records is not None else records)
    probe_jobs = [(r, derive_env_seed(seed, k * probe_seeds + j, stream=3))
                  for k, r in enumerate(probe_records) for j in range(probe_seeds)]
    metrics = TrainingMetrics()
    last_return = float("nan")
    probe = float("nan")
    normalizer = ReturnNormalizer(ppo.n_envs, ppo.gamma) if ppo.normalize_rewards else None
    for u in range(1, ppo.updates + 1):
        batch = runner.collect(policy, ppo.rollout_length)
        if normalizer is not None:
            batch = replace(batch, rewards=normalizer(batch.rewards, batch.dones))
        policy, stats = ppo_update(policy, batch, ppo, update_rng)
        if policy.obs_norm is not None:
            # refreshed only between updates so stored log-probs stay consistent
            policy.obs_norm.update(batch.obs)
        if batch.episodes:
            last_return = float(np.mean([ep.ret for ep in batch.episodes]))
        train_prog = mean_progress(batch.episodes)
        if u % ppo.probe_interval == 0 or u == ppo.updates:
            probe = mean_progress(run_episodes(policy, conditioner, probe_jobs, env, seed=u, greedy=True))
        metrics.rows.append((u, last_return, train_prog, probe, stats["policy_loss"], stats["value_loss"],
                             stats["entropy"], stats["clip_frac"]))
        log.info("update %d return=%.4f probe=%.3f entropy=%.3f", u, last_return, probe, stats["entropy"])
        if callback is not None:
            callback(u, policy, metrics)
    return policy, metrics
