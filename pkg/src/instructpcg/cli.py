"""Command-line entry point.

    instructpcg dataset | train-encoder | train-agent | eval | ablate | generate | export-embeddings
        [--config FILE.ini] [--seed N] [--out DIR] [--reproducible] [--set section.key=value ...]

Configuration precedence: flags > config file > defaults.
"""

from __future__ import annotations

import argparse
import configparser
import contextlib
import dataclasses
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import checkpoint
from .encoder import EncoderConfig, EncoderTrainConfig, build_state_buffer, init_encoder, train_encoder
from .env_rl import (
    EncoderConditioner,
    EnvConfig,
    PPOConfig,
    RewardWeights,
    ScalarConditioner,
    env_reset,
    env_step,
    train_agent,
)
from .evalbench import (
    BenchConfig,
    EvalReport,
    VariantId,
    cluster_separation,
    evaluate,
    export_embeddings,
    run_variant,
    variant_encoder_config,
)
from .fitness import TaskId, progress
from .instruction import (
    Featurizer,
    InstructionRecord,
    featurize,
    generate_datasets,
    load_external_embeddings,
    read_dataset,
    write_dataset,
)
from .level import ConfigError, render_level

log = logging.getLogger("instructpcg")


# --- configuration ------------------------------------------------------------

@dataclass
class RunSection:
    name: str = "default"
    seed: int = 0
    seeds: tuple = (0, 1, 2)
    out: str = ""
    reproducible: bool = False


@dataclass
class GridSection:
    width: int = 16
    height: int = 16
    probs: tuple = (0.6, 0.3, 0.1)


@dataclass
class FeaturizerSection:
    mode: str = "hash"          # hash | external
    dim: int = 256
    seed: int = 0
    external_path: str = ""


@dataclass
class DatasetSection:
    seed: int = 0
    multi_size: int = 256
    single_path: str = ""
    multi_path: str = ""


@dataclass
class EncoderSection:
    variant: str = "MIPCGRL_FULL"
    d: int = 32
    e_hidden: tuple = (256,)
    d_hidden: tuple = (256, 256)
    epochs: int = 100
    lambda_cls: float = 1.0
    lr: float = 1e-3
    batch_size: int = 32
    states_per_record: int = 4
    buffer_size: int = 10_000


@dataclass
class EnvSection:
    max_steps: int = 0          # 0: 2 * W * H
    change_budget: int = 0      # 0: floor(0.3 * W * H)
    w_rg: float = 1.0
    w_pl: float = 1.0
    w_wc: float = 0.15
    w_bc: float = 0.15
    w_bd: float = 0.15


@dataclass
class PPOSection:
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
    probe_interval: int = 10
    normalize_rewards: bool = True


@dataclass
class EvalSection:
    train_tasks: str = ""       # e.g. "WC" or "WC+BC, BC+BD"; empty = every composition
    eval_tasks: str = ""
    instructions: str = "all"   # single | multi | all
    episodes_per_record: int = 2
    greedy: bool = True
    variants: str = "all"


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    grid: GridSection = field(default_factory=GridSection)
    featurizer: FeaturizerSection = field(default_factory=FeaturizerSection)
    dataset: DatasetSection = field(default_factory=DatasetSection)
    encoder: EncoderSection = field(default_factory=EncoderSection)
    env: EnvSection = field(default_factory=EnvSection)
    ppo: PPOSection = field(default_factory=PPOSection)
    eval: EvalSection = field(default_factory=EvalSection)

    @property
    def out_dir(self) -> Path:
        return Path(self.run.out) if self.run.out else Path("runs") / self.run.name

    def validate(self) -> None:
        g = self.grid
        if g.width < 2 or g.height < 2:
            raise ConfigError("grid must be at least 2x2")
        if len(g.probs) != 3 or abs(sum(g.probs) - 1.0) > 1e-9 or min(g.probs) < 0:
            raise ConfigError(f"grid.probs must be 3 non-negative values summing to 1, got {g.probs}")
        if self.featurizer.mode not in ("hash", "external"):
            raise ConfigError(f"featurizer.mode must be hash or external, got {self.featurizer.mode!r}")
        if self.featurizer.mode == "hash" and self.featurizer.dim < 16:
            raise ConfigError("featurizer.dim must be >= 16")
        if self.featurizer.mode == "external" and not self.featurizer.external_path:
            raise ConfigError("featurizer.external_path is required in external mode")
        if self.encoder.variant not in VariantId.__members__:
            raise ConfigError(f"unknown encoder.variant {self.encoder.variant!r}")
        if self.encoder.d < 1 or self.encoder.epochs < 1 or self.encoder.buffer_size < 1:
            raise ConfigError("encoder.d, encoder.epochs and encoder.buffer_size must be positive")
        if self.ppo.minibatch < 1 or self.ppo.n_envs < 1 or self.ppo.rollout_length < 1:
            raise ConfigError("ppo batch sizes must be positive")
        if min(self.env.w_rg, self.env.w_pl, self.env.w_wc, self.env.w_bc, self.env.w_bd) <= 0:
            raise ConfigError("reward weights must be positive")
        if self.env.change_budget < 0 or self.env.max_steps < 0:
            raise ConfigError("env limits must be non-negative")
        if not self.run.seeds:
            raise ConfigError("run.seeds is empty")
        for spec in (self.eval.train_tasks, self.eval.eval_tasks):
            parse_compositions(spec)

    # derived module configs

    def embed_dim(self) -> int:
        if self.featurizer.mode == "external":
            return load_external_embeddings(self.featurizer.external_path).dim
        return self.featurizer.dim

    def encoder_config(self, variant: VariantId | None = None) -> EncoderConfig:
        e = self.encoder
        base = EncoderConfig(embed_dim=self.embed_dim(), d=e.d, e_hidden=tuple(e.e_hidden), d_hidden=tuple(e.d_hidden),
                             state_dim=3 * self.grid.width * self.grid.height, lambda_cls=e.lambda_cls)
        return variant_encoder_config(base, variant or VariantId[e.variant])

    def encoder_train(self, seed: int) -> EncoderTrainConfig:
        e = self.encoder
        return EncoderTrainConfig(epochs=e.epochs, batch_size=e.batch_size, lr=e.lr,
                                  states_per_record=e.states_per_record, seed=seed)

    def env_config(self, cond_dim: int = 160) -> EnvConfig:
        v = self.env
        return EnvConfig(self.grid.width, self.grid.height, tuple(self.grid.probs), v.max_steps or None,
                         v.change_budget or None, RewardWeights(v.w_rg, v.w_pl, v.w_wc, v.w_bc, v.w_bd), cond_dim)

    def ppo_config(self) -> PPOConfig:
        return PPOConfig(**{f.name: getattr(self.ppo, f.name) for f in dataclasses.fields(PPOSection)})

    def bench_config(self) -> BenchConfig:
        return BenchConfig(self.encoder_config(VariantId.MIPCGRL_FULL), self.encoder_train(self.run.seed),
                           self.env_config(), self.ppo_config(), self.eval.episodes_per_record, self.eval.greedy,
                           self.featurizer.seed)


def _coerce(value: str, default):
    if isinstance(default, bool):
        return configparser.RawConfigParser.BOOLEAN_STATES[value.strip().lower()]
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    if isinstance(default, tuple):
        kind = type(default[0]) if default else float
        return tuple(kind(x) for x in value.replace(",", " ").split())
    return value


def apply_setting(cfg: RunConfig, section: str, key: str, value: str) -> None:
    sec = getattr(cfg, section, None)
    if sec is None or not dataclasses.is_dataclass(sec):
        raise ConfigError(f"unknown config section [{section}]")
    if key not in {f.name for f in dataclasses.fields(sec)}:
        raise ConfigError(f"unknown config key {section}.{key}")
    try:
        setattr(sec, key, _coerce(value, getattr(sec, key)))
    except (ValueError, KeyError) as e:
        raise ConfigError(f"bad value for {section}.{key}: {value!r}") from e


def load_config(path=None, overrides=()) -> RunConfig:
    cfg = RunConfig()
    if path:
        parser = configparser.ConfigParser()
        if not parser.read(path):
            raise ConfigError(f"cannot read config file {path}")
        cfg.run.name = Path(path).stem
        for section in parser.sections():
            for key, value in parser[section].items():
                apply_setting(cfg, section, key, value)
    for section, key, value in overrides:
        apply_setting(cfg, section, key, value)
    cfg.validate()
    return cfg


def parse_compositions(spec: str):
    """"WC, WC+BC" -> [frozenset({WC}), frozenset({WC, BC})]; empty -> None (everything)."""
    if not spec.strip():
        return None
    out = []
    for part in spec.split(","):
        names = [p.strip().upper() for p in part.split("+") if p.strip()]
        try:
            out.append(frozenset(TaskId[n] for n in names))
        except KeyError as e:
            raise ConfigError(f"unknown task in composition {part!r}") from e
    return out


def select(records, spec: str):
    comps = parse_compositions(spec)
    if comps is None:
        return list(records)
    return [r for r in records if frozenset(r.tasks) in comps]


# --- shared plumbing ----------------------------------------------------------

@contextlib.contextmanager
def _thread_limit(reproducible: bool):
    if not reproducible:
        yield
        return
    from threadpoolctl import threadpool_limits
    with threadpool_limits(limits=1):
        yield


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    log.info("wrote %s", path)


def datasets(cfg: RunConfig):
    d = cfg.dataset
    if d.single_path and d.multi_path:
        return read_dataset(d.single_path), read_dataset(d.multi_path)
    return generate_datasets(d.seed, cfg.grid.width, cfg.grid.height, tuple(cfg.grid.probs), d.multi_size)


def featurizer(cfg: RunConfig) -> Featurizer:
    f = cfg.featurizer
    if f.mode == "external":
        return Featurizer(table=load_external_embeddings(f.external_path))
    return Featurizer(f.dim, f.seed)


def instruction_pool(cfg: RunConfig, single, multi, split=None):
    kind = cfg.eval.instructions
    pool = {"single": list(single), "multi": list(multi), "all": list(single) + list(multi)}.get(kind)
    if pool is None:
        raise ConfigError(f"eval.instructions must be single, multi or all, got {kind!r}")
    return [r for r in pool if split is None or r.split == split]


def _variant(cfg: RunConfig) -> VariantId:
    return VariantId[cfg.encoder.variant]


def encoder_path(cfg: RunConfig, variant: VariantId, seed: int) -> Path:
    return cfg.out_dir / f"encoder_{variant.value}_seed{seed}.ckpt"


def policy_path(cfg: RunConfig, variant: VariantId, seed: int) -> Path:
    return cfg.out_dir / f"policy_{variant.value}_seed{seed}.ckpt"


def conditioner_for(cfg: RunConfig, variant: VariantId, seed: int, feat: Featurizer | None = None):
    if variant is VariantId.CPCGRL_SCALAR:
        return ScalarConditioner(cfg.grid.width, cfg.grid.height)
    path = encoder_path(cfg, variant, seed)
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; run `instructpcg train-encoder` first")
    model, _ = checkpoint.load_encoder(path)
    return EncoderConditioner(model, feat or featurizer(cfg))


# --- commands -----------------------------------------------------------------

def cmd_dataset(cfg: RunConfig) -> None:
    single, multi = datasets(cfg)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    write_dataset(single, cfg.out_dir / "single.jsonl")
    write_dataset(multi, cfg.out_dir / "multi.jsonl")
    print(f"single: {len(single)} records, multi: {len(multi)} records -> {cfg.out_dir}")


def cmd_train_encoder(cfg: RunConfig) -> None:
    variant = _variant(cfg)
    if variant is VariantId.CPCGRL_SCALAR:
        raise ConfigError("CPCGRL_SCALAR has no text encoder")
    single, multi = datasets(cfg)
    records = [r for r in list(single) + list(multi) if r.split == "train"]
    feat = featurizer(cfg)
    feat_table = feat.table
    if feat_table is not None:
        feat_table.require(r.text for r in list(single) + list(multi))
    buffer = build_state_buffer(cfg.encoder.buffer_size, cfg.grid.width, cfg.grid.height, cfg.run.seed,
                                tuple(cfg.grid.probs))
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    for seed in _seeds(cfg):
        model, history = train_encoder(init_encoder(cfg.encoder_config(variant), seed), records, buffer, feat,
                                       cfg.encoder_train(seed))
        checkpoint.save_encoder(encoder_path(cfg, variant, seed), model, {"variant": variant.value, "seed": seed})
        _write(cfg.out_dir / f"encoder_loss_{variant.value}_seed{seed}.csv", history.to_csv())
        print(f"encoder {variant.value} seed {seed}: loss {history.rows[0][3]:.4f} -> {history.rows[-1][3]:.4f}")


def _seeds(cfg: RunConfig):
    return tuple(cfg.run.seeds)


def cmd_train_agent(cfg: RunConfig) -> None:
    variant = _variant(cfg)
    single, multi = datasets(cfg)
    records = select(instruction_pool(cfg, single, multi, "train"), cfg.eval.train_tasks)
    if not records:
        raise ConfigError("no training instructions match eval.train_tasks")
    feat = featurizer(cfg)
    all_metrics = []
    for seed in _seeds(cfg):
        cond = conditioner_for(cfg, variant, seed, feat)
        env = cfg.env_config(cond.dim)
        policy, metrics = train_agent(cond, records, env, cfg.ppo_config(), seed=seed)
        checkpoint.save_policy(policy_path(cfg, variant, seed), policy, {"variant": variant.value, "seed": seed})
        _write(cfg.out_dir / f"metrics_{variant.value}_seed{seed}.csv", metrics.to_csv())
        all_metrics.append(metrics)
        print(f"agent {variant.value} seed {seed}: final probe progress {metrics.rows[-1][3]:.3f}")
    if len(all_metrics) > 1:
        _write(cfg.out_dir / f"metrics_{variant.value}_aggregate.csv", aggregate_metrics(all_metrics))


def aggregate_metrics(all_metrics) -> str:
    from .env_rl import METRIC_FIELDS
    lines = ["update," + ",".join(f"{f}_mean,{f}_std" for f in METRIC_FIELDS[1:])]
    cols = {f: np.stack([m.column(f) for m in all_metrics]) for f in METRIC_FIELDS[1:]}
    for i in range(cols[METRIC_FIELDS[1]].shape[1]):
        vals = []
        for f in METRIC_FIELDS[1:]:
            v = cols[f][:, i]
            vals += [repr(float(np.mean(v))), repr(float(np.std(v, ddof=1)))]
        lines.append(f"{i + 1}," + ",".join(vals))
    return "\n".join(lines) + "\n"


def _eval_sets(cfg: RunConfig, single, multi) -> dict:
    sets = {"single": select(single, cfg.eval.eval_tasks), "multi": select(multi, cfg.eval.eval_tasks)}
    if cfg.eval.instructions != "all":
        sets = {cfg.eval.instructions: sets[cfg.eval.instructions]}
    return {k: v for k, v in sets.items() if v}


def cmd_eval(cfg: RunConfig) -> None:
    variant = _variant(cfg)
    single, multi = datasets(cfg)
    feat = featurizer(cfg)
    policies, conds = {}, {}
    for seed in _seeds(cfg):
        path = policy_path(cfg, variant, seed)
        if not path.exists():
            raise FileNotFoundError(f"{path} not found; run `instructpcg train-agent` first")
        policies[seed], _ = checkpoint.load_policy(path)
        conds[seed] = conditioner_for(cfg, variant, seed, feat)
    report = EvalReport()
    for name, records in _eval_sets(cfg, single, multi).items():
        report.extend(evaluate(policies, conds, records, cfg.env_config(), cfg.eval.episodes_per_record,
                               _seeds(cfg), cfg.eval.greedy, variant.value, name))
    _write(cfg.out_dir / f"eval_{variant.value}.csv", report.to_csv())
    _write(cfg.out_dir / f"eval_{variant.value}_episodes.csv", report.episodes_csv())
    _print_report(report)


def _print_report(report: EvalReport) -> None:
    for r in report.rows:
        std = "" if r.std_progress is None else f" ± {r.std_progress:.3f}"
        print(f"{r.variant:18s} {r.instruction_set:6s} {r.composition:6s} {r.mean_progress:.3f}{std}")


def cmd_ablate(cfg: RunConfig) -> None:
    single, multi = datasets(cfg)
    enc_records = [r for r in list(single) + list(multi) if r.split == "train"]
    agent_records = select(instruction_pool(cfg, single, multi, "train"), cfg.eval.train_tasks)
    if cfg.eval.variants == "all":
        variants = list(VariantId)
    else:
        variants = [VariantId[v.strip()] for v in cfg.eval.variants.split(",")]
    buffer = build_state_buffer(cfg.encoder.buffer_size, cfg.grid.width, cfg.grid.height, cfg.run.seed,
                                tuple(cfg.grid.probs))
    feat = featurizer(cfg)
    bench = cfg.bench_config()
    report = EvalReport()
    for v in variants:
        rep, _ = run_variant(v, bench, _seeds(cfg), enc_records, agent_records, _eval_sets(cfg, single, multi),
                             buffer, feat)
        report.extend(rep)
    _write(cfg.out_dir / "ablation.csv", report.to_csv())
    _write(cfg.out_dir / "ablation_episodes.csv", report.episodes_csv())
    _print_report(report)


def cmd_export_embeddings(cfg: RunConfig) -> None:
    variant = _variant(cfg)
    single, multi = datasets(cfg)
    records = list(single) + list(multi)
    seed = _seeds(cfg)[0]
    cond = conditioner_for(cfg, variant, seed)
    exp = export_embeddings(None, records, conditioner=cond)
    _write(cfg.out_dir / f"embeddings_{variant.value}.csv", exp.embeddings_csv())
    _write(cfg.out_dir / f"projection_{variant.value}.csv", exp.projection_csv())
    sep = cluster_separation(exp.matrix, exp.compositions)
    _write(cfg.out_dir / f"separation_{variant.value}.csv",
           "group,silhouette\n" + "".join(f"{g},{s!r}\n" for g, s in sorted(sep.per_group.items()))
           + f"ALL,{sep.overall!r}\n")
    print(f"{variant.value}: {len(records)} embeddings, silhouette by composition {sep.overall:.4f}")


def nearest_record(text: str, records) -> InstructionRecord:
    """Exact text match, else the record whose hashed text features are most similar."""
    for r in records:
        if r.text == text:
            return r
    q = featurize(text).values
    sims = np.array([featurize(r.text).values @ q for r in records])
    return records[int(np.argmax(sims))]


def generate_once(text: str, cfg: RunConfig, policy, cond, records, seed: int, out=None) -> None:
    out = out or sys.stdout
    ref = nearest_record(text, records)
    # text-conditioned variants see the instruction as typed; the scalar baseline sees the goals
    z = cond(ref) if isinstance(cond, ScalarConditioner) else cond(text)
    env = replace(policy.env, cond_dim=len(z))
    state, obs = env_reset(env, seed, ref, z)
    rng = np.random.default_rng(seed)
    done = False
    while not done:
        a, _, _ = policy.act(obs[None, :], rng, greedy=cfg.eval.greedy)
        state, obs, _, done = env_step(state, a[0])
    if ref.text != text:
        print(f"(goals taken from closest known instruction: {ref.text!r})", file=out)
    print(render_level(state.level), file=out)
    for t in ref.tasks:
        g = ref.goals.target(t)
        print(f"{t.name}: goal {g:g}  start {state.initial[t]:g}  end {state.current[t]:g}  "
              f"progress {progress(g, state.initial[t], state.current[t]):.3f}", file=out)


def cmd_generate(cfg: RunConfig, interactive: bool = True, stdin=None, out=None) -> None:
    stdin = stdin or sys.stdin
    out = out or sys.stdout
    variant = _variant(cfg)
    seed = _seeds(cfg)[0]
    single, multi = datasets(cfg)
    records = list(single) + list(multi)
    policy, _ = checkpoint.load_policy(policy_path(cfg, variant, seed))
    cond = conditioner_for(cfg, variant, seed)
    episode = 0
    while True:
        if interactive:
            print("instruction> ", end="", file=out, flush=True)
        line = stdin.readline()
        if not line:
            break
        text = line.strip()
        if not text:
            continue
        try:
            generate_once(text, cfg, policy, cond, records, cfg.run.seed + episode, out)
        except ValueError as e:
            print(f"error: {e}", file=out)
        episode += 1


COMMANDS = {
    "dataset": cmd_dataset,
    "train-encoder": cmd_train_encoder,
    "train-agent": cmd_train_agent,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "generate": cmd_generate,
    "export-embeddings": cmd_export_embeddings,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="instructpcg", description="Instruction-conditioned level generation")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="INI config file")
    p.add_argument("--seed", type=int, help="run seed (also the only training seed unless --seeds is given)")
    p.add_argument("--seeds", help="space/comma separated training seeds")
    p.add_argument("--out", help="output directory")
    p.add_argument("--reproducible", action="store_true", help="single-threaded, byte-identical outputs")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override a config value")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = []
    for item in args.set:
        key, sep, value = item.partition("=")
        section, dot, name = key.partition(".")
        if not sep or not dot:
            print(f"error: --set expects section.key=value, got {item!r}", file=sys.stderr)
            return 2
        overrides.append((section.strip(), name.strip(), value.strip()))
    if args.seed is not None:
        overrides += [("run", "seed", str(args.seed)), ("run", "seeds", str(args.seed))]
    if args.seeds:
        overrides.append(("run", "seeds", args.seeds))
    if args.out:
        overrides.append(("run", "out", args.out))
    if args.reproducible:
        overrides.append(("run", "reproducible", "true"))
    try:
        cfg = load_config(args.config, overrides)
        with _thread_limit(cfg.run.reproducible):
            COMMANDS[args.command](cfg)
    except (ConfigError, FileNotFoundError, checkpoint.CheckpointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
