import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from instructpcg.encoder import EncoderConfig, EncoderTrainConfig, build_state_buffer
from instructpcg.env_rl import EnvConfig, PPOConfig, RandomPolicy, ScalarConditioner
from instructpcg.evalbench import (
    BenchConfig,
    EpisodeLog,
    EvalReport,
    VariantId,
    aggregate,
    cluster_separation,
    config_diff,
    evaluate,
    export_embeddings,
    paired_seed_comparison,
    pca_project,
    run_variant,
    variant_encoder_config,
)
from instructpcg.fitness import Direction, GoalSpec
from instructpcg.instruction import Featurizer, InstructionRecord

from oracles import silhouette_loop

RECS = [
    InstructionRecord("few walls", (0, 0, 1, 0, 0), GoalSpec(wc=3), "train"),
    InstructionRecord("many walls", (0, 0, 1, 0, 0), GoalSpec(wc=12), "train"),
    InstructionRecord("many bats", (0, 0, 0, 1, 0), GoalSpec(bc=6), "train"),
    InstructionRecord("few walls and many bats", (0, 0, 1, 1, 0), GoalSpec(wc=3, bc=6), "train"),
]


def test_five_variants_with_expected_switches():
    assert len(VariantId) == 5
    base = EncoderConfig()
    assert config_diff(base, variant_encoder_config(base, VariantId.MIPCGRL_FULL)) == {}
    assert config_diff(base, variant_encoder_config(base, VariantId.NO_CLS)) == {"use_cls": (True, False)}
    assert config_diff(base, variant_encoder_config(base, VariantId.NO_REG)) == {"multi_head": (True, False)}
    assert set(config_diff(base, variant_encoder_config(base, VariantId.IPCGRL_SINGLEHEAD))) == {"use_cls",
                                                                                               "multi_head"}


def test_aggregate_means_and_sample_std():
    logs = [EpisodeLog("V", "single", "WC", s, "t", k, p)
            for s, ps in ((0, [0.2, 0.4]), (1, [0.6, 0.8]), (2, [1.0, 1.0])) for k, p in enumerate(ps)]
    (row,) = aggregate(logs)
    per_seed = [0.3, 0.7, 1.0]
    assert row.mean_progress == pytest.approx(np.mean(per_seed))
    assert row.std_progress == pytest.approx(np.std(per_seed, ddof=1))
    assert row.episodes == 6 and row.seeds == (0, 1, 2)
    (single,) = aggregate(logs[:2])
    assert single.std_progress is None


def test_evaluate_random_policy_report():
    env = EnvConfig(6, 5, cond_dim=10)
    rep = evaluate(RandomPolicy(), ScalarConditioner(6, 5), RECS, env, episodes_per_record=2, seeds=(0, 1),
                   greedy=False, variant="RANDOM", instruction_set="toy")
    assert {r.composition for r in rep.rows} == {"WC", "BC", "WC+BC"}
    assert rep.lookup("RANDOM", "WC").episodes == 8
    assert len(rep.episodes) == 16
    assert rep.to_csv().splitlines()[0] == "variant,instruction_set,composition,mean_progress,std_progress,episodes,seeds"
    assert len(rep.episodes_csv().splitlines()) == 17
    again = evaluate(RandomPolicy(), ScalarConditioner(6, 5), RECS, env, 2, (0, 1), False, "RANDOM", "toy")
    assert again.to_csv() == rep.to_csv()
    with pytest.raises(KeyError):
        rep.lookup("RANDOM", "PL")


def test_run_variant_end_to_end_tiny():
    cfg = BenchConfig(
        encoder=EncoderConfig(embed_dim=32, d=2, e_hidden=(8,), d_hidden=(8,), state_dim=3 * 6 * 5),
        encoder_train=EncoderTrainConfig(epochs=2),
        env=EnvConfig(6, 5),
        ppo=PPOConfig(hidden=(8,), n_envs=2, rollout_length=8, minibatch=8, updates=2, epochs=1),
        episodes_per_record=1,
    )
    buf = build_state_buffer(20, 6, 5)
    feat = Featurizer(32)
    for v in (VariantId.MIPCGRL_FULL, VariantId.CPCGRL_SCALAR):
        rep, art = run_variant(v, cfg, (0, 1), RECS, RECS, {"toy": RECS}, buf, feat)
        assert set(art.policies) == {0, 1}
        assert rep.lookup(v, "WC+BC").seeds == (0, 1)
        cmp = paired_seed_comparison(rep.extend(rep), v, v, "WC")
        assert cmp["seeds"] == [0, 1] and cmp["mean_diff"] == 0.0
    assert set(art.encoders) == set()


def test_pca_matches_covariance_eigendecomposition():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(50, 6)) @ rng.normal(size=(6, 6))
    proj, var = pca_project(x)
    cov = np.cov(x, rowvar=False)
    w, v = np.linalg.eigh(cov)
    order = np.argsort(w)[::-1][:2]
    np.testing.assert_allclose(var, w[order], rtol=1e-9)
    for k in range(2):
        ref = (x - x.mean(axis=0)) @ v[:, order[k]]
        np.testing.assert_allclose(np.abs(proj[:, k]), np.abs(ref), atol=1e-9)
    proj2, _ = pca_project(x)
    assert np.array_equal(proj, proj2)


def test_pca_degenerate_inputs():
    proj, var = pca_project(np.ones((4, 3)))
    assert proj.shape == (4, 2) and np.allclose(proj, 0)
    proj, var = pca_project(np.arange(3.0)[:, None])
    assert proj.shape == (3, 2) and np.all(proj[:, 1] == 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 4))
def test_silhouette_matches_loop_oracle(seed, n_groups):
    rng = np.random.default_rng(seed)
    labels = [f"g{int(i)}" for i in rng.integers(n_groups, size=12)]
    if len(set(labels)) < 2:
        labels[0], labels[1] = "g0", "g1"
    x = rng.normal(size=(12, 3))
    assert cluster_separation(x, labels).overall == pytest.approx(silhouette_loop(x, labels), abs=1e-9)


def test_silhouette_prefers_separated_clusters():
    rng = np.random.default_rng(0)
    labels = ["a"] * 10 + ["b"] * 10
    tight = np.vstack([rng.normal(0, 0.1, (10, 2)), rng.normal(5, 0.1, (10, 2))])
    loose = rng.normal(0, 1, (20, 2))
    assert cluster_separation(tight, labels).overall > 0.9 > cluster_separation(loose, labels).overall
    assert set(cluster_separation(tight, labels).per_group) == {"a", "b"}
    with pytest.raises(ValueError):
        cluster_separation(tight, ["a"] * 20)


def test_export_embeddings_with_scalar_conditioner():
    exp = export_embeddings(None, RECS, conditioner=ScalarConditioner(6, 5))
    assert exp.matrix.shape == (4, 10)
    assert exp.kinds == ["single", "single", "single", "multi"]
    assert exp.embeddings_csv().splitlines()[0].startswith("text,composition,kind,z0")
    assert len(exp.projection_csv().splitlines()) == 5
