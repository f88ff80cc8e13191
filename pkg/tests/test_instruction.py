import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from instructpcg.fitness import Direction, GoalSpec, TaskId, measure_tasks
from instructpcg.instruction import (
    HIGH,
    HOLDOUT,
    LOW,
    TRAIN,
    DatasetKind,
    EmbeddingTable,
    Embedding,
    EmbeddingSource,
    Featurizer,
    InstructionRecord,
    MissingEmbeddingError,
    featurize,
    generate_datasets,
    goal_percentiles,
    load_external_embeddings,
    read_dataset,
    tokenize,
    write_dataset,
    write_external_embeddings,
)
from instructpcg.level import ConfigError, random_level


@pytest.fixture(scope="module")
def datasets():
    return generate_datasets()


def test_sizes_and_kinds(datasets):
    single, multi = datasets
    assert len(single) == 80 and single.kind is DatasetKind.SINGLE
    assert len(multi) == 256 and multi.kind is DatasetKind.MULTI
    assert all(sum(r.active) == 1 for r in single)
    assert all(sum(r.active) == 2 for r in multi)


def test_single_covers_every_task_and_level(datasets):
    single, _ = datasets
    lo_hi = goal_percentiles()
    seen = {}
    for r in single:
        (t,) = r.tasks
        lvl = LOW if r.goals.target(t) == lo_hi[(t, LOW)] else HIGH
        seen[(t, lvl)] = seen.get((t, lvl), 0) + 1
    assert set(seen) == {(t, l) for t in TaskId for l in (LOW, HIGH)}
    assert set(seen.values()) == {8}


def test_multi_covers_every_pair_and_level(datasets):
    _, multi = datasets
    combos = {(tuple(r.tasks), tuple(r.goals.targets()[r.tasks].tolist())) for r in multi}
    assert len({c[0] for c in combos}) == 10
    assert len(combos) == 40


def test_holdout_fraction(datasets):
    single, multi = datasets
    assert len(single.split(HOLDOUT)) == 20
    hold = len(multi.split(HOLDOUT))
    assert 0.1 * 256 <= hold <= 0.25 * 256
    assert len(single.split(TRAIN)) + len(single.split(HOLDOUT)) == 80


def test_mean_lengths_resemble_reference_corpus(datasets):
    single, multi = datasets
    assert abs(single.mean_length() - 29.7) <= 0.4 * 29.7
    assert abs(multi.mean_length() - 61.1) <= 0.4 * 61.1


def test_deterministic(datasets):
    again = generate_datasets()
    assert [r.to_json() for r in again[1]] == [r.to_json() for r in datasets[1]]


def test_goal_percentiles_match_oracle():
    samples = 600
    got = goal_percentiles(8, 8, (0.6, 0.3, 0.1), samples, seed=7)
    tasks = (TaskId.RG, TaskId.PL, TaskId.WC, TaskId.BC)
    vals = np.array([measure_tasks(random_level(8, 8, 7 * 1_000_003 + i, (0.6, 0.3, 0.1)), tasks)[list(tasks)]
                     for i in range(samples)])
    for j, t in enumerate(tasks):
        s = np.sort(vals[:, j])
        # "nearest" rank of the q-th percentile, computed by hand
        for q, lvl in ((0.25, LOW), (0.75, HIGH)):
            assert got[(t, lvl)] == s[int(np.round(q * (samples - 1)))]
    assert got[(TaskId.BD, LOW)] == 0.0 and got[(TaskId.BD, HIGH)] == 1.0


def test_tiny_grid_is_rejected():
    with pytest.raises(ConfigError):
        goal_percentiles(2, 2, (0.6, 0.3, 0.1), 200)


def test_bd_records_name_their_direction(datasets):
    single, _ = datasets
    for r in single:
        if r.active[TaskId.BD]:
            assert r.goals.direction.value in r.text.lower()
            assert r.goals.target(TaskId.BD) in (0.0, 1.0)


def test_record_json_roundtrip(datasets):
    _, multi = datasets
    for r in multi.records[:20]:
        back = InstructionRecord.from_json(r.to_json())
        assert back == r


def test_record_validation():
    with pytest.raises(ValueError):
        InstructionRecord("x", (0, 0, 0, 0, 0), GoalSpec(), TRAIN)
    with pytest.raises(ValueError):
        InstructionRecord("x", (1, 0, 0, 0, 0), GoalSpec(wc=3), TRAIN)
    with pytest.raises(ValueError):
        InstructionRecord.from_json(json.dumps({"text": "x"}))


def test_dataset_file_roundtrip(tmp_path, datasets):
    single, _ = datasets
    path = tmp_path / "single.jsonl"
    write_dataset(single, path)
    back = read_dataset(path)
    assert back.records == single.records and back.kind is DatasetKind.SINGLE
    line = json.loads(path.read_text().splitlines()[0])
    assert set(line) == {"text", "active", "goals", "split"}


def test_tokenize():
    assert tokenize("Many, MANY bats!") == ["many", "many", "bats"]


def test_featurize_contract():
    a = featurize("many bats", 256, 0)
    b = featurize("many bats", 256, 0)
    assert np.array_equal(a.values, b.values)
    assert np.linalg.norm(a.values) == pytest.approx(1.0, abs=1e-9)
    assert a.source is EmbeddingSource.HASH and a.dim == 256
    assert not np.array_equal(a.values, featurize("many bats", 256, 1).values)
    with pytest.raises(ValueError):
        featurize("!!!", 256)
    with pytest.raises(ValueError):
        featurize("bats", 8)


def test_featurize_similarity_sanity():
    cos = lambda x, y: float(featurize(x).values @ featurize(y).values)
    assert cos("many bats", "many many bats") > cos("many bats", "few walls")


@settings(max_examples=50, deadline=None)
@given(st.text(alphabet="abc xyz", min_size=1, max_size=40).filter(lambda s: s.split()))
def test_featurize_unit_norm(text):
    v = featurize(text, 32).values
    assert np.all(np.isfinite(v))
    assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-9)


def test_external_embeddings(tmp_path):
    rng = np.random.default_rng(0)
    table = {"long path": rng.normal(size=768), "many bats": rng.normal(size=768)}
    path = tmp_path / "emb.jsonl"
    write_external_embeddings(table, path)
    loaded = load_external_embeddings(path)
    assert len(loaded) == 2 and loaded.dim == 768
    for k, v in table.items():
        assert np.array_equal(loaded[k].values, v)
        assert loaded[k].source is EmbeddingSource.EXTERNAL
    with pytest.raises(MissingEmbeddingError, match="few walls"):
        loaded["few walls"]
    with pytest.raises(MissingEmbeddingError, match="2 instruction"):
        loaded.require(["long path", "a", "b"])
    feat = Featurizer(table=loaded)
    assert feat.dim == 768 and np.array_equal(feat("many bats"), table["many bats"])


@pytest.mark.parametrize("lines,match", [
    (['{"text": "a", "vector": [1, 2]}', '{"text": "a", "vector": [1, 2]}'], "duplicate"),
    (['{"text": "a", "vector": [1, 2]}', '{"text": "b", "vector": [1, 2, 3]}'], "dimension"),
    (['{"text": "a", "vector": [1, NaN]}'], "non-finite"),
])
def test_external_embeddings_reject_bad_files(tmp_path, lines, match):
    path = tmp_path / "bad.jsonl"
    path.write_text("\n".join(lines))
    with pytest.raises(ValueError, match=match):
        load_external_embeddings(path)


def test_table_dim_and_embedding_dim():
    t = EmbeddingTable({"x": Embedding(np.ones(3), EmbeddingSource.EXTERNAL)})
    assert t.dim == 3
