import numpy as np
import pytest
from hypothesis import given, strategies as st

from instructpcg.fitness import (
    Direction,
    GoalSpec,
    MeasureVector,
    TaskId,
    bat_count,
    bat_direction_fraction,
    count_regions,
    goal_fitness,
    max_path_length,
    measure,
    progress,
    progress_raw,
    task_ranges,
    wall_count,
)
from instructpcg.level import ConfigError, Level, TileKind, parse_level, random_level

from oracles import floyd_warshall_diameter, naive_bat_fraction, naive_count, union_find_regions


def test_task_enum_is_stable():
    assert [t.name for t in TaskId] == ["RG", "PL", "WC", "BC", "BD"]
    assert [int(t) for t in TaskId] == [0, 1, 2, 3, 4]
    assert len(Direction) == 4


def test_region_examples():
    assert count_regions(Level.filled(4, 4, TileKind.EMPTY)) == 1
    assert count_regions(Level.filled(4, 4, TileKind.WALL)) == 0
    split = parse_level(".#..\n.#..\n.#b.\n.#..")
    assert count_regions(split) == 2 == union_find_regions(split.tiles)


def test_path_examples():
    assert max_path_length(Level.filled(3, 3, TileKind.EMPTY)) == 4
    assert max_path_length(Level.filled(4, 4, TileKind.WALL)) == 0
    assert max_path_length(parse_level("#.\n##")) == 0
    # bats do not block
    assert max_path_length(parse_level("bbb\n###")) == 2
    # diameter is taken within components
    assert max_path_length(parse_level("..#.\n###.\n....")) == 5


def test_counts():
    walls = Level.filled(4, 4, TileKind.WALL)
    assert (wall_count(walls), bat_count(walls)) == (16, 0)
    lv = parse_level("#b\n..")
    assert (wall_count(lv), bat_count(lv)) == (1, 1)


def test_bat_direction_fraction_examples():
    lv = parse_level("bb.\n...\n...\n...")
    assert bat_direction_fraction(lv, Direction.TOP) == 1.0
    assert bat_direction_fraction(lv, Direction.BOTTOM) == 0.0
    # odd width: the centre column belongs to neither half
    assert bat_direction_fraction(lv, Direction.LEFT) == 0.5
    assert bat_direction_fraction(lv, Direction.RIGHT) == 0.0
    empty = Level.filled(4, 4, TileKind.EMPTY)
    assert all(bat_direction_fraction(empty, d) == 0.0 for d in Direction)


def test_measures_match_oracles_on_random_levels():
    rng = np.random.default_rng(1)
    for seed in range(300):
        w, h = (int(x) for x in rng.integers(2, 9, size=2))
        lv = random_level(w, h, seed, (0.5, 0.35, 0.15))
        m = measure(lv, Direction.BOTTOM)
        assert m.rg == union_find_regions(lv.tiles)
        assert m.pl == floyd_warshall_diameter(lv.tiles)
        assert m.wc == naive_count(lv.tiles, 1)
        assert m.bc == naive_count(lv.tiles, 2)
        assert m.bd == naive_bat_fraction(lv.tiles, "bottom")


def test_task_ranges_16x16():
    assert list(task_ranges(16, 16)) == [128, 255, 256, 256, 1]


def _mv(**kw):
    base = dict(rg=3, pl=20, wc=80, bc=25, bd=0.5)
    base.update(kw)
    return MeasureVector(**base)


def test_goal_fitness_examples():
    assert goal_fitness(_mv(wc=80), GoalSpec(wc=80), 16, 16)[TaskId.WC] == 5.0
    assert goal_fitness(_mv(wc=256), GoalSpec(wc=0), 16, 16)[TaskId.WC] == -5.0
    assert goal_fitness(_mv(wc=128), GoalSpec(wc=64), 16, 16)[TaskId.WC] == 2.5
    f = goal_fitness(_mv(bd=0.25), GoalSpec(bc=25, bd=(Direction.TOP, 1.0)), 16, 16)
    assert f[TaskId.BC] == 5.0 and f[TaskId.BD] == pytest.approx(-2.5)
    assert f[TaskId.RG] == f[TaskId.PL] == f[TaskId.WC] == 0.0


def test_goal_fitness_rejects_out_of_range_target():
    with pytest.raises(ConfigError):
        goal_fitness(_mv(), GoalSpec(wc=300), 16, 16)
    with pytest.raises(ConfigError):
        goal_fitness(_mv(), GoalSpec(bd=(Direction.TOP, 1.5)), 16, 16)


@given(st.integers(0, 256), st.integers(0, 256), st.integers(0, 256))
def test_goal_fitness_monotone_and_bounded(g, m1, m2):
    f1 = goal_fitness(_mv(wc=m1), GoalSpec(wc=g), 16, 16)[TaskId.WC]
    f2 = goal_fitness(_mv(wc=m2), GoalSpec(wc=g), 16, 16)[TaskId.WC]
    assert -5 <= f1 <= 5
    if abs(g - m1) <= abs(g - m2):
        assert f1 >= f2


def test_progress_examples():
    assert progress(10, 0, 10) == 1.0
    assert progress(10, 0, 0) == 0.0
    assert progress(10, 0, 5) == 0.5
    assert progress(10, 0, 25) == 0.0
    assert progress_raw(10, 0, 25) == -0.5
    assert progress(3, 3, 3) == 1.0
    assert progress(3, 3, 4) == 0.0


@given(st.floats(-100, 100), st.floats(-100, 100), st.floats(-100, 100))
def test_progress_bounds(g, s0, sT):
    assert 0.0 <= progress(g, s0, sT) <= 1.0
    assert progress(g, s0, g) == 1.0
