import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from instructpcg.fitness import bat_count, wall_count
from instructpcg.level import (
    ConfigError,
    Level,
    LevelParseError,
    Position,
    TileKind,
    parse_level,
    random_level,
    render_level,
    set_tile,
)


def test_tile_codes_unique():
    assert len(TileKind) == 3
    assert len({t.code for t in TileKind}) == 3


def test_degenerate_distribution_gives_all_empty():
    lv = random_level(4, 4, seed=123, probs=(1, 0, 0))
    assert np.all(lv.tiles == TileKind.EMPTY)


def test_random_level_deterministic():
    p = (0.5, 0.25, 0.25)
    assert random_level(4, 4, 7, p) == random_level(4, 4, 7, p)
    assert random_level(4, 4, 7, p) != random_level(4, 4, 8, p)


def test_random_level_histogram_within_four_sigma():
    probs = np.array([0.6, 0.3, 0.1])
    lv = random_level(16, 16, seed=1, probs=tuple(probs))
    n = 256
    counts = np.bincount(lv.tiles.ravel(), minlength=3)
    sigma = np.sqrt(n * probs * (1 - probs))   # multinomial marginal std
    assert np.all(np.abs(counts - n * probs) <= 4 * sigma)


@pytest.mark.parametrize("w,h,probs", [(1, 4, (1, 0, 0)), (4, 4, (0.5, 0.5, 0.5)), (4, 4, (0.5, 0.6, -0.1))])
def test_random_level_rejects_bad_config(w, h, probs):
    with pytest.raises(ConfigError):
        random_level(w, h, 0, probs)


def test_set_tile_same_value_is_identity():
    lv = random_level(5, 4, 3)
    p = Position(2, 3)
    assert set_tile(lv, p, lv[p]) == lv


def test_set_tile_counts_and_immutability():
    lv = Level.filled(4, 4, TileKind.EMPTY)
    before = lv.tiles.copy()
    out = set_tile(lv, Position(1, 2), TileKind.WALL)
    assert wall_count(out) == wall_count(lv) + 1
    assert np.array_equal(lv.tiles, before)
    assert np.count_nonzero(out.tiles != lv.tiles) == 1

    bats = Level.filled(3, 3, TileKind.BAT)
    assert bat_count(set_tile(bats, Position(0, 0), TileKind.BAT)) == bat_count(bats)


def test_set_tile_out_of_bounds():
    with pytest.raises(IndexError):
        set_tile(Level.filled(3, 3, TileKind.EMPTY), Position(3, 0), TileKind.WALL)


def test_level_tiles_are_read_only():
    lv = random_level(4, 4, 0)
    with pytest.raises(ValueError):
        lv.tiles[0, 0] = 1


def test_render_examples():
    assert render_level(Level.filled(2, 2, TileKind.EMPTY)) == "..\n.."
    lv = parse_level("#b\n..")
    assert (lv.width, lv.height) == (2, 2)
    assert [TileKind(t) for t in lv.tiles.ravel()] == [TileKind.WALL, TileKind.BAT, TileKind.EMPTY, TileKind.EMPTY]


def test_parse_accepts_trailing_newline_and_crlf():
    assert parse_level("#b\n..\n") == parse_level("#b\r\n..")


def test_parse_errors_carry_position():
    with pytest.raises(LevelParseError) as e:
        parse_level("..\n.x")
    assert (e.value.row, e.value.col) == (1, 1)
    with pytest.raises(LevelParseError) as e:
        parse_level("...\n..")
    assert e.value.row == 1


def test_round_trip_1000_random_levels():
    rng = np.random.default_rng(0)
    for seed in range(1000):
        w, h = rng.integers(2, 12, size=2)
        lv = random_level(int(w), int(h), seed, (0.5, 0.3, 0.2))
        assert parse_level(render_level(lv)) == lv


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 9), st.integers(2, 9), st.data())
def test_set_tile_changes_only_addressed_cell(w, h, data):
    lv = random_level(w, h, data.draw(st.integers(0, 10_000)))
    pos = Position(data.draw(st.integers(0, h - 1)), data.draw(st.integers(0, w - 1)))
    kind = data.draw(st.sampled_from(list(TileKind)))
    out = set_tile(lv, pos, kind)
    diff = out.tiles != lv.tiles
    diff[pos] = False
    assert not diff.any()
    assert out[pos] == kind
