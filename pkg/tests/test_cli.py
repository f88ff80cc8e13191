import io

import pytest

from instructpcg import cli
from instructpcg.cli import RunConfig, load_config, main, parse_compositions, select
from instructpcg.fitness import GoalSpec, TaskId
from instructpcg.instruction import InstructionRecord
from instructpcg.level import ConfigError


def test_defaults_validate():
    cfg = load_config()
    assert cfg.grid.width == 16 and cfg.run.seeds == (0, 1, 2)
    assert cfg.encoder_config().state_dim == 768
    assert cfg.env_config().budget == 76
    assert cfg.out_dir.name == "default"


def test_precedence_flags_over_file_over_defaults(tmp_path):
    ini = tmp_path / "exp.ini"
    ini.write_text("[grid]\nwidth = 10\nheight = 9\n[ppo]\nlr = 0.001\nhidden = 64 64\n[run]\nseeds = 4, 5\n")
    cfg = load_config(ini, [("ppo", "lr", "0.002")])
    assert (cfg.grid.width, cfg.grid.height) == (10, 9)
    assert cfg.ppo.lr == 0.002 and cfg.ppo.hidden == (64, 64)
    assert cfg.run.seeds == (4, 5) and cfg.run.name == "exp"
    assert cfg.ppo.gamma == 0.99


@pytest.mark.parametrize("overrides,match", [
    ([("grid", "width", "1")], "2x2"),
    ([("grid", "probs", "0.5 0.5 0.5")], "probs"),
    ([("featurizer", "dim", "8")], "dim"),
    ([("featurizer", "mode", "bert")], "mode"),
    ([("encoder", "variant", "NOPE")], "variant"),
    ([("env", "w_wc", "0")], "weights"),
    ([("eval", "train_tasks", "WC+XX")], "unknown task"),
    ([("nosuch", "x", "1")], "section"),
    ([("ppo", "nosuch", "1")], "key"),
    ([("ppo", "updates", "many")], "bad value"),
])
def test_invalid_configs(overrides, match):
    with pytest.raises(ConfigError, match=match):
        load_config(None, overrides)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.ini")


def test_composition_filter():
    assert parse_compositions("") is None
    assert parse_compositions("wc, WC+bc") == [frozenset({TaskId.WC}), frozenset({TaskId.WC, TaskId.BC})]
    recs = [InstructionRecord("a", (0, 0, 1, 0, 0), GoalSpec(wc=1)),
            InstructionRecord("b", (0, 0, 1, 1, 0), GoalSpec(wc=1, bc=2)),
            InstructionRecord("c", (0, 0, 0, 1, 0), GoalSpec(bc=2))]
    assert [r.text for r in select(recs, "BC+WC")] == ["b"]
    assert len(select(recs, "")) == 3


def test_main_reports_errors_with_exit_code(tmp_path, capsys):
    assert main(["eval", "--out", str(tmp_path), "--seed", "0"]) == 2
    assert "train-agent" in capsys.readouterr().err
    assert main(["dataset", "--set", "grid.width"]) == 2
    assert main(["dataset", "--set", "grid.width=1"]) == 2
    with pytest.raises(SystemExit):
        main(["frobnicate"])


def test_seed_flag_sets_single_training_seed(tmp_path, monkeypatch):
    seen = {}
    monkeypatch.setitem(cli.COMMANDS, "dataset", lambda cfg: seen.update(cfg=cfg))
    assert main(["dataset", "--seed", "7", "--out", str(tmp_path), "--reproducible"]) == 0
    cfg = seen["cfg"]
    assert cfg.run.seed == 7 and cfg.run.seeds == (7,) and cfg.run.reproducible
    assert cfg.out_dir == tmp_path


def test_generate_repl_skips_blank_lines(tmp_path):
    overrides = [("run", "out", str(tmp_path)), ("run", "seeds", "0"), ("grid", "width", "8"), ("grid", "height", "8"),
                 ("featurizer", "dim", "32"), ("encoder", "d", "2"), ("encoder", "e_hidden", "8"),
                 ("encoder", "d_hidden", "8"), ("encoder", "epochs", "1"), ("encoder", "buffer_size", "10"),
                 ("ppo", "hidden", "8"), ("ppo", "n_envs", "1"), ("ppo", "rollout_length", "8"),
                 ("ppo", "minibatch", "8"), ("ppo", "updates", "1"), ("ppo", "epochs", "1"),
                 ("eval", "train_tasks", "WC"), ("encoder", "variant", "CPCGRL_SCALAR")]
    cfg = load_config(None, overrides)
    cli.cmd_train_agent(cfg)
    out = io.StringIO()
    cli.cmd_generate(cfg, stdin=io.StringIO("\n   \nFew walls\nsomething unheard of\n"), out=out)
    text = out.getvalue()
    assert text.count("WC: goal") + text.count("goal") >= 2
    assert "closest known instruction" in text
    assert text.count("instruction> ") == 5
