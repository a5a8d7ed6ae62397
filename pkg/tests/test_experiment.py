import json
import math

import numpy as np
import pytest

from unhinged_dynamics.cli import main
from unhinged_dynamics.experiment import (ConfigError, LAMBDA_STAR, parse_config, preset_names,
                                          preset_text, read_csv, run_experiment, with_horizon)
from unhinged_dynamics.simulators import COLUMNS

BASE = """
[experiment]
regime = {regime}
seed = 3
horizon = 30
record_stride = 5
{extra}

[shape]
p = 6
C = 3
N = 2
gamma = 0.25

[schedule]
kind = constant
eta0 = 0.2
{sweep}
"""


def cfg_text(regime="unconstrained", extra="", sweep=""):
    return BASE.format(regime=regime, extra=extra, sweep=sweep)


def test_minimal_config_uses_reference_defaults():
    cfg = parse_config("[experiment]\nregime = unconstrained\n")
    assert (cfg.p, cfg.C, cfg.N) == (512, 100, 10)
    assert cfg.gamma == pytest.approx(1 / 99)
    assert cfg.eta0 == (0.1,)
    assert len(cfg.members()) == 1


def test_inline_comments():
    cfg = parse_config(cfg_text().replace("p = 6", "p = 6   # feature dimension"))
    assert cfg.p == 6


def test_fractions_are_accepted():
    cfg = parse_config(cfg_text(sweep="[sweep]\ngamma_list = 0, 1/99, 0.05"))
    assert [m.shape.gamma for m in cfg.members()] == [0.0, 1 / 99, 0.05]


@pytest.mark.parametrize("text,match", [
    (cfg_text(extra="momentum = 0.9"), "momentum"),
    (cfg_text() + "\n[optimizer]\nlr = 1\n", "optimizer"),
    ("[shape]\np = 3\n", "regime"),
    (cfg_text(regime="adam"), "regime"),
    (cfg_text(extra="gamma = 0.1"), "does not belong"),
    (cfg_text(extra="horizon_steps = 4"), "horizon_steps"),
    (cfg_text().replace("p = 6", "p = six"), "integer"),
    (cfg_text().replace("eta0 = 0.2", "eta0 = fast"), "real"),
    (cfg_text(regime="spherical"), "zero_mean_prototypes"),
    (cfg_text(extra="lambda = 0.1"), "lambda"),
    (cfg_text(extra="rescale_lr = true"), "spherical"),
    (cfg_text(regime="anchored", extra="lambda1 = 0.1"), "anchored"),
    (cfg_text(regime="regularized", extra="lambda = -1"), ">= 0"),
    (cfg_text().replace("record_stride = 5", "record_stride = 0"), "record_stride"),
    (cfg_text().replace("gamma = 0.25", "gamma = -0.25"), "gamma"),
    (cfg_text().replace("kind = constant", "kind = cosine_annealing"), "period"),
    ("regime = unconstrained\n", "malformed"),
])
def test_invalid_configs(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


def test_sweep_expansion_and_pairing():
    cfg = parse_config(cfg_text(regime="spherical", extra="zero_mean_prototypes = true",
                                sweep="[sweep]\neta0 = 0.1, 1\nrescale_lr = false, true"))
    members = cfg.members()
    assert [m.label for m in members] == ["eta0=0.1_rescale_lr=off", "eta0=0.1_rescale_lr=on",
                                          "eta0=1_rescale_lr=off", "eta0=1_rescale_lr=on"]
    assert [m.stream for m in members] == [0, 0, 1, 1]
    assert [m.rescale for m in members] == [False, True, False, True]


def test_lambda_star_resolves_per_member():
    cfg = parse_config(cfg_text(regime="regularized", extra=f"lambda = {LAMBDA_STAR}",
                                sweep="[sweep]\ngamma_list = 0.1, 0.5"))
    for m in cfg.members():
        assert m.lambda1 == m.lambda2 == m.shape.sigma1


@pytest.mark.parametrize("name", ["fig1", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8"])
def test_presets_parse(name):
    cfg = parse_config(preset_text(name))
    assert (cfg.p, cfg.C, cfg.N) == (512, 100, 10)
    assert len(cfg.members()) >= 5


def test_preset_contents():
    fig1 = parse_config(preset_text("fig1"))
    assert [m.shape.gamma for m in fig1.members()] == [0.0, 0.001, 0.005, 0.05, 1 / 99]
    fig8 = parse_config(preset_text("fig8"))
    assert [m.lam for m in fig8.members()] == [0.0, 0.001, 0.005, 0.01, 0.05, 0.1]
    assert len(parse_config(preset_text("fig7")).members()) == 10
    assert set(preset_names()) >= {"fig1", "fig8"}
    with pytest.raises(ConfigError, match="unknown preset"):
        preset_text("fig99")


@pytest.mark.parametrize("regime,extra", [
    ("unconstrained", "closed_form_check = true"),
    ("regularized", "lambda1 = 0.05\nlambda2 = 0.01\nclosed_form_check = true"),
    ("anchored", "lambda = 0.1\nclosed_form_check = true"),
    ("spherical", "zero_mean_prototypes = true\nclosed_form_check = true"),
    ("ntk", "closed_form_check = true"),
])
def test_run_experiment_outputs(tmp_path, regime, extra):
    text = cfg_text(regime, extra + "\ndt = 0.1")
    cfg = parse_config(text.replace("horizon = 30", "horizon = 300").replace("stride = 5", "stride = 50"))
    summary = run_experiment(cfg, tmp_path)
    run = summary["runs"][0]
    data = read_csv(tmp_path / run["csv"])
    assert list(data) == list(COLUMNS)
    assert data["t"].tolist() == [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]
    on_disk = json.loads((tmp_path / "summary.json").read_text())
    assert on_disk["runs"][0]["csv"] == run["csv"]
    if regime == "spherical":
        assert run["scalar_recursion_max_gap"] < 1e-12
    else:
        # explicit Euler is first order, so the gap to the flow is O(dt)
        assert run["closed_form_max_rel_error"] < 0.02


def test_csv_is_deterministic(tmp_path):
    cfg = parse_config(cfg_text(sweep="[sweep]\ngamma_list = 0.1, 0.3"))
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b", jobs=2)
    for name in ("00_gamma=0.1.csv", "01_gamma=0.3.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    other = parse_config(cfg_text().replace("seed = 3", "seed = 4"))
    run_experiment(other, tmp_path / "c")
    assert (tmp_path / "c" / "00_base.csv").read_bytes() != (tmp_path / "a" / "00_gamma=0.1.csv").read_bytes()


def test_overflow_is_recorded_not_fatal(tmp_path):
    text = cfg_text().replace("eta0 = 0.2", "eta0 = 1e6").replace("horizon = 30", "horizon = 500")
    summary = run_experiment(parse_config(text), tmp_path)
    assert summary["runs"][0]["overflow_step"] is not None


def test_with_horizon():
    cfg = parse_config(cfg_text())
    assert with_horizon(cfg, 7).horizon == 7 and cfg.horizon == 30


def test_svg_output(tmp_path):
    pytest.importorskip("matplotlib")
    run_experiment(parse_config(cfg_text(sweep="[sweep]\ngamma_list = 0.1, 0.3")), tmp_path,
                   svg=True)
    svg = (tmp_path / "loss.svg").read_text()
    assert svg.lstrip().startswith("<?xml") and "<svg" in svg


# --- command line -----------------------------------------------------------

def test_cli_run_and_preset(tmp_path, capsys):
    path = tmp_path / "c.ini"
    path.write_text(cfg_text())
    assert main(["run", str(path), "--out", str(tmp_path / "o"), "--horizon", "10"]) == 0
    assert read_csv(tmp_path / "o" / "00_base.csv")["t"][-1] == 10.0
    assert main(["preset", "fig8", "--out", str(tmp_path / "p"), "--horizon", "3"]) == 0
    assert len(list((tmp_path / "p").glob("*.csv"))) == 6
    assert "00_lambda=0.csv" in capsys.readouterr().out


def test_cli_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text(cfg_text(extra="momentum = 0.9"))
    assert main(["run", str(bad)]) == 1
    assert "momentum" in capsys.readouterr().err
    assert main(["preset", "nope"]) == 1
    assert main(["run", str(tmp_path / "absent.ini")]) == 3
    blocked = tmp_path / "file"
    blocked.write_text("")
    good = tmp_path / "good.ini"
    good.write_text(cfg_text())
    assert main(["run", str(good), "--out", str(blocked / "sub")]) == 3
    assert main(["verify", "--suite", "analysis"]) == 0
    assert main(["verify", "--suite", "subspaces", "--mutate", "project_e1_sign"]) == 2
    with pytest.raises(SystemExit):
        main(["verify", "--suite", "nonsense"])


def test_cli_verify_prints_json(capsys):
    assert main(["verify", "--suite", "loss", "--seed", "5"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["passed"] and report["seed"] == 5
    assert all(math.isfinite(r["value"]) for r in report["suites"]["loss"])
