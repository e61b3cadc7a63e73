import json

import numpy as np
import pandas as pd
import pytest

from app.cli import EXIT_CONFIG, EXIT_OK, cli_main


def _out(config_file):
    return config_file.parent / "out"


def test_missing_config_exits_with_config_error(tmp_path):
    assert cli_main(["solve", "--config", str(tmp_path / "nope.json")]) == EXIT_CONFIG


def test_invalid_config_values(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"model": {"delta": 0.5}}), encoding="utf-8")
    assert cli_main(["solve", "--config", str(path)]) == EXIT_CONFIG


def test_unknown_config_key(tmp_path):
    path = tmp_path / "typo.json"
    path.write_text(json.dumps({"modle": {}}), encoding="utf-8")
    assert cli_main(["solve", "--config", str(path)]) == EXIT_CONFIG


def test_grid_error_is_a_config_error(tmp_path):
    path = tmp_path / "grid.json"
    path.write_text(json.dumps({"grid": {"y_max": 2.0}, "output_dir": str(tmp_path / "o")}), encoding="utf-8")
    assert cli_main(["solve", "--config", str(path)]) == EXIT_CONFIG


def test_solve_writes_artifacts(coarse_config_file):
    assert cli_main(["solve", "--config", str(coarse_config_file)]) == EXIT_OK
    out = _out(coarse_config_file)
    for name in ("value_grid.csv", "regime_map.csv", "barriers.csv", "solve_summary.json"):
        assert (out / name).is_file(), name

    values = pd.read_csv(out / "value_grid.csv")
    assert list(values.columns) == ["x", "y", "V"]
    assert (values["V"] >= 0).all()
    regimes = pd.read_csv(out / "regime_map.csv")
    assert set(regimes["regime"]) <= {0, 1, 2, 3}
    barriers = pd.read_csv(out / "barriers.csv")
    assert list(barriers.columns) == ["y", "kappa_star", "x_star"]

    summary = json.loads((out / "solve_summary.json").read_text())
    assert summary["history"][-1]["changed"] == 0
    assert len(summary["values"]) == 9


def test_evaluate_is_byte_stable(coarse_config_file):
    out = _out(coarse_config_file)
    args = ["evaluate", "--config", str(coarse_config_file), "--policy", "pde", "--dump-trajectory"]
    assert cli_main(args) == EXIT_OK
    first = (out / "eval_pde_barriers.csv").read_bytes()
    assert cli_main(args) == EXIT_OK
    assert (out / "eval_pde_barriers.csv").read_bytes() == first

    df = pd.read_csv(out / "eval_pde_barriers.csv")
    assert len(df) == 2
    assert df["pde_value"].notna().all()
    assert (out / "trajectory_pde_barriers.csv").is_file()


def test_seed_override_changes_estimates(coarse_config_file):
    out = _out(coarse_config_file)
    assert cli_main(["evaluate", "--config", str(coarse_config_file), "--seed", "1"]) == EXIT_OK
    a = pd.read_csv(out / "eval_pde_barriers.csv")["mc_mean"].tolist()
    assert cli_main(["evaluate", "--config", str(coarse_config_file), "--seed", "2"]) == EXIT_OK
    b = pd.read_csv(out / "eval_pde_barriers.csv")["mc_mean"].tolist()
    assert a != b


def test_checkpoint_policy_needs_checkpoint(coarse_config_file):
    args = ["evaluate", "--config", str(coarse_config_file), "--policy", "checkpoint"]
    assert cli_main(args) == EXIT_CONFIG


def test_train_then_evaluate_and_compare(coarse_config_file):
    out = _out(coarse_config_file)
    assert cli_main(["train", "--config", str(coarse_config_file), "--algo", "reinforce"]) == EXIT_OK
    for name in ("train_metrics.jsonl", "actor.json", "learned_barriers.csv", "learned_regime_map.csv"):
        assert (out / name).is_file(), name
    rows = [json.loads(line) for line in (out / "train_metrics.jsonl").read_text().splitlines()]
    assert [r["epoch"] for r in rows] == [1]

    ckpt = str(out / "actor.json")
    assert cli_main(["evaluate", "--config", str(coarse_config_file), "--policy", "checkpoint",
                     "--checkpoint", ckpt]) == EXIT_OK
    assert (out / "eval_learned_actor.csv").is_file()

    assert cli_main(["compare", "--config", str(coarse_config_file), "--checkpoint", ckpt]) == EXIT_OK
    df = pd.read_csv(out / "compare_table.csv")
    assert "mc_rl" in df.columns


def test_train_actor_critic_writes_critic(coarse_config_file):
    assert cli_main(["train", "--config", str(coarse_config_file), "--algo", "actor-critic"]) == EXIT_OK
    assert (_out(coarse_config_file) / "critic.json").is_file()


def test_sweep(coarse_config_file):
    out = _out(coarse_config_file)
    assert cli_main(["sweep", "--config", str(coarse_config_file), "--param", "eta", "--values", "0.2,0.4"]) == EXIT_OK
    assert (out / "regime_map_eta_0.2.csv").is_file()
    assert (out / "regime_map_eta_0.4.csv").is_file()
    summary = pd.read_csv(out / "sweep_eta_summary.csv")
    assert list(summary["value"]) == [0.2, 0.4]


@pytest.mark.parametrize("values", ["a,b", "0.1;0.2"])
def test_sweep_rejects_bad_values(coarse_config_file, values):
    args = ["sweep", "--config", str(coarse_config_file), "--param", "eta", "--values", values]
    assert cli_main(args) == EXIT_CONFIG


def test_sweep_rejects_unknown_param(coarse_config_file):
    args = ["sweep", "--config", str(coarse_config_file), "--param", "gamma", "--values", "1"]
    assert cli_main(args) == EXIT_CONFIG


@pytest.mark.parametrize("argv", [["bogus"], ["solve"], ["sweep", "--config", "x.json"]])
def test_bad_arguments_exit_with_config_error(argv):
    assert cli_main(argv) == EXIT_CONFIG


def test_help_exits_ok(capsys):
    assert cli_main(["--help"]) == EXIT_OK
    assert "hawkes-dividends" in capsys.readouterr().out


def test_frozen_kappa_reaches_evaluate_and_compare(coarse_config_file, monkeypatch):
    import app.cli as cli_module

    cfg = json.loads(coarse_config_file.read_text())
    cfg["train"]["freeze_kappa"] = True
    coarse_config_file.write_text(json.dumps(cfg), encoding="utf-8")
    out = _out(coarse_config_file)
    assert cli_main(["train", "--config", str(coarse_config_file), "--algo", "reinforce"]) == EXIT_OK
    ckpt = str(out / "actor.json")

    seen = {}
    real_source, real_table = cli_module.actor_policy_source, cli_module.compare_table

    def source_spy(*args, **kwargs):
        seen["evaluate"] = kwargs.get("kappa_fn")
        return real_source(*args, **kwargs)

    def table_spy(*args, **kwargs):
        seen["compare"] = kwargs.get("kappa_fn")
        return real_table(*args, **kwargs)

    monkeypatch.setattr(cli_module, "actor_policy_source", source_spy)
    monkeypatch.setattr(cli_module, "compare_table", table_spy)
    assert cli_main(["evaluate", "--config", str(coarse_config_file), "--policy", "checkpoint",
                     "--checkpoint", ckpt]) == EXIT_OK
    assert cli_main(["compare", "--config", str(coarse_config_file), "--checkpoint", ckpt]) == EXIT_OK

    for name in ("evaluate", "compare"):
        kappa_fn = seen[name]
        assert kappa_fn is not None, name
        kappa = kappa_fn(np.array([2.0, 3.0]))
        assert np.all(kappa <= 0) and kappa[0] < 0


def test_compare_without_frozen_kappa_passes_none(coarse_config_file, monkeypatch):
    import app.cli as cli_module

    seen = {}
    real_table = cli_module.compare_table

    def table_spy(*args, **kwargs):
        seen["kappa_fn"] = kwargs.get("kappa_fn", "missing")
        return real_table(*args, **kwargs)

    monkeypatch.setattr(cli_module, "compare_table", table_spy)
    assert cli_main(["compare", "--config", str(coarse_config_file)]) == EXIT_OK
    assert seen["kappa_fn"] is None
