import csv
import hashlib

import numpy as np
import pytest
import yaml

from ccsrl import cli, simcore
from ccsrl.config import PROFILE_DEFAULTS, RunConfig, dump_config, env_overrides, load_config
from ccsrl.errors import ConfigurationError, SolverError

TINY = {
    "profile": "full",
    "seed": 3,
    "model": {"grid": {"nx": 10, "ny": 10}},
    "data": {"n_traj": 4, "n_steps": 3},
    "e2co": {"d_z": 4, "hidden": [16], "trunk": 8, "epochs": 2},
    "sac": {"episodes": 3, "batch_size": 8, "update_after": 8, "hidden": [8, 8], "capacity": 100},
    "eval": {"random_schedules": 2},
}


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_cfg(tmp_path, d=None, name="run.yaml"):
    d = dict(TINY if d is None else d)
    d["out"] = str(tmp_path / "out")
    path = tmp_path / name
    path.write_text(yaml.safe_dump(d))
    return path


# ------------------------------------------------------------------ config
def test_defaults_valid_and_round_trip(tmp_path):
    cfg = RunConfig.from_dict({})
    assert cfg.data.n_traj * cfg.data.n_steps == 12_000
    assert cfg.sac_config().gamma == cfg.econ_params().gamma == 0.986
    path = dump_config(cfg, tmp_path / "r.yaml")
    assert load_config(path, environ={}) == cfg


def test_fast_profile_round_trip(tmp_path):
    cfg = RunConfig.from_dict({"profile": "fast", "sac": {"episodes": 7}})
    assert cfg.model["grid"] == {"nx": 32, "ny": 32}
    assert cfg.data.n_traj == PROFILE_DEFAULTS["fast"]["data"]["n_traj"]
    assert cfg.sac.episodes == 7  # the file beats the profile
    assert load_config(dump_config(cfg, tmp_path / "r.yaml"), environ={}) == cfg


@pytest.mark.parametrize(
    "bad",
    [
        {"nonsense": 1},
        {"e2co": {"epochz": 3}},
        {"econ": {"price": 1.0}},
        {"model": {"grid": {"nx": 4, "nz": 2}}},
        {"e2co": {"weights": {"rec": 1.0, "beta": 2.0}}},
        {"profile": "medium"},
        {"data": {"split": [1, 2, 3]}},
        {"econ": {"gamma": 1.5}},
    ],
)
def test_invalid_config_rejected(bad):
    with pytest.raises((ConfigurationError, ValueError)):
        RunConfig.from_dict(bad)


def test_env_overrides_parse_and_nest():
    env = {"CCSRL__E2CO__EPOCHS": "5", "CCSRL__ECON__GAMMA": "0.9", "CCSRL__MODEL__GRID__NX": "12", "HOME": "/x"}
    assert env_overrides(env) == {"e2co": {"epochs": 5}, "econ": {"gamma": 0.9}, "model": {"grid": {"nx": 12}}}
    cfg = load_config(None, environ=env)
    assert cfg.e2co.epochs == 5 and cfg.sac_config().gamma == 0.9 and cfg.model["grid"]["nx"] == 12


def test_precedence_file_env_flags(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump({"seed": 1, "e2co": {"epochs": 9, "lr": 0.01}}))
    cfg = load_config(path, environ={"CCSRL__E2CO__EPOCHS": "4", "CCSRL__SEED": "2"}, seed=5)
    assert (cfg.seed, cfg.e2co.epochs, cfg.e2co.lr) == (5, 4, 0.01)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "nope.yaml", environ={})


# ---------------------------------------------------------------------- io
def test_model_file_round_trip_preserves_fingerprint(tmp_path):
    model = simcore.model_from_dict({"grid": {"nx": 10, "ny": 12}, "permeability": {"seed": 4}})
    back = simcore.load_model(simcore.save_model(model, tmp_path / "m" / "model.yaml"))
    assert simcore.model_fingerprint(back) == simcore.model_fingerprint(model)
    np.testing.assert_array_equal(back.rock.perm, model.rock.perm)
    other = simcore.model_from_dict({"grid": {"nx": 10, "ny": 12}, "permeability": {"seed": 5}})
    assert simcore.model_fingerprint(other) != simcore.model_fingerprint(model)


def test_pgm_round_trip_within_quantization(tmp_path):
    field = np.random.default_rng(0).uniform(2200, 3100, (6, 5))
    simcore.write_pgm(tmp_path / "f.pgm", field)
    back = simcore.read_pgm(tmp_path / "f.pgm")
    assert back.shape == field.shape
    np.testing.assert_allclose(back, field, atol=(3100 - 2200) / 65535 * 2)


# --------------------------------------------------------------------- cli
def run(*argv):
    return cli.main(list(argv))


def test_usage_errors_exit_1(tmp_path):
    with pytest.raises(SystemExit) as e:
        run("gen-model")  # --config missing
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        run("fly", "--config", str(write_cfg(tmp_path)))
    assert e.value.code == 1


def test_validation_errors_exit_2(tmp_path):
    bad = write_cfg(tmp_path, {**TINY, "e2co": {"bogus": 1}}, "bad.yaml")
    assert run("gen-model", "--config", str(bad)) == 2
    good = write_cfg(tmp_path)
    assert run("train-e2co", "--config", str(good)) == 2  # no upstream artifacts
    assert run("gen-model", "--config", str(good), "--threads", "0") == 2


def test_numerical_failure_exit_3(tmp_path, monkeypatch):
    def boom(cfg, p, args):
        raise SolverError("pressure solve stalled")

    monkeypatch.setitem(cli.COMMANDS, "report", boom)
    assert run("report", "--config", str(write_cfg(tmp_path))) == 3


def test_resolved_config_echo(tmp_path):
    path = write_cfg(tmp_path)
    assert run("gen-model", "--config", str(path), "--seed", "11") == 0
    echoed = load_config(tmp_path / "out" / "resolved_config.yaml", environ={})
    assert echoed == load_config(path, environ={}, seed=11)


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("pipe")
    path = write_cfg(tmp)
    codes = {c: run(c, "--config", str(path)) for c in
             ("gen-model", "gen-data", "train-e2co", "eval-e2co", "train-sac", "eval-policy", "report")}
    return tmp, path, codes


def test_pipeline_runs_end_to_end(pipeline):
    tmp, _, codes = pipeline
    assert all(v == 0 for v in codes.values()), codes
    p = cli.Paths(tmp / "out")
    with open(p.npv_csv) as fh:
        rows = list(csv.DictReader(fh))
    assert [(r["case"], r["environment"]) for r in rows] == [
        ("trained_policy", "surrogate"),
        ("trained_policy", "full_order"),
        ("base_case_midpoint", "full_order"),
    ]
    for f in (p.perm_image, p.loss_csv, p.errors_csv, p.curve_csv, p.schedule_csv, p.random_csv,
              p.fields / "pressure_pred.pgm", p.fields / "z_co2_true.pgm"):
        assert f.exists(), f
    text = p.report.read_text()
    assert "surrogate minus full-order gap" in text and "pressure relative error" in text
    with open(p.errors_csv) as fh:
        assert len(list(csv.DictReader(fh))) == TINY["data"]["n_steps"]


def test_commands_idempotent(pipeline):
    tmp, path, _ = pipeline
    p = cli.Paths(tmp / "out")
    files = [p.model, p.dataset, p.e2co, p.loss_csv, p.errors_csv, p.policy, p.curve_csv, p.npv_csv]
    before = [sha(f) for f in files]
    for c in ("gen-model", "gen-data", "train-e2co", "eval-e2co", "train-sac", "eval-policy"):
        assert run(c, "--config", str(path)) == 0
    assert [sha(f) for f in files] == before


def test_fingerprint_mismatch_refused(pipeline, capsys):
    tmp, path, _ = pipeline
    d = yaml.safe_load(path.read_text())
    d["model"]["permeability"] = {"seed": 99}
    other = tmp / "other.yaml"
    other.write_text(yaml.safe_dump(d))
    capsys.readouterr()
    assert run("train-e2co", "--config", str(other)) == 2
    err = capsys.readouterr().err
    assert "expected fingerprint" in err and "found fingerprint" in err


def test_stale_dataset_refused(pipeline):
    _, path, _ = pipeline
    assert run("train-e2co", "--config", str(path), "--seed", "4") == 2


def test_checkpoint_chain_verified(pipeline):
    tmp, path, _ = pipeline
    p = cli.Paths(tmp / "out")
    original = p.e2co.read_bytes()
    try:
        p.e2co.write_bytes(original[:-1] + bytes([original[-1] ^ 1]))  # surrogate changed after the policy
        assert run("eval-policy", "--config", str(path)) == 2
    finally:
        p.e2co.write_bytes(original)
    assert run("eval-policy", "--config", str(path)) == 0
