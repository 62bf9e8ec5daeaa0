"""Config parsing, checkpoints, CSV outputs, and the four subcommands."""

import json
import os

import numpy as np
import pytest

from nafdrive.cli import (CHECKPOINT_VERSION, checkgrad_suite, cmd_checkgrad,
                          config_digest, default_config_dict, load_checkpoint,
                          load_config, main, parse_config, save_checkpoint)
from nafdrive.errors import ConfigurationError
from nafdrive.learner import make_rngs, opt_states_init
from nafdrive.nafq import NafParams


def desk_config(seed=0):
    """Tiny but schema-complete config for fast end-to-end runs."""
    data = default_config_dict(seed)
    data["train"].update(total_steps=600, pretrain_steps=300,
                         target_sync_every=200, checkpoint_schedule=[300, 600],
                         batch_size=16, buffer_capacity=2000)
    return data


def write_config(tmp_path, data, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


# -- config


def test_default_config_parses():
    cfg = parse_config(default_config_dict())
    assert cfg.train.gamma == 0.95
    assert cfg.world.road.lane_width == 3.75
    assert cfg.naf_constants["a_cap"] == 0.6


def test_missing_field_named_in_error():
    data = default_config_dict()
    del data["idm"]["b_max"]
    with pytest.raises(ConfigurationError, match="idm.b_max"):
        parse_config(data)


def test_missing_section_named_in_error():
    data = default_config_dict()
    del data["reward"]
    with pytest.raises(ConfigurationError, match="reward"):
        parse_config(data)


def test_seed_override(tmp_path):
    path = write_config(tmp_path, default_config_dict(seed=0))
    assert load_config(path, seed_override=77).seed == 77


def test_digest_ignores_seed_but_not_physics():
    a = default_config_dict(seed=0)
    b = default_config_dict(seed=99)
    assert config_digest(a) == config_digest(b)
    b["idm"]["a_m"] = 2.5
    assert config_digest(a) != config_digest(b)


# -- checkpoints


def checkpoint_state(seed=0):
    rngs = make_rngs(seed)
    params = NafParams.init(rngs["init"], hidden=(8,))
    return params, params.copy(), opt_states_init(params), rngs


def test_checkpoint_round_trip_bytes(tmp_path):
    params, target, opt, rngs = checkpoint_state()
    digest = config_digest(default_config_dict())
    p1 = str(tmp_path / "ck1.json")
    p2 = str(tmp_path / "ck2.json")
    save_checkpoint(p1, 123, params, target, opt, rngs, digest)
    ck = load_checkpoint(p1)
    assert ck["step"] == 123 and ck["config_digest"] == digest
    save_checkpoint(p2, ck["step"], ck["params"], ck["target_params"],
                    ck["opt_states"], ck["rngs"], ck["config_digest"])
    assert open(p1, "rb").read() == open(p2, "rb").read()


def test_checkpoint_restores_parameters(tmp_path):
    params, target, opt, rngs = checkpoint_state(3)
    path = str(tmp_path / "ck.json")
    save_checkpoint(path, 1, params, target, opt, rngs, "d")
    ck = load_checkpoint(path)
    for name in NafParams.NET_NAMES:
        for a, b in zip(getattr(ck["params"], name).weights,
                        getattr(params, name).weights):
            assert np.array_equal(a, b)
    # rng streams resume identically
    assert ck["rngs"]["spawn"].uniform() == rngs["spawn"].uniform()


def test_checkpoint_version_checked(tmp_path):
    params, target, opt, rngs = checkpoint_state()
    path = str(tmp_path / "ck.json")
    save_checkpoint(path, 1, params, target, opt, rngs, "d")
    data = json.loads(open(path).read())
    data["format_version"] = CHECKPOINT_VERSION + 1
    open(path, "w").write(json.dumps(data))
    with pytest.raises(ConfigurationError):
        load_checkpoint(path)


# -- train command


def test_cmd_train_outputs(tmp_path):
    cfg_path = write_config(tmp_path, desk_config())
    out = str(tmp_path / "run")
    assert main(["train", "--config", cfg_path, "--out", out]) == 0
    names = sorted(os.listdir(out))
    assert "loss.csv" in names and "episodes.csv" in names
    assert "checkpoint_00000300.json" in names
    assert "checkpoint_00000600.json" in names
    loss_lines = open(os.path.join(out, "loss.csv")).read().splitlines()
    assert loss_lines[0].startswith("#")
    assert loss_lines[1] == "step,loss"
    assert len(loss_lines) == 2 + 600 // 20
    ep_lines = open(os.path.join(out, "episodes.csv")).read().splitlines()
    assert ep_lines[0] == ("vehicle_id,start_step,end_step,duration_s,"
                           "R,R_acce,R_rate,R_dev,outcome")


def test_cmd_train_rerun_byte_identical(tmp_path):
    cfg_path = write_config(tmp_path, desk_config(seed=5))
    out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
    assert main(["train", "--config", cfg_path, "--out", out1]) == 0
    assert main(["train", "--config", cfg_path, "--out", out2]) == 0
    for name in os.listdir(out1):
        a = open(os.path.join(out1, name), "rb").read()
        b = open(os.path.join(out2, name), "rb").read()
        assert a == b, name


def test_cmd_train_missing_field_exit_code(tmp_path, capsys):
    data = desk_config()
    del data["train"]["gamma"]
    cfg_path = write_config(tmp_path, data)
    assert main(["train", "--config", cfg_path,
                 "--out", str(tmp_path / "x")]) == 2
    assert "train.gamma" in capsys.readouterr().err


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("trained")
    data = desk_config()
    cfg_path = write_config(tmp, data)
    out = str(tmp / "run")
    assert main(["train", "--config", cfg_path, "--out", out]) == 0
    return cfg_path, out


# -- eval command


def test_cmd_eval_single_episode(trained_run, tmp_path):
    cfg_path, out = trained_run
    ck = os.path.join(out, "checkpoint_00000600.json")
    dst = str(tmp_path / "eval.csv")
    assert main(["eval", "--checkpoint", ck, "--config", cfg_path,
                 "--episodes", "1", "--seed", "3", "--out", dst]) == 0
    lines = open(dst).read().splitlines()
    assert len(lines) == 3  # header + one episode + summary
    assert lines[-1].startswith("summary,")


def test_cmd_eval_summary_is_mean(trained_run, tmp_path):
    cfg_path, out = trained_run
    ck = os.path.join(out, "checkpoint_00000600.json")
    dst = str(tmp_path / "eval.csv")
    assert main(["eval", "--checkpoint", ck, "--config", cfg_path,
                 "--episodes", "3", "--seed", "3", "--out", dst]) == 0
    lines = open(dst).read().splitlines()[1:]
    body, summary = lines[:-1], lines[-1].split(",")
    rs = [float(row.split(",")[4]) for row in body]
    assert float(summary[4]) == pytest.approx(sum(rs) / len(rs), rel=1e-12)


def test_cmd_eval_digest_mismatch_refused(trained_run, tmp_path, capsys):
    cfg_path, out = trained_run
    data = json.loads(open(cfg_path).read())
    data["idm"]["a_m"] = 2.5
    other_cfg = write_config(tmp_path, data, "other.json")
    ck = os.path.join(out, "checkpoint_00000600.json")
    dst = str(tmp_path / "eval.csv")
    assert main(["eval", "--checkpoint", ck, "--config", other_cfg,
                 "--episodes", "1", "--seed", "3", "--out", dst]) == 2
    assert "digest" in capsys.readouterr().err
    assert main(["eval", "--checkpoint", ck, "--config", other_cfg,
                 "--episodes", "1", "--seed", "3", "--out", dst,
                 "--force"]) == 0


# -- trace command


def test_cmd_trace_rows(trained_run, tmp_path):
    cfg_path, out = trained_run
    ck = os.path.join(out, "checkpoint_00000600.json")
    dst = str(tmp_path / "trace.csv")
    assert main(["trace", "--checkpoint", ck, "--config", cfg_path,
                 "--seed", "4", "--out", dst]) == 0
    lines = open(dst).read().splitlines()
    assert lines[0] == ("step,t,a_yaw,omega,theta,d,delta_d_lat,"
                        "r,r_acce,r_rate,r_dev")
    rows = [line.split(",") for line in lines[1:]]
    assert len(rows) >= 2
    assert float(rows[0][1]) == 0.0
    dts = [float(b[1]) - float(a[1]) for a, b in zip(rows, rows[1:])]
    assert all(abs(d - 0.1) < 1e-9 for d in dts)


# -- checkgrad command


def test_checkgrad_passes_fresh_params(capsys):
    assert cmd_checkgrad(seed=0) == 0
    out = capsys.readouterr().out
    assert "net" in out and "q_value" in out and "batch_loss" in out


def test_checkgrad_detects_injected_fault():
    assert cmd_checkgrad(seed=0, inject_fault=True) == 1


def test_checkgrad_repeatable(capsys):
    main(["checkgrad", "--seed", "3"])
    first = capsys.readouterr().out
    main(["checkgrad", "--seed", "3"])
    assert capsys.readouterr().out == first


def test_checkgrad_suite_thresholds():
    errors = checkgrad_suite(seed=1)
    assert all(err < 1e-4 for err in errors.values())
