import math
import os

import numpy as np
import pytest

from gazestab.cli import main
from gazestab.errors import FileFormatError, InvalidInput
from gazestab.fileio import (
    RunConfig,
    config_overrides,
    default_data_dir,
    parse_model_file,
    parse_run_config,
    parse_script_file,
    read_log_csv,
    resolve_input_path,
    serialize_model,
    serialize_script,
    write_log_csv,
)
from gazestab.models import default_head_model
from gazestab.simulator import (
    DisturbanceScript,
    ScriptSegment,
    SimSettings,
    run_experiment,
)
from gazestab.stabilizer import StabilizerConfig

DATA = default_data_dir()
MODEL_FILE = os.path.join(DATA, "default_head.model")


def chains_equal(a, b) -> bool:
    if a.segments != b.segments:
        return False
    if not (np.array_equal(a.base_pose.rot, b.base_pose.rot) and np.array_equal(a.base_pose.pos, b.base_pose.pos)):
        return False
    for la, lb in zip(a.links, b.links):
        for f in ("a", "d", "alpha", "theta_offset", "q_min", "q_max", "v_max"):
            if getattr(la, f) != getattr(lb, f):
                return False
    return True


# ------------------------------------------------------------- model files


def test_shipped_model_file_matches_code_model():
    parsed = parse_model_file(MODEL_FILE)
    built = default_head_model()
    assert chains_equal(parsed.chain, built.chain)
    assert parsed.imu_link == built.imu_link
    assert np.array_equal(parsed.imu_offset.pos, built.imu_offset.pos)
    assert parsed.trunk_names == built.trunk_names
    assert parsed.name == built.name


def test_model_units_equivalence(tmp_path):
    model = parse_model_file(MODEL_FILE)
    for units in ("degrees", "radians"):
        p = tmp_path / f"m_{units}.model"
        p.write_text(serialize_model(model, units))
        again = parse_model_file(str(p))
        assert chains_equal(model.chain, again.chain), units
        assert np.array_equal(again.imu_offset.pos, model.imu_offset.pos)


def test_model_parse_errors_carry_path_and_line(tmp_path):
    p = tmp_path / "bad.model"
    p.write_text("model x\nunits degrees\nsegment torso\nlink j1 a=zebra\n")
    with pytest.raises(FileFormatError) as exc:
        parse_model_file(str(p))
    assert exc.value.line == 4
    assert str(p) in str(exc.value) and ":4:" in str(exc.value)


@pytest.mark.parametrize(
    "body,fragment",
    [
        ("units degrees\nsegment torso\nlink j a=0\nimu link=j\n", "missing model line"),
        ("model x\nsegment torso\nlink j a=0\nimu link=j\n", "units must be declared"),
        ("model x\nunits degrees\nsegment arm\n", "segment must be one of"),
        ("model x\nunits degrees\nlink j a=0\n", "link line before any segment"),
        ("model x\nunits degrees\nsegment torso\nlink j b=1\n", "unknown key"),
        ("model x\nunits degrees\nsegment torso\nlink j a=0\nimu link=ghost\n", "not a declared link"),
        ("model x\nunits furlongs\n", "units must be 'degrees' or 'radians'"),
        ("model x\nunits degrees\nwibble 3\n", "unknown directive"),
    ],
)
def test_model_parse_rejections(tmp_path, body, fragment):
    p = tmp_path / "bad.model"
    p.write_text(body)
    with pytest.raises(FileFormatError, match=fragment):
        parse_model_file(str(p))


def test_model_missing_file_error():
    with pytest.raises(FileFormatError, match="file not found"):
        parse_model_file("/nonexistent/head.model")


# ------------------------------------------------------------ script files


def test_shipped_exp_a_script_contents():
    script = parse_script_file(os.path.join(DATA, "exp_a.script"))
    assert script.name == "exp-a"
    assert len(script.segments) == 12 and not script.noise
    first = script.segments[0]
    assert first.channel == "torso-yaw"
    assert first.rate == pytest.approx(math.radians(20.0))
    assert (first.t_start, first.t_end) == (1.0, 2.0)
    assert not first.external
    roll = [s for s in script.segments if s.channel == "torso-roll"]
    assert (roll[0].t_start, roll[1].t_end) == (6.0, 10.0)
    script.validate(default_head_model())


def test_shipped_exp_b_script_is_external_noise():
    script = parse_script_file(os.path.join(DATA, "exp_b.script"))
    assert not script.segments and len(script.noise) == 1
    n = script.noise[0]
    assert n.external and n.seed == 101
    assert n.amplitude == pytest.approx(math.radians(15.0))
    assert set(n.channels) == {"torso-yaw", "torso-pitch", "torso-roll"}


def test_script_round_trip_both_units(tmp_path):
    src = parse_script_file(os.path.join(DATA, "translate.script"))
    for units in ("degrees", "radians"):
        p = tmp_path / f"s_{units}.script"
        p.write_text(serialize_script(src, units))
        again = parse_script_file(str(p))
        assert again == src, units


def test_base_channel_rates_ignore_angle_units(tmp_path):
    p = tmp_path / "t.script"
    p.write_text("script t\nunits degrees\nmove channel=base-y t=0,1 rate=0.25\n")
    script = parse_script_file(str(p))
    assert script.segments[0].rate == 0.25  # meters per second, no conversion


def test_script_parse_rejections(tmp_path):
    cases = [
        ("script s\nunits degrees\nmove channel=torso-yaw rate=5\n", "missing t="),
        ("script s\nunits degrees\nmove channel=torso-yaw t=1 rate=5\n", "needs 2 comma-separated"),
        ("script s\nunits degrees\nnoise channels=torso-yaw,base-x t=0,1 amplitude=1 bandwidth=1 seed=1\n", "cannot mix"),
        ("script s\nmove channel=torso-yaw t=0,1 rate=5\n", "units must be declared"),
        ("script s\nunits degrees\nmove channel=torso-yaw t=0,1 rate=5 loud\n", "expected key=value"),
    ]
    for body, fragment in cases:
        p = tmp_path / "bad.script"
        p.write_text(body)
        with pytest.raises(FileFormatError, match=fragment):
            parse_script_file(str(p))


# -------------------------------------------------------------- run configs


def test_shipped_config_parses_with_expected_settings():
    cfg = parse_run_config(os.path.join(DATA, "exp_a_kff.config"))
    assert cfg.name == "exp-a-kff"
    assert cfg.model_path == "default_head.model"
    assert cfg.script_path == "exp_a.script"
    s = cfg.settings
    assert s.control.mode == "kff" and s.control.dof_set == "neck-eyes"
    assert s.duration == 13.0 and s.gyro_sigma == 0.0 and s.dt == 0.01
    assert s.cam.f == 240.0 and s.cloud.n == 900
    assert cfg.out == "exp_a_kff.csv"


def test_translate_config_uses_long_lens():
    cfg = parse_run_config(os.path.join(DATA, "translate_kff.config"))
    assert cfg.settings.cam.f == 480.0
    assert cfg.settings.cloud.n == 1600


def test_all_shipped_configs_parse():
    names = [f for f in os.listdir(DATA) if f.endswith(".config")]
    assert len(names) == 10
    for name in names:
        cfg = parse_run_config(os.path.join(DATA, name))
        assert isinstance(cfg, RunConfig)
        assert os.path.exists(resolve_input_path(cfg.model_path, DATA))
        assert os.path.exists(resolve_input_path(cfg.script_path, DATA))


def test_config_rejects_unknown_and_duplicate_keys(tmp_path):
    p = tmp_path / "c.config"
    p.write_text("config c\nmodel m\nscript s\nwarp-drive 9\n")
    with pytest.raises(FileFormatError, match="unknown config key"):
        parse_run_config(str(p))
    p.write_text("config c\nmodel m\nscript s\nmode kff\nmode ifb\n")
    with pytest.raises(FileFormatError, match="duplicate config key"):
        parse_run_config(str(p))
    p.write_text("config c\nmodel m\n")
    with pytest.raises(FileFormatError, match="missing required config key"):
        parse_run_config(str(p))


def test_config_angle_keys_respect_units(tmp_path):
    p = tmp_path / "c.config"
    p.write_text("config c\nunits degrees\nmodel m\nscript s\nneck-rate-limit 30\ncloud-azimuth 45\n")
    cfg = parse_run_config(str(p))
    assert cfg.settings.control.neck_rate_limit == pytest.approx(math.radians(30.0))
    assert cfg.settings.cloud.azimuth == pytest.approx(math.radians(45.0))


def test_config_overrides_replace_fields():
    cfg = parse_run_config(os.path.join(DATA, "exp_a_kff.config"))
    out = config_overrides(cfg, mode="ifb", dof="eyes", seed=9, out="x.csv")
    assert out.settings.control.mode == "ifb"
    assert out.settings.control.dof_set == "eyes"
    assert out.settings.seed == 9 and out.out == "x.csv"
    # untouched fields survive
    assert out.settings.duration == cfg.settings.duration


def test_resolve_input_path_env_search(tmp_path, monkeypatch):
    target = tmp_path / "alt.model"
    target.write_text("x")
    monkeypatch.setenv("GAZESTAB_MODEL_DIR", str(tmp_path))
    assert resolve_input_path("alt.model") == str(target)
    monkeypatch.delenv("GAZESTAB_MODEL_DIR")
    assert resolve_input_path("default_head.model") == MODEL_FILE


# ----------------------------------------------------------------- CSV logs


def tiny_log():
    model = default_head_model()
    script = DisturbanceScript("tiny", segments=(ScriptSegment(0.05, 0.25, "torso-yaw", 0.3),))
    settings = SimSettings(control=StabilizerConfig(mode="kff"), duration=0.4, gyro_sigma=0.0)
    return run_experiment(model, script, settings)


def test_csv_round_trip_exact(tmp_path):
    log = tiny_log()
    p = tmp_path / "log.csv"
    write_log_csv(log, str(p))
    back = read_log_csv(str(p))
    for f in ("t", "q", "qdot", "base_offset", "cmd", "est_twist", "true_twist", "fp", "optfl"):
        assert np.array_equal(getattr(back, f), getattr(log, f)), f
    assert np.array_equal(back.n_valid, log.n_valid)
    assert np.array_equal(back.saturated, log.saturated)
    assert back.segments == log.segments
    assert back.meta["script"] == "tiny" and back.meta["dt"] == 0.01
    assert back.meta["seed"] == 0


def test_csv_reader_rejects_foreign_files(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(FileFormatError, match="missing '# gazestab-log"):
        read_log_csv(str(p))
    with pytest.raises(FileFormatError, match="file not found"):
        read_log_csv(str(tmp_path / "ghost.csv"))


# ----------------------------------------------------------------- CLI


def write_quick_config(tmp_path, mode, duration=2.5):
    p = tmp_path / f"quick_{mode}.config"
    p.write_text(
        f"config quick-{mode}\n"
        "model default_head.model\n"
        "script exp_a.script\n"
        f"mode {mode}\n"
        f"duration {duration}\n"
        "gyro-noise 0\n"
        f"out {tmp_path}/quick_{mode}.csv\n"
    )
    return str(p)


def test_cli_run_writes_expected_row_count(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    cfg = write_quick_config(tmp_path, "off")
    assert main(["run", "--config", cfg]) == 0
    log = read_log_csv(str(tmp_path / "quick_off.csv"))
    assert log.n_rows() == int(round(2.5 / 0.01)) + 1
    assert (tmp_path / "quick_off.summary.json").exists()


def test_cli_missing_script_exits_2_naming_path(tmp_path, capsys):
    p = tmp_path / "c.config"
    p.write_text("config c\nmodel default_head.model\nscript ghost.script\n")
    assert main(["run", "--config", str(p)]) == 2
    err = capsys.readouterr().err
    assert "ghost.script" in err


def test_cli_missing_config_exits_2(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "none.config")]) == 2
    assert "not found" in capsys.readouterr().err


def test_cli_rerun_byte_identical(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    cfg = write_quick_config(tmp_path, "kff", duration=1.0)
    assert main(["run", "--config", cfg]) == 0
    first = (tmp_path / "quick_kff.csv").read_bytes()
    assert main(["run", "--config", cfg]) == 0
    assert (tmp_path / "quick_kff.csv").read_bytes() == first


def test_cli_flag_overrides_reach_log(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    cfg = write_quick_config(tmp_path, "off", duration=0.3)
    out = str(tmp_path / "ovr.csv")
    assert main(["run", "--config", cfg, "--mode", "ifb", "--dof", "eyes", "--seed", "5", "--out", out]) == 0
    log = read_log_csv(out)
    assert log.meta["mode"] == "ifb" and log.meta["dof_set"] == "eyes"
    assert log.meta["seed"] == 5


def test_cli_compare_orders_and_self_zero(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    for mode in ("off", "kff", "ifb"):
        assert main(["run", "--config", write_quick_config(tmp_path, mode)]) == 0
    base = str(tmp_path / "quick_off.csv")
    assert main(["compare", "--baseline", base, str(tmp_path / "quick_ifb.csv"), str(tmp_path / "quick_kff.csv"), base]) == 0
    out = capsys.readouterr().out
    lines = [l for l in out.splitlines() if ".csv [" in l and "baseline" not in l]
    order = [l.split()[0] for l in lines]
    assert order == ["quick_kff.csv", "quick_ifb.csv", "quick_off.csv"]
    off_row = [l for l in lines if l.startswith("quick_off")][0]
    assert "0.0%" in off_row.replace(" ", "")


def test_cli_compare_mismatch_exits_1(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    a = write_quick_config(tmp_path, "off", duration=0.3)
    b = write_quick_config(tmp_path, "kff", duration=0.5)
    assert main(["run", "--config", a]) == 0
    assert main(["run", "--config", b]) == 0
    code = main(["compare", "--baseline", str(tmp_path / "quick_off.csv"), str(tmp_path / "quick_kff.csv")])
    assert code == 1
    assert "differ" in capsys.readouterr().err


def test_cli_compare_empty_logs_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["compare", "--baseline", "x.csv"])
    assert exc.value.code == 2


def test_cli_unknown_mode_rejected():
    with pytest.raises(SystemExit) as exc:
        main(["run", "--config", "c", "--mode", "sideways"])
    assert exc.value.code == 2
