import json
import math

import pytest

import mapcones.__main__  # noqa: F401
from mapcones import __version__, cli
from mapcones.errors import MixingError


def test_main_entrypoint_exits_zero(runner):
    result = runner.invoke(cli.main, ["--help"])
    assert result.exit_code == 0
    for command in ("membership", "volume", "width", "tables", "no-duality", "section-bounds"):
        assert command in result.output


def test_version(runner):
    result = runner.invoke(["--version"])
    assert result.exit_code == 0
    assert __version__ in result.output


def test_membership_json(runner):
    result = runner.invoke(["membership", "--family", "isotropic", "--p", "0.4", "--cone", "T", "--json"])
    assert result.exit_code == 0
    doc = json.loads(result.stdout)
    assert doc["command"] == "membership"
    assert doc["result"]["verdict"]["status"] == "out"
    assert doc["config"]["cone"] == "T"


def test_membership_summary_lines(runner):
    result = runner.invoke(["membership", "--family", "identity"])
    assert result.exit_code == 0
    assert result.stdout.startswith("[OK] CP^base (N=2): in")


def test_membership_needs_an_input(runner):
    result = runner.invoke(["membership"])
    assert result.exit_code == cli.EXIT_CONFIG_ERROR
    assert "[error] give --input FILE or --family NAME" in result.stderr


def test_membership_missing_file(runner, tmp_path):
    result = runner.invoke(["membership", "--input", str(tmp_path / "missing.json")])
    assert result.exit_code == cli.EXIT_CONFIG_ERROR
    assert "cannot read input file" in result.stderr


def test_membership_from_file(runner, tmp_path):
    path = tmp_path / "swap.json"
    re = [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]]
    im = [[0] * 4 for _ in range(4)]
    path.write_text(json.dumps({"dim": 4, "re": re, "im": im}), encoding="utf-8")
    result = runner.invoke(["membership", "--input", str(path), "--cone", "CcP", "--slice", "cone", "--json"])
    assert result.exit_code == 0
    assert json.loads(result.stdout)["result"]["verdict"]["status"] == "in"


def test_unknown_cone_is_a_config_error(runner):
    result = runner.invoke(["membership", "--family", "identity", "--cone", "XYZ"])
    assert result.exit_code == cli.EXIT_CONFIG_ERROR
    assert "unknown cone" in result.stderr


def test_volume_refuses_large_dimension(runner):
    result = runner.invoke(["volume", "--n", "3", "--no-cache"])
    assert result.exit_code == cli.EXIT_CONFIG_ERROR
    assert "dimension 80" in result.stderr


def test_volume_mixing_failure_exits_two(runner, monkeypatch):
    def refuse(*_args, **_kwargs):
        msg = "chains are not mixing"
        raise MixingError(msg, partial={"phase": 1})

    monkeypatch.setattr(cli, "volume_mcmc", refuse)
    result = runner.invoke(["volume", "--json", "--no-cache"])
    assert result.exit_code == cli.EXIT_CHECK_FAILED
    doc = json.loads(result.stdout)
    assert doc["passed"] is False
    assert doc["result"]["aborted"] == "chains are not mixing"
    assert doc["result"]["partial"] == {"phase": 1}


def test_no_duality_json(runner):
    result = runner.invoke(["no-duality", "--n", "3", "--probes", "50", "--json"])
    assert result.exit_code == 0
    doc = json.loads(result.stdout)
    assert doc["passed"] is True
    assert doc["result"]["ratio"] == pytest.approx(3.0)


def test_section_bounds_defaults(runner):
    result = runner.invoke(["section-bounds"])
    assert result.exit_code == 0
    assert result.stdout.startswith("[INFO] section vrad within")


def test_section_bounds_checks_a_value(runner):
    args = ["section-bounds", "--m", "3", "--k", "2", "--vrad", str((6 / math.pi) ** (1 / 3))]
    args += ["--r", "1", "--R", str(math.sqrt(3))]
    inside = runner.invoke([*args, "--value", str(math.sqrt(4 / math.pi))])
    assert inside.exit_code == 0
    assert "[OK]" in inside.stdout
    outside = runner.invoke([*args, "--value", "5"])
    assert outside.exit_code == cli.EXIT_CHECK_FAILED
    assert "[FAIL]" in outside.stdout


def test_section_bounds_rejects_bad_radii(runner):
    result = runner.invoke(["section-bounds", "--r", "2", "--R", "1"])
    assert result.exit_code == cli.EXIT_CONFIG_ERROR
    assert result.stderr.startswith("[error]")


def test_cache_hit_is_byte_identical(runner):
    args = ["membership", "--family", "transpose", "--cone", "P", "--json"]
    first = runner.invoke(args)
    second = runner.invoke(args)
    assert first.exit_code == second.exit_code == 0
    assert "cache hit" not in first.stderr
    assert "[INFO] cache hit" in second.stderr
    assert first.stdout == second.stdout


def test_no_cache_flag_skips_the_cache(runner):
    args = ["membership", "--family", "identity", "--json", "--no-cache"]
    runner.invoke(args)
    assert "cache hit" not in runner.invoke(args).stderr


def test_flags_override_ini(runner, tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[experiment]\nfamily = isotropic\np = 0.4\ncone = CP\n", encoding="utf-8")
    result = runner.invoke(["membership", "--config", str(ini), "--cone", "T", "--json"])
    assert result.exit_code == 0
    doc = json.loads(result.stdout)
    assert doc["config"]["cone"] == "T"
    assert doc["config"]["p"] == 0.4
    assert doc["config"]["family"] == "isotropic"


def test_unknown_ini_key(runner, tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[experiment]\ncolour = red\n", encoding="utf-8")
    result = runner.invoke(["membership", "--config", str(ini)])
    assert result.exit_code == cli.EXIT_CONFIG_ERROR
    assert "unknown keys" in result.stderr


def test_out_writes_json_and_csv(runner, tmp_path):
    out = tmp_path / "reports"
    result = runner.invoke(["duality", "--pairs", "200", "--out", str(out), "--no-cache"])
    assert result.exit_code == 0
    assert "[progress]" in result.stderr
    assert "[INFO] wrote" in result.stderr
    doc = json.loads((out / "duality.json").read_text(encoding="utf-8"))
    assert doc["passed"] is True
    assert "out" not in doc["config"]
    csv_text = (out / "duality.csv").read_bytes()
    assert csv_text.startswith(b"body,quantity,lower,estimate")
    assert csv_text.count(b"\r\n") == 4
