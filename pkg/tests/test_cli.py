import csv
import io
import json

import pytest

from pbktrace import cli
from pbktrace.padic import kloosterman_classical


def run(tmp_path, cfg, *extra, capsys=None):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return cli.main(["--config", str(path), *extra])


def rows_of(text):
    return list(csv.reader(io.StringIO(text)))


def test_kloosterman_level_one_reproduces_classical(tmp_path, capsys):
    code = run(tmp_path, {"schema_version": 1, "command": "kloosterman", "m_list": [1, 3], "n_list": [2], "c_max": 50})
    assert code == 0
    rows = rows_of(capsys.readouterr().out)
    assert rows[0] == ["m", "n", "c", "re_H", "im_H", "trivial_slack", "weil_slack"]
    assert len(rows) == 1 + 2 * 50
    for m, n, c, re, im, ts, ws in rows[1:]:
        assert float(re) == pytest.approx(kloosterman_classical(int(m), int(n), int(c)), abs=1e-9)
        assert float(im) == 0.0 and float(ts) >= 0 and float(ws) >= -1e-9


def test_kloosterman_level_11_zero_off_multiples(tmp_path, capsys):
    code = run(tmp_path, {"schema_version": 1, "command": "kloosterman", "level": {"11": 1},
                          "m_list": [1, 2], "c_max": 33})
    assert code == 0
    for m, n, c, re, *_ in rows_of(capsys.readouterr().out)[1:]:
        if int(c) % 11:
            assert float(re) == 0.0


def test_empty_m_list(tmp_path, capsys):
    assert run(tmp_path, {"schema_version": 1, "command": "kloosterman", "m_list": []}) == 0
    assert rows_of(capsys.readouterr().out) == [["m", "n", "c", "re_H", "im_H", "trivial_slack", "weil_slack"]]


def test_invalid_delta_names_constraint(tmp_path, capsys):
    code = run(tmp_path, {"schema_version": 1, "command": "transforms", "family": "family1", "T": 150, "delta": 2})
    assert code == cli.EXIT_CONFIG
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "configuration" and "1 <= Delta < T/100" in err["message"]


@pytest.mark.parametrize("cfg", [
    {"command": "kloosterman"},
    {"schema_version": 2, "command": "kloosterman"},
    {"schema_version": 1, "command": "nope"},
    {"schema_version": 1, "command": "kloosterman", "bogus": 1},
    {"schema_version": 1, "command": "kloosterman", "m_list": [1.5]},
    {"schema_version": 1, "command": "kloosterman", "level": {"4": 1}},
])
def test_config_errors(tmp_path, cfg):
    assert run(tmp_path, cfg) == cli.EXIT_CONFIG


def test_unreadable_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["--config", str(bad)]) == cli.EXIT_CONFIG
    assert cli.main(["--config", str(tmp_path / "missing.json")]) == cli.EXIT_CONFIG


def test_precondition_is_config_error(tmp_path):
    assert run(tmp_path, {"schema_version": 1, "command": "verify-petersson2", "m_list": [11], "c_max": 100}) == 2


def test_ill_conditioned_is_numerical(tmp_path):
    assert run(tmp_path, {"schema_version": 1, "command": "verify-petersson2", "m_list": [2], "c_max": 200}) == 3


def test_verify_pass_and_tolerance_failure(tmp_path, capsys):
    cfg = {"schema_version": 1, "command": "verify-petersson2", "m_list": [2, 3], "c_max": 60000}
    assert run(tmp_path, cfg, "--format", "json") == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["passed"] and [r["m"] for r in rep["rows"]] == [2, 3]
    cfg["tolerance"] = 1e-12
    assert run(tmp_path, cfg) == cli.EXIT_TOLERANCE


def test_transforms_table(tmp_path, capsys):
    code = run(tmp_path, {"schema_version": 1, "command": "transforms", "family": "family2", "T": 3})
    assert code == 0
    rows = rows_of(capsys.readouterr().out)
    checks = {r[0] for r in rows[1:]}
    assert checks == {"h-minus", "modified-zagier", "mhat", "selberg"}
    assert all(r[-1] == "true" for r in rows[1:])


def test_bk_and_parity(tmp_path, capsys):
    base = {"schema_version": 1, "level": {"11": 1}, "family": "family2", "T": 10, "c_max": 110}
    assert run(tmp_path, dict(base, command="bk-geometric", m1=-1, m2=1), "--format", "json") == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["kind"] == "bk-opposite" and rec["diagonal_term"] == 0.0
    assert run(tmp_path, dict(base, command="parity-demo", m=1), "--format", "json") == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["constant"] <= 1e3 and rec["main_term"] > 0


def test_out_file_and_17_digits(tmp_path):
    out = tmp_path / "k.csv"
    run(tmp_path, {"schema_version": 1, "command": "kloosterman", "m_list": [1], "c_max": 7}, "--out", str(out))
    rows = rows_of(out.read_text())
    val = rows[7][3]
    assert float(val) == pytest.approx(kloosterman_classical(1, 1, 7))
    assert len(val.lstrip("-").replace(".", "").lstrip("0").split("e")[0]) <= 17


def test_threads_env(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, "3")
    args = cli.build_parser().parse_args(["--command", "kloosterman"])
    assert cli.load_config(args).threads == 3
    monkeypatch.setenv(cli.THREADS_ENV, "x")
    with pytest.raises(cli.ConfigError):
        cli.load_config(args)
    args = cli.build_parser().parse_args(["--command", "kloosterman", "--threads", "2"])
    assert cli.load_config(args).threads == 2


def test_print_schema(capsys):
    assert cli.main(["--print-schema", "VerificationReport"]) == 0
    schema = json.loads(capsys.readouterr().out)
    assert schema["title"] == "VerificationReport"


def test_fmt():
    assert cli.fmt(0.1) == "0.10000000000000001"
    assert cli.fmt(True) == "true" and cli.fmt(7) == "7"
