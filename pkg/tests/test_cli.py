import json
import subprocess
import sys
from pathlib import Path

import pytest

from mkep.cli import main
from mkep.generator import GeneratorConfig, PairGenerator
from mkep.pools import write_pool

from conftest import config_dict, make_config

DATA = Path(__file__).parent / "data"


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.json"
    path.write_text(json.dumps(config_dict(rounds=3, replications=2, output={"directory": str(tmp_path / "out")})))
    return path


def test_validate_writes_nothing(tmp_path, small_config, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    before = sorted(tmp_path.rglob("*"))
    assert main(["validate", str(small_config), "table2_symmetric"]) == 0
    assert sorted(tmp_path.rglob("*")) == before
    assert "ok: test (2 registries" in capsys.readouterr().out


def test_validate_reports_problems(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(config_dict(bound=4, global_bound=3)))
    assert main(["validate", str(bad)]) == 2
    assert "global_bound" in capsys.readouterr().err


def test_solve_two_pair_pool(capsys):
    assert main(["solve", str(DATA / "two_pair_pool.csv")]) == 0
    out = capsys.readouterr().out
    assert "cycle 1 -> 2 -> 1" in out
    assert "all constraints satisfied" in out


def test_solve_json_matches_oracle(tmp_path, capsys):
    cfg = make_config()
    gen = PairGenerator(GeneratorConfig(), 3)
    pairs = [gen.draw_pair(cfg.registries[i % 2], 0) for i in range(12)]
    pool = tmp_path / "pool.csv"
    write_pool(pool, pairs)
    assert main(["solve", str(pool), "--format", "json", "--bounds", "3,2", "--global-bound", "3"]) == 0
    solved = json.loads(capsys.readouterr().out)
    assert main(["oracle", str(pool), "--format", "json", "--bounds", "3,2", "--global-bound", "3"]) == 0
    oracle = json.loads(capsys.readouterr().out)
    assert solved == oracle
    assert solved["check"]["violations"] == []
    m = solved["solution"]["matched_per_registry"]
    assert all(m[k] >= v for k, v in solved["ir_floor"].items())


def test_oracle_refuses_large_pool(tmp_path, capsys):
    cfg = make_config()
    gen = PairGenerator(GeneratorConfig(), 3)
    pool = tmp_path / "pool.csv"
    write_pool(pool, [gen.draw_pair(cfg.registries[0], 0) for _ in range(15)])
    assert main(["oracle", str(pool)]) != 0
    assert "14" in capsys.readouterr().err


def test_errors_exit_nonzero(tmp_path, capsys):
    assert main(["solve", str(tmp_path / "missing.csv")]) == 2
    assert main(["run", "no_such_fixture"]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code != 0
    with pytest.raises(SystemExit):
        main(["run", "table2_symmetric", "--replications", "0"])


def test_run_is_byte_deterministic(tmp_path, small_config, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(small_config), "--output", str(a), "--workers", "1"]) == 0
    assert main(["run", str(small_config), "--output", str(b), "--workers", "2"]) == 0
    for name in ("summary.json", "comparison.csv", "blood_groups.csv", "timeseries.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    out = capsys.readouterr().out
    assert "Transplants and optimal score" in out


def test_run_flag_overrides(tmp_path, small_config):
    out = tmp_path / "o"
    assert main(["run", str(small_config), "--output", str(out), "--seed", "99", "--replications", "1",
                 "--format", "json"]) == 0
    assert [p.name for p in out.iterdir()] == ["summary.json"]
    doc = json.loads((out / "summary.json").read_text())
    assert doc["experiments"][0]["seeds"] == [99]


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "mkep", "validate", "table4_mixed"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "ok: table4_mixed" in proc.stdout
