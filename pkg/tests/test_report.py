import csv
import dataclasses
import json

import pytest

from mkep.config import config_from_dict
from mkep.report import (
    LOSS_MARKER,
    ReportError,
    blood_group_row,
    comparison_row,
    emit_report,
    fmt,
    pair_cell,
    render_text,
)
from mkep.simulator import run_experiment

from conftest import config_dict, make_config


@pytest.fixture(scope="module")
def summary():
    return run_experiment(make_config(rounds=3, replications=3))


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_fmt_and_cells():
    assert fmt(39.45) in ("39.5", "39.4")
    assert fmt(-0.04) == "0.0"
    assert pair_cell(39.5, 36.3) == "39.5/36.3"
    assert pair_cell(36.0, 36.3) == f"36.0{LOSS_MARKER}/36.3"


def test_files_written(tmp_path, summary):
    paths = emit_report([summary], tmp_path, ("csv", "json"))
    assert sorted(p.name for p in paths) == ["blood_groups.csv", "comparison.csv", "summary.json", "timeseries.csv"]
    only_json = emit_report([summary], tmp_path / "j", ("json",))
    assert [p.name for p in only_json] == ["summary.json"]


def test_tables_match_machine_readable(tmp_path, summary):
    emit_report([summary], tmp_path)
    doc = json.loads((tmp_path / "summary.json").read_text())
    (exp,) = doc["experiments"]
    (comp,) = read_csv(tmp_path / "comparison.csv")
    (bg,) = read_csv(tmp_path / "blood_groups.csv")
    assert comp == exp["tables"]["comparison"]
    assert bg == exp["tables"]["blood_groups"]
    # every table cell is recoverable from the full-precision means
    for k in ("1", "2"):
        m, i = exp["means"]["merged"][k], exp["means"]["individual"][k]
        assert comp[f"R{k} transplants"] == pair_cell(m["transplants"], i["transplants"])
        assert comp[f"R{k} score"] == pair_cell(m["score"], i["score"])
        for g in ("O", "A", "B", "AB"):
            assert bg[f"R{k} {g}"] == pair_cell(m[f"matched_{g}"], i[f"matched_{g}"])
    assert comp["gain transplants"] == fmt(exp["relative_gain"]["transplants"])
    assert comp["gain score"] == fmt(exp["relative_gain"]["score"])


def test_timeseries_matches_summary(tmp_path, summary):
    emit_report([summary], tmp_path)
    rows = read_csv(tmp_path / "timeseries.csv")
    doc = json.loads((tmp_path / "summary.json").read_text())
    series = doc["experiments"][0]["series"]
    assert len(rows) == 3 * 2 * 2
    for row in rows:
        values = series[row["world"]][row["registry"]]
        r = int(row["round"]) - 1
        for metric in ("transplants", "score", "dropouts", "pool_size", "cum_transplants"):
            assert float(row[metric]) == values[metric][r]


def test_empty_experiment_reports_zeros(tmp_path):
    data = config_dict(dp=0.0, rounds=2, replications=2)
    for reg in data["registries"]:
        reg["blood_groups"] = {"donor": [0, 0, 0, 1], "recipient": [1, 0, 0, 0]}
    s = run_experiment(config_from_dict(data))
    row = comparison_row(s)
    assert row["R1 transplants"] == "0.0/0.0" and row["R2 score"] == "0.0/0.0"
    assert (row["gain transplants"], row["gain score"]) == ("0.0", "0.0")


def test_loss_marker_in_rows(summary):
    means = {w: {k: dict(v) for k, v in regs.items()} for w, regs in summary.means.items()}
    means["merged"][0]["transplants"] = means["individual"][0]["transplants"] - 1
    means["merged"][1]["matched_O"] = means["individual"][1]["matched_O"] + 1
    tweaked = dataclasses.replace(summary, means=means)
    assert LOSS_MARKER in comparison_row(tweaked)["R1 transplants"]
    assert LOSS_MARKER not in blood_group_row(tweaked)["R2 O"]


def test_render_text(summary):
    text = render_text([comparison_row(summary)], "title")
    assert text.startswith("title\n") and "R1 transplants" in text
    assert render_text([], "t") == "t\n(empty)\n"


def test_unwritable_directory(tmp_path, summary):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(ReportError):
        emit_report([summary], blocker / "sub")
