import csv
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from challenge_eval.ranking import Record, ResultsTable, rank_teams
from challenge_eval.report import (
    blob_plot_svg,
    box_plot_svg,
    build_leaderboard,
    format_cell,
    line_plot_svg,
    quartiles,
    read_samples_csv,
    write_report,
)
from challenge_eval.stability import bootstrap_stability, compare_schemes
from challenge_eval.synth import synth_results_table


def test_format_dsc_cell():
    assert format_cell(0.861, 0.827, 0.897, "DSC") == "86.1 [82.7 - 89.7]"


def test_format_assd_cell():
    assert format_cell(0.4321, 0.3, 1.25, "ASSD") == "0.43 [0.30 - 1.25]"
    assert format_cell(350.0, 350.0, 350.0, "ASSD") == "350.00 [350.00 - 350.00]"


def test_quartiles_linear_interpolation():
    assert quartiles([1, 2, 3, 4]) == (1.75, 2.5, 3.25)
    assert quartiles([4, 1, 3, 2]) == (1.75, 2.5, 3.25)
    assert quartiles([7.0]) == (7.0, 7.0, 7.0)


def _table(n_cases=12, n_teams=4, seed=0):
    return synth_results_table(n_cases, n_teams, seed=seed, structures=("VS", "cochlea"),
                               dominant_leader=False, noise=0.05)


def test_leaderboard_rows_sorted_and_iqr_ordered():
    t = _table()
    out = rank_teams(t)
    cells, rows = build_leaderboard(t.records, out)
    assert cells == t.cells
    assert [r.global_rank for r in rows] == sorted(r.global_rank for r in rows)
    for r in rows:
        for med, q1, q3 in r.stats.values():
            assert q1 <= med <= q3


def test_single_team_leaderboard(tmp_path):
    recs = [Record(f"c{i}", "solo", "VS", m, v) for i in range(3) for m, v in (("DSC", 0.8), ("ASSD", 0.5))]
    out = rank_teams(ResultsTable(recs))
    write_report(recs, out, tmp_path)
    rows = list(csv.reader(open(tmp_path / "leaderboard.csv")))
    assert len(rows) == 2
    assert rows[1][:2] == ["solo", "1"]
    assert rows[1][3] == "80.0 [80.0 - 80.0]"


def test_auxiliary_metrics_reported_separately(tmp_path):
    recs = []
    for i in range(3):
        for team, v in (("A", 0.9), ("B", 0.7)):
            recs.append(Record(f"c{i}", team, "VS", "DSC", v))
            recs.append(Record(f"c{i}", team, "boundary", "ASSD", 1.0 + i, ranked=False))
    written = write_report(recs, rank_teams(ResultsTable(recs)), tmp_path)
    assert tmp_path / "auxiliary.csv" in written
    header = next(csv.reader(open(tmp_path / "leaderboard.csv")))
    assert not any("boundary" in h for h in header)
    aux = list(csv.reader(open(tmp_path / "auxiliary.csv")))
    assert aux[1][3] == "2.00 [1.50 - 2.50]"


def test_svgs_are_well_formed_and_deterministic(tmp_path):
    data = {"a": [1.0, 2.0, 3.0, 40.0], "b": [2.0, 2.0, 2.0, 2.0]}
    for name in ("x", "y"):
        box_plot_svg(data, ["a", "b"], "t & <t>", "mm", tmp_path / f"box_{name}.svg")
        blob_plot_svg([("a", 1, 1), ("b", 2, 2), ("a", 2, 1), ("b", 1, 2)], ["a", "b"], "blob",
                      tmp_path / f"blob_{name}.svg")
        line_plot_svg({"s1": {"a": 1, "b": 2}, "s2": {"a": 2, "b": 1}}, ["a", "b"], "lines",
                      tmp_path / f"line_{name}.svg")
    for kind in ("box", "blob", "line"):
        a = (tmp_path / f"{kind}_x.svg").read_bytes()
        assert a == (tmp_path / f"{kind}_y.svg").read_bytes()
        ET.fromstring(a)


def test_full_report_file_set(tmp_path):
    t = _table(20, 3, seed=4)
    out = rank_teams(t)
    s = bootstrap_stability(t, n_samples=50, seed=1)
    s.write_samples_csv(tmp_path / "samples.csv", label="DSC+ASSD")
    written = write_report(t.records, out, tmp_path / "r", samples=read_samples_csv(tmp_path / "samples.csv"),
                           comparison=compare_schemes(t).ranks)
    names = {p.name for p in written}
    assert {"leaderboard.csv", "leaderboard.txt", "blob_DSC_ASSD.svg", "schemes_lines.svg"} <= names
    assert sum(n.startswith("box_") for n in names) == len(t.cells)
    text = (tmp_path / "r" / "leaderboard.txt").read_text()
    assert text.splitlines()[0].startswith("team")


@pytest.mark.parametrize("vals", [[0.5], [0.1, 0.9], list(np.linspace(0, 1, 11))])
def test_quartiles_match_numpy(vals):
    assert quartiles(vals) == tuple(np.percentile(vals, [25, 50, 75]))
