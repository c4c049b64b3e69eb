import csv
import json
import shutil

import numpy as np
import pytest

from challenge_eval.cli import main
from challenge_eval.manifest import load_manifest
from challenge_eval.pipeline import evaluate_challenge
from challenge_eval.ranking import ResultsTable, rank_teams
from challenge_eval.volume import LabelVolume, read_label_volume, write_label_volume


@pytest.fixture(scope="module")
def challenge(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    cfg = {
        "n_cases": 4,
        "seed": 5,
        "teams": [
            {"id": "team_0", "severity": 0, "ops": [{"kind": "dilate", "amount": 1}]},
            {"id": "team_1", "severity": 1, "ops": [{"kind": "dilate", "amount": 1}]},
            {"id": "team_2", "severity": 2, "ops": [{"kind": "dilate", "amount": 1}]},
            {"id": "dropper", "severity": 1, "ops": [{"kind": "drop", "amount": 1}]},
        ],
    }
    (out / "cfg.json").write_text(json.dumps(cfg))
    assert main(["synth", "--config", str(out / "cfg.json"), "--out", str(out / "c")]) == 0
    assert main(["evaluate", "--manifest", str(out / "c" / "manifest.json"), "--out", str(out / "results.csv")]) == 0
    return out


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_validate_complete(challenge, capsys):
    m = challenge / "c" / "manifest.json"
    assert main(["validate", "--manifest", str(m)]) == 0
    assert "INVALID" not in capsys.readouterr().out


def test_validate_missing_case(challenge, tmp_path, capsys):
    m = load_manifest(challenge / "c" / "manifest.json")
    sub = tmp_path / "sub"
    shutil.copytree(m.submission_dir("team_1"), sub)
    (sub / m.prediction_filename("case_002")).unlink()
    code = main(["validate", str(sub), "--manifest", str(challenge / "c" / "manifest.json"),
                 "--out", str(tmp_path / "v.json")])
    assert code == 1
    report = json.loads((tmp_path / "v.json").read_text())[0]
    assert report["valid"] is False
    assert {"kind": "missing", "case": "case_002", "detail": ""} in report["issues"]
    assert "case_002" in capsys.readouterr().out


def test_validate_wrong_grid(challenge, tmp_path):
    m = load_manifest(challenge / "c" / "manifest.json")
    sub = tmp_path / "sub"
    shutil.copytree(m.submission_dir("team_1"), sub)
    name = m.prediction_filename("case_001")
    vol = read_label_volume(sub / name)
    write_label_volume(LabelVolume(vol.labels[:, :, :-1], vol.spacing), sub / name)
    code = main(["validate", str(sub), "--manifest", str(challenge / "c" / "manifest.json"),
                 "--out", str(tmp_path / "v.json")])
    assert code == 1
    kinds = {(i["kind"], i["case"]) for i in json.loads((tmp_path / "v.json").read_text())[0]["issues"]}
    assert kinds == {("grid-mismatch", "case_001")}


def test_unreadable_manifest_is_input_error(tmp_path):
    (tmp_path / "m.json").write_text("{not json")
    assert main(["validate", "--manifest", str(tmp_path / "m.json")]) == 2
    assert main(["validate", "--manifest", str(tmp_path / "nope.json")]) == 2


def test_evaluate_refuses_incomplete(challenge, tmp_path):
    shutil.copytree(challenge / "c", tmp_path / "c")
    m = load_manifest(tmp_path / "c" / "manifest.json")
    m.prediction_path("team_2", "case_000").unlink()
    assert main(["evaluate", "--manifest", str(tmp_path / "c" / "manifest.json"), "--out", str(tmp_path / "r.csv")]) == 1
    assert not (tmp_path / "r.csv").exists()


def test_evaluate_row_count(challenge):
    m = load_manifest(challenge / "c" / "manifest.json")
    rows = _rows(challenge / "results.csv")
    assert len(rows) == len(m.cases) * len(m.teams) * len(m.evaluation_cells())


def test_severity_zero_rows_are_perfect(challenge):
    rows = [r for r in _rows(challenge / "results.csv") if r["team"] == "team_0"]
    assert rows
    for r in rows:
        expect = 1.0 if r["metric"] == "DSC" else 0.0
        assert float(r["value"]) == expect, r


def test_dropped_structures_penalized(challenge):
    rows = [r for r in _rows(challenge / "results.csv") if r["team"] == "dropper" and r["metric"] == "ASSD"]
    assert rows
    for r in rows:
        assert float(r["value"]) == 350.0
        assert r["penalized"] == "1"


def test_rank_follows_dominance(challenge, tmp_path, capsys):
    m = load_manifest(challenge / "c" / "manifest.json")
    assert main(["rank", str(challenge / "results.csv"), "--out", str(tmp_path / "rank.json")]) == 0
    ranks = {t["team"]: t["final_rank"] for t in json.loads((tmp_path / "rank.json").read_text())["teams"]}
    for better, worse in m.dominance:
        assert ranks[better] < ranks[worse]
    assert (tmp_path / "rank.csv").exists()
    assert "team_0" in capsys.readouterr().out


def test_csv_reingest_matches_in_memory(challenge, tmp_path):
    m = load_manifest(challenge / "c" / "manifest.json")
    memory = rank_teams(evaluate_challenge(m))
    main(["rank", str(challenge / "results.csv"), "--out", str(tmp_path / "rank.json")])
    disk = json.loads((tmp_path / "rank.json").read_text())
    assert disk == json.loads(json.dumps(memory.to_dict()))
    table = ResultsTable.from_csv(challenge / "results.csv")
    assert np.array_equal(table.values, evaluate_challenge(m, n_jobs=3).values)


def test_stability_twice_identical(challenge, tmp_path):
    args = ["stability", str(challenge / "results.csv"), "--samples", "1000", "--seed", "7"]
    assert main([*args, "--out", str(tmp_path / "a")]) == 0
    assert main([*args, "--out", str(tmp_path / "b"), "--jobs", "2"]) == 0
    for name in ("stability.json", "samples.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_stability_metric_subsets(challenge, tmp_path):
    code = main(["stability", str(challenge / "results.csv"), "--samples", "20", "--metrics", "DSC",
                 "--metrics", "DSC,ASSD", "--out", str(tmp_path)])
    assert code == 0
    summaries = json.loads((tmp_path / "stability.json").read_text())["summaries"]
    assert list(summaries) == ["DSC", "DSC+ASSD"]


def test_compare_schemes(challenge, tmp_path):
    assert main(["compare-schemes", str(challenge / "results.csv"), "--out", str(tmp_path / "cmp.json")]) == 0
    data = json.loads((tmp_path / "cmp.json").read_text())
    assert len(data["schemes"]) == 4
    assert (tmp_path / "cmp.csv").exists()


def test_report(challenge, tmp_path, capsys):
    main(["rank", str(challenge / "results.csv"), "--out", str(tmp_path / "rank.json")])
    main(["stability", str(challenge / "results.csv"), "--samples", "30", "--out", str(tmp_path / "st")])
    main(["compare-schemes", str(challenge / "results.csv"), "--out", str(tmp_path / "cmp.json")])
    code = main(["report", str(challenge / "results.csv"), str(tmp_path / "rank.json"),
                 "--samples", str(tmp_path / "st" / "samples.csv"), "--comparison", str(tmp_path / "cmp.json"),
                 "--out", str(tmp_path / "rep")])
    assert code == 0
    assert (tmp_path / "rep" / "schemes_lines.svg").exists()
    assert (tmp_path / "rep" / "auxiliary.csv").exists()
    assert "100.0 [100.0 - 100.0]" in capsys.readouterr().out


def _grades(path, pairs):
    path.write_text("case_id,grade\n" + "".join(f"{c},{g}\n" for c, g in pairs))


def test_koos_worked_example(tmp_path, capsys):
    _grades(tmp_path / "truth.csv", [("a", 1), ("b", 2), ("c", 2), ("d", 4)])
    _grades(tmp_path / "p.csv", [("a", 1), ("b", 3), ("c", 2), ("d", 3)])
    _grades(tmp_path / "q.csv", [("a", 1), ("b", 2), ("c", 2), ("d", 4)])
    code = main(["koos", str(tmp_path / "truth.csv"), f"teamP={tmp_path / 'p.csv'}", f"teamQ={tmp_path / 'q.csv'}",
                 "--out", str(tmp_path / "k.json")])
    assert code == 0
    data = json.loads((tmp_path / "k.json").read_text())
    assert data["ranking"]["teams"] == [
        {"team": "teamQ", "rank_score": 0.0, "final_rank": 1},
        {"team": "teamP", "rank_score": 0.5, "final_rank": 2},
    ]
    assert "0.5000  teamP" in capsys.readouterr().out


def test_koos_missing_case_is_input_error(tmp_path):
    _grades(tmp_path / "truth.csv", [("a", 1), ("b", 2)])
    _grades(tmp_path / "p.csv", [("a", 1)])
    assert main(["koos", str(tmp_path / "truth.csv"), str(tmp_path / "p.csv")]) == 2
