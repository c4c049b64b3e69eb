"""Team rankings from per-case metric values.

The official scheme is rank-then-aggregate with the mean: teams are ranked
in every (case, structure, metric) cell, the ranks are averaged per case into
a cumulative rank, and the cumulative ranks are averaged over cases. Ties get
the lowest (best) rank of the tied block everywhere.

Rank-based scores are kept as integer rank sums internally so that ties are
detected exactly, independent of summation order.
"""

from __future__ import annotations

import csv
import json
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .manifest import HIGHER_BETTER, LOWER_BETTER, METRIC_DIRECTIONS

RANK_MEAN = "rank-then-aggregate-mean"
RANK_MEDIAN = "rank-then-aggregate-median"
AGG_MEAN = "aggregate-then-rank-mean"
AGG_MEDIAN = "aggregate-then-rank-median"
SCHEMES = (RANK_MEAN, RANK_MEDIAN, AGG_MEAN, AGG_MEDIAN)
OFFICIAL_SCHEME = RANK_MEAN

CSV_FIELDS = ("case_id", "team", "structure", "metric", "value", "ranked", "penalized", "degenerate")


class IncompleteTableError(ValueError):
    """A ranked (case, team, structure, metric) cell is missing."""


@dataclass(frozen=True)
class Record:
    case_id: str
    team: str
    structure: str
    metric: str
    value: float
    ranked: bool = True
    penalized: bool = False
    degenerate: bool = False


def _parse_bool(text: str) -> bool:
    return text.strip().lower() in ("1", "true", "yes")


class ResultsTable:
    """Complete grid of ranked metric values plus any auxiliary records.

    ``values`` has shape (cases, teams, cells) where cells enumerate the
    ranked (structure, metric) pairs in first-seen order.
    """

    def __init__(
        self,
        records: Iterable[Record],
        directions: dict[str, str] | None = None,
        cases: Sequence[str] | None = None,
        teams: Sequence[str] | None = None,
    ):
        self._records: list[Record] | None = list(records)
        self.directions = dict(METRIC_DIRECTIONS)
        if directions:
            self.directions.update(directions)

        ranked = [r for r in self._records if r.ranked]
        self.cases = list(cases) if cases is not None else _unique(r.case_id for r in ranked)
        self.teams = list(teams) if teams is not None else _unique(r.team for r in ranked)
        self.cells: list[tuple[str, str]] = _unique((r.structure, r.metric) for r in ranked)
        if not self.cases or not self.teams or not self.cells:
            raise IncompleteTableError("results table has no ranked entries")
        for _, metric in self.cells:
            if self.directions.get(metric) not in (HIGHER_BETTER, LOWER_BETTER):
                raise ValueError(f"no direction known for metric {metric!r}")

        ci = {c: i for i, c in enumerate(self.cases)}
        ti = {t: i for i, t in enumerate(self.teams)}
        ki = {k: i for i, k in enumerate(self.cells)}
        values = np.full((len(ci), len(ti), len(ki)), np.nan)
        for r in ranked:
            if r.case_id not in ci or r.team not in ti:
                raise ValueError(f"record for undeclared case/team ({r.case_id}, {r.team})")
            pos = (ci[r.case_id], ti[r.team], ki[(r.structure, r.metric)])
            if not np.isnan(values[pos]):
                raise ValueError(f"duplicate entry for {r.case_id}/{r.team}/{r.structure}/{r.metric}")
            if not math.isfinite(r.value):
                raise ValueError(f"non-finite value for {r.case_id}/{r.team}/{r.structure}/{r.metric}")
            values[pos] = r.value
        missing = np.argwhere(np.isnan(values))
        if len(missing):
            c, t, k = missing[0]
            raise IncompleteTableError(
                f"{len(missing)} missing cells, e.g. case={self.cases[c]} team={self.teams[t]} "
                f"structure={self.cells[k][0]} metric={self.cells[k][1]}"
            )
        values.setflags(write=False)
        self.values = values
        self._ranks: np.ndarray | None = None

    @classmethod
    def from_array(
        cls,
        values: np.ndarray,
        cases: Sequence[str],
        teams: Sequence[str],
        cells: Sequence[tuple[str, str]],
        directions: dict[str, str] | None = None,
    ) -> ResultsTable:
        """Build from a dense (cases, teams, cells) array; records are made on demand."""
        values = np.array(values, dtype=np.float64)
        if values.shape != (len(cases), len(teams), len(cells)):
            raise ValueError(f"values shape {values.shape} does not match labels")
        if not np.all(np.isfinite(values)):
            raise IncompleteTableError("values must be finite and complete")
        self = cls.__new__(cls)
        self._records = None
        self.directions = dict(METRIC_DIRECTIONS)
        if directions:
            self.directions.update(directions)
        self.cases, self.teams, self.cells = list(cases), list(teams), [tuple(c) for c in cells]
        for _, metric in self.cells:
            if self.directions.get(metric) not in (HIGHER_BETTER, LOWER_BETTER):
                raise ValueError(f"no direction known for metric {metric!r}")
        values.setflags(write=False)
        self.values = values
        self._ranks = None
        return self

    # ------------------------------------------------------------------

    @property
    def records(self) -> list[Record]:
        if self._records is None:
            self._records = [
                Record(case, team, s, m, float(self.values[ci, ti, ki]))
                for ci, case in enumerate(self.cases)
                for ti, team in enumerate(self.teams)
                for ki, (s, m) in enumerate(self.cells)
            ]
        return self._records

    @property
    def higher_better(self) -> np.ndarray:
        return np.array([self.directions[m] == HIGHER_BETTER for _, m in self.cells])

    @property
    def metrics(self) -> list[str]:
        return _unique(m for _, m in self.cells)

    @property
    def cell_ranks(self) -> np.ndarray:
        """Min-rank of every team in every (case, cell); shape (cases, teams, cells)."""
        if self._ranks is None:
            oriented = np.where(self.higher_better, self.values, -self.values)
            ranks = min_rank(np.moveaxis(oriented, 1, -1), higher_better=True)
            self._ranks = np.moveaxis(ranks, -1, 1)
            self._ranks.setflags(write=False)
        return self._ranks

    def select_metrics(self, metrics: Iterable[str]) -> ResultsTable:
        keep = set(metrics)
        if not keep:
            raise ValueError("metric subset is empty")
        unknown = keep - set(self.metrics)
        if unknown:
            raise ValueError(f"metrics {sorted(unknown)} not in table")
        if self._records is None:
            idx = [k for k, (_, m) in enumerate(self.cells) if m in keep]
            return ResultsTable.from_array(
                self.values[:, :, idx], self.cases, self.teams, [self.cells[k] for k in idx], self.directions
            )
        recs = [r for r in self.records if not r.ranked or r.metric in keep]
        return ResultsTable(recs, self.directions, self.cases, self.teams)

    def select_teams(self, teams: Iterable[str]) -> ResultsTable:
        wanted = set(teams)
        keep = [t for t in self.teams if t in wanted]
        recs = [r for r in self.records if r.team in keep]
        return ResultsTable(recs, self.directions, self.cases, keep)

    # -- io ------------------------------------------------------------

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_FIELDS)
            for r in self.records:
                w.writerow(
                    [r.case_id, r.team, r.structure, r.metric, repr(float(r.value)),
                     int(r.ranked), int(r.penalized), int(r.degenerate)]
                )

    @classmethod
    def from_csv(cls, path: str | Path, directions: dict[str, str] | None = None) -> ResultsTable:
        return cls(read_records(path), directions)


def read_records(path: str | Path) -> list[Record]:
    """Long-form CSV; only case_id, team, structure, metric and value are required."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"case_id", "team", "structure", "metric", "value"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise ValueError(f"{path}: CSV must have columns {sorted(required)}")
        for row in reader:
            out.append(
                Record(
                    case_id=row["case_id"],
                    team=row["team"],
                    structure=row["structure"],
                    metric=row["metric"],
                    value=float(row["value"]),
                    ranked=_parse_bool(row.get("ranked") or "1"),
                    penalized=_parse_bool(row.get("penalized") or "0"),
                    degenerate=_parse_bool(row.get("degenerate") or "0"),
                )
            )
    return out


def _unique(items: Iterable) -> list:
    seen: dict = {}
    for x in items:
        seen.setdefault(x, None)
    return list(seen)


def min_rank(scores: np.ndarray, higher_better: bool = True) -> np.ndarray:
    """Rank along the last axis: 1 + number of strictly better entries."""
    s = np.asarray(scores)
    if higher_better:
        better = s[..., None, :] > s[..., :, None]
    else:
        better = s[..., None, :] < s[..., :, None]
    return 1 + better.sum(axis=-1)


# ---------------------------------------------------------------------------


@dataclass
class RankingOutcome:
    scheme: str
    rank_scores: dict[str, float]
    final_ranks: dict[str, int]
    per_case_cumulative: dict[str, dict[str, float]] | None = field(default=None, repr=False)

    @property
    def order(self) -> list[str]:
        """Teams by final rank, ties broken by team id for display only."""
        return sorted(self.final_ranks, key=lambda t: (self.final_ranks[t], t))

    def ranks_for(self, teams: Sequence[str]) -> list[int]:
        return [self.final_ranks[t] for t in teams]

    def to_dict(self) -> dict:
        out: dict = {
            "scheme": self.scheme,
            "teams": [
                {"team": t, "rank_score": self.rank_scores[t], "final_rank": self.final_ranks[t]}
                for t in self.order
            ],
        }
        if self.per_case_cumulative is not None:
            out["per_case_cumulative"] = {t: self.per_case_cumulative[t] for t in self.order}
        return out

    @classmethod
    def from_dict(cls, data: dict) -> RankingOutcome:
        return cls(
            scheme=data["scheme"],
            rank_scores={d["team"]: float(d["rank_score"]) for d in data["teams"]},
            final_ranks={d["team"]: int(d["final_rank"]) for d in data["teams"]},
            per_case_cumulative=data.get("per_case_cumulative"),
        )

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def save_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["team", "rank_score", "final_rank"])
            for t in self.order:
                w.writerow([t, repr(self.rank_scores[t]), self.final_ranks[t]])

    @classmethod
    def load_json(cls, path: str | Path) -> RankingOutcome:
        return cls.from_dict(json.loads(Path(path).read_text()))


def per_cell_ranks(table: ResultsTable, case: str, structure: str, metric: str) -> dict[str, int]:
    try:
        c = table.cases.index(case)
        k = table.cells.index((structure, metric))
    except ValueError:
        raise IncompleteTableError(f"no cell for case={case} structure={structure} metric={metric}") from None
    return {t: int(r) for t, r in zip(table.teams, table.cell_ranks[c, :, k])}


def cumulative_rank(table: ResultsTable, team: str, case: str) -> float:
    try:
        c = table.cases.index(case)
        t = table.teams.index(team)
    except ValueError:
        raise IncompleteTableError(f"no entries for team={team} case={case}") from None
    return float(table.cell_ranks[c, t, :].mean())


def _case_rank_sums(table: ResultsTable) -> np.ndarray:
    """Sum of cell ranks per (team, case); the cumulative rank times #cells."""
    return table.cell_ranks.sum(axis=2).T


def scheme_scores(
    table: ResultsTable,
    scheme: str,
    case_idx: np.ndarray | None = None,
    _rank_sums: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """(rank_scores, final_ranks) per team, over the case multiset ``case_idx``."""
    if case_idx is None:
        case_idx = np.arange(len(table.cases))
    n_cells = len(table.cells)

    if scheme in (RANK_MEAN, RANK_MEDIAN):
        sums = _case_rank_sums(table) if _rank_sums is None else _rank_sums
        picked = sums[:, case_idx]
        if scheme == RANK_MEAN:
            key = picked.sum(axis=1)  # exact integers
            scores = key / (len(case_idx) * n_cells)
        else:
            key = np.median(picked, axis=1)  # integer or half-integer, exact
            scores = key / n_cells
        return scores, min_rank(key, higher_better=False)

    if scheme in (AGG_MEAN, AGG_MEDIAN):
        # sorting first makes the float aggregate independent of case order
        vals = np.sort(table.values[case_idx], axis=0)
        agg = vals.mean(axis=0) if scheme == AGG_MEAN else np.median(vals, axis=0)
        oriented = np.where(table.higher_better, agg, -agg)  # (teams, cells)
        ranks = min_rank(oriented.T, higher_better=True)  # (cells, teams)
        key = ranks.sum(axis=0)
        return key / n_cells, min_rank(key, higher_better=False)

    raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


def rank_teams(table: ResultsTable, scheme: str = OFFICIAL_SCHEME) -> RankingOutcome:
    scores, ranks = scheme_scores(table, scheme)
    per_case = None
    if scheme in (RANK_MEAN, RANK_MEDIAN):
        cum = table.cell_ranks.mean(axis=2)
        per_case = {
            t: {c: float(cum[ci, ti]) for ci, c in enumerate(table.cases)}
            for ti, t in enumerate(table.teams)
        }
    return RankingOutcome(
        scheme=scheme,
        rank_scores={t: float(s) for t, s in zip(table.teams, scores)},
        final_ranks={t: int(r) for t, r in zip(table.teams, ranks)},
        per_case_cumulative=per_case,
    )


def rank_koos(scores: dict[str, float]) -> RankingOutcome:
    """Rank teams by ascending MA-MAE."""
    if not scores:
        raise ValueError("no scores to rank")
    teams = list(scores)
    vals = np.array([scores[t] for t in teams], dtype=np.float64)
    ranks = min_rank(vals, higher_better=False)
    return RankingOutcome(
        scheme="ma-mae",
        rank_scores={t: float(v) for t, v in zip(teams, vals)},
        final_ranks={t: int(r) for t, r in zip(teams, ranks)},
    )
