"""Bootstrap ranking stability.

Random numbers come from numpy's PCG64 bit generator. Sample ``i`` of a run
seeded with ``seed`` draws from its own stream,
``SeedSequence(seed, spawn_key=(i,))``, so the result of a sample does not
depend on which worker computes it or in what order.
"""

from __future__ import annotations

import csv
import json
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ranking import OFFICIAL_SCHEME, SCHEMES, ResultsTable, _case_rank_sums, scheme_scores

UINT64_MASK = (1 << 64) - 1


def _as_aligned(r1, r2) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(r1, Mapping) or isinstance(r2, Mapping):
        if not (isinstance(r1, Mapping) and isinstance(r2, Mapping)):
            raise TypeError("compare two mappings or two sequences")
        if set(r1) != set(r2):
            raise ValueError("rankings cover different team sets")
        teams = sorted(r1)
        return np.array([r1[t] for t in teams], float), np.array([r2[t] for t in teams], float)
    a, b = np.asarray(r1, dtype=float), np.asarray(r2, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("rankings must be 1D and of equal length")
    return a, b


def kendall_tau(r1, r2) -> float:
    """Kendall's tau-b between two rankings (mappings team->rank or aligned sequences).

    When a ranking is constant the coefficient is undefined; two constant
    rankings return 1.0 and a single constant one returns 0.0.
    """
    a, b = _as_aligned(r1, r2)
    n = len(a)
    if n < 2:
        raise ValueError("Kendall's tau needs at least two teams")
    iu = np.triu_indices(n, k=1)
    da = np.sign(a[:, None] - a[None, :])[iu]
    db = np.sign(b[:, None] - b[None, :])[iu]
    s = float(np.sum(da * db))
    n0 = len(da)
    ties_a = int(np.sum(da == 0))
    ties_b = int(np.sum(db == 0))
    denom = float(np.sqrt(float(n0 - ties_a) * float(n0 - ties_b)))
    if denom == 0.0:
        return 1.0 if ties_a == n0 and ties_b == n0 else 0.0
    return max(-1.0, min(1.0, s / denom))


def sample_rng(seed: int, index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & UINT64_MASK, spawn_key=(int(index),))
    return np.random.Generator(np.random.PCG64(ss))


def draw_cases(seed: int, index: int, n_cases: int) -> np.ndarray:
    return sample_rng(seed, index).integers(0, n_cases, size=n_cases)


@dataclass
class BootstrapSummary:
    scheme: str
    metrics: list[str]
    n_samples: int
    seed: int
    teams: list[str]
    reference_ranks: list[int]
    taus: list[float]
    sample_ranks: np.ndarray = field(repr=False)  # (n_samples, teams)
    distinct_fractions: list[float] = field(repr=False)

    @property
    def tau_median(self) -> float:
        return float(np.median(self.taus))

    @property
    def tau_iqr(self) -> tuple[float, float]:
        q1, q3 = np.percentile(self.taus, [25, 75])
        return float(q1), float(q3)

    @property
    def distinct_fraction_mean(self) -> float:
        return float(np.mean(self.distinct_fractions))

    def rank1_fraction(self, team: str) -> float:
        t = self.teams.index(team)
        return float(np.mean(self.sample_ranks[:, t] == 1))

    def to_dict(self) -> dict:
        lo, hi = self.tau_iqr
        return {
            "scheme": self.scheme,
            "metrics": list(self.metrics),
            "n_samples": self.n_samples,
            "seed": self.seed,
            "tau_median": self.tau_median,
            "tau_iqr": [lo, hi],
            "distinct_fraction_mean": self.distinct_fraction_mean,
            "reference_ranking": dict(zip(self.teams, self.reference_ranks)),
            "rank1_fraction": {t: self.rank1_fraction(t) for t in self.teams},
            "taus": list(self.taus),
        }

    def write_samples_csv(self, path: str | Path, label: str | None = None, append: bool = False) -> None:
        """Per-sample rankings, one row per (sample, team): the blob-plot data."""
        label = label or "+".join(self.metrics)
        with open(path, "a" if append else "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if not append:
                w.writerow(["subset", "sample", "team", "rank", "reference_rank"])
            for i, row in enumerate(self.sample_ranks):
                for team, r, ref in zip(self.teams, row, self.reference_ranks):
                    w.writerow([label, i, team, int(r), ref])


def bootstrap_stability(
    table: ResultsTable,
    scheme: str = OFFICIAL_SCHEME,
    n_samples: int = 1000,
    seed: int = 0,
    n_jobs: int = 1,
) -> BootstrapSummary:
    """Re-rank on ``n_samples`` case resamples and compare each to the full ranking.

    Every sample draws N = #cases case indices with replacement; repeated
    cases count with their multiplicity.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    n_cases = len(table.cases)
    rank_sums = _case_rank_sums(table)
    _, reference = scheme_scores(table, scheme, _rank_sums=rank_sums)

    def run(indices: range) -> list[tuple[float, np.ndarray, float]]:
        out = []
        for i in indices:
            idx = draw_cases(seed, i, n_cases)
            _, ranks = scheme_scores(table, scheme, idx, _rank_sums=rank_sums)
            tau = kendall_tau(reference, ranks) if len(table.teams) > 1 else 1.0
            out.append((tau, ranks, len(np.unique(idx)) / n_cases))
        return out

    if n_jobs <= 1:
        results = run(range(n_samples))
    else:
        bounds = np.linspace(0, n_samples, n_jobs + 1).astype(int)
        chunks = [range(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:])]
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = [r for part in pool.map(run, chunks) for r in part]

    return BootstrapSummary(
        scheme=scheme,
        metrics=table.metrics,
        n_samples=n_samples,
        seed=seed,
        teams=list(table.teams),
        reference_ranks=[int(r) for r in reference],
        taus=[float(t) for t, _, _ in results],
        sample_ranks=np.array([r for _, r, _ in results], dtype=np.int64),
        distinct_fractions=[f for _, _, f in results],
    )


def metric_subset_stability(
    table: ResultsTable,
    scheme: str,
    subsets: Sequence[Sequence[str]],
    n_samples: int = 1000,
    seed: int = 0,
    n_jobs: int = 1,
) -> dict[str, BootstrapSummary]:
    """Bootstrap stability with only the given metrics contributing to ranks.

    All subsets share the same seed, hence the same case resamples.
    """
    out = {}
    for subset in subsets:
        if not subset:
            raise ValueError("metric subset is empty")
        sub = table.select_metrics(subset)
        out["+".join(subset)] = bootstrap_stability(sub, scheme, n_samples, seed, n_jobs)
    return out


@dataclass
class SchemeComparison:
    teams: list[str]
    ranks: dict[str, dict[str, int]]  # scheme -> team -> final rank

    def to_dict(self) -> dict:
        return {"teams": list(self.teams), "schemes": {s: dict(r) for s, r in self.ranks.items()}}

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def save_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["team", *self.ranks])
            for t in self.teams:
                w.writerow([t, *(self.ranks[s][t] for s in self.ranks)])

    @classmethod
    def load_json(cls, path: str | Path) -> SchemeComparison:
        data = json.loads(Path(path).read_text())
        return cls(data["teams"], {s: {t: int(v) for t, v in r.items()} for s, r in data["schemes"].items()})


def compare_schemes(table: ResultsTable) -> SchemeComparison:
    ranks = {}
    for scheme in SCHEMES:
        _, final = scheme_scores(table, scheme)
        ranks[scheme] = {t: int(r) for t, r in zip(table.teams, final)}
    return SchemeComparison(list(table.teams), ranks)
