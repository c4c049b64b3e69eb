"""Leaderboard tables and SVG figures.

Quartiles use linear interpolation between order statistics. DSC cells are
shown in percent with one decimal, ASSD cells in mm with two decimals.
SVG output is written with fixed number formatting so reruns are
byte-identical.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .ranking import Record, RankingOutcome

PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939",
)


def quartiles(values: Sequence[float]) -> tuple[float, float, float]:
    """(Q1, median, Q3) with linear interpolation."""
    q1, med, q3 = np.percentile(np.asarray(values, dtype=np.float64), [25, 50, 75])
    return float(q1), float(med), float(q3)


def format_cell(median: float, q1: float, q3: float, metric: str) -> str:
    if metric == "DSC":
        return f"{100 * median:.1f} [{100 * q1:.1f} - {100 * q3:.1f}]"
    return f"{median:.2f} [{q1:.2f} - {q3:.2f}]"


@dataclass
class LeaderboardRow:
    team: str
    global_rank: int
    rank_score: float
    # (structure, metric) -> (median, q1, q3)
    stats: dict[tuple[str, str], tuple[float, float, float]] = field(default_factory=dict)

    def cell(self, structure: str, metric: str) -> str:
        med, q1, q3 = self.stats[(structure, metric)]
        return format_cell(med, q1, q3, metric)


def _cells(records: Sequence[Record], ranked: bool) -> list[tuple[str, str]]:
    seen: dict[tuple[str, str], None] = {}
    for r in records:
        if r.ranked == ranked:
            seen.setdefault((r.structure, r.metric), None)
    return list(seen)


def build_leaderboard(
    records: Sequence[Record], ranking: RankingOutcome, ranked: bool = True
) -> tuple[list[tuple[str, str]], list[LeaderboardRow]]:
    cells = _cells(records, ranked)
    values: dict[tuple[str, str, str], list[float]] = defaultdict(list)
    for r in records:
        if r.ranked == ranked:
            values[(r.team, r.structure, r.metric)].append(r.value)
    rows = []
    for team in ranking.order:
        stats = {}
        for s, m in cells:
            vals = values.get((team, s, m))
            if vals:
                q1, med, q3 = quartiles(vals)
                stats[(s, m)] = (med, q1, q3)
        rows.append(LeaderboardRow(team, ranking.final_ranks[team], ranking.rank_scores[team], stats))
    return cells, rows


def _header(cell: tuple[str, str]) -> str:
    s, m = cell
    return f"{s} {m} ({'%' if m == 'DSC' else 'mm'})"


def write_leaderboard(
    cells: list[tuple[str, str]], rows: list[LeaderboardRow], csv_path: Path, txt_path: Path
) -> None:
    header = ["team", "global_rank", "rank_score", *(_header(c) for c in cells)]
    table = [
        [r.team, str(r.global_rank), f"{r.rank_score:.1f}",
         *(r.cell(*c) if c in r.stats else "" for c in cells)]
        for r in rows
    ]
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(table)
    widths = [max(len(h), *(len(row[i]) for row in table)) if table else len(h) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(wd) for h, wd in zip(header, widths)).rstrip()]
    lines.append("  ".join("-" * wd for wd in widths))
    for row in table:
        lines.append("  ".join(v.ljust(wd) for v, wd in zip(row, widths)).rstrip())
    txt_path.write_text("\n".join(lines) + "\n")


def write_stats_csv(rows: list[LeaderboardRow], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["team", "structure", "metric", "median", "q1", "q3"])
        for r in rows:
            for (s, m), (med, q1, q3) in r.stats.items():
                w.writerow([r.team, s, m, repr(med), repr(q1), repr(q3)])


# ---------------------------------------------------------------------------
# SVG


def _f(x: float) -> str:
    return f"{x:.2f}"


class _Svg:
    def __init__(self, width: int, height: int, title: str):
        self.width, self.height = width, height
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
            f'<rect width="{width}" height="{height}" fill="white"/>',
            f'<text x="{_f(width / 2)}" y="16" text-anchor="middle" font-size="13">{escape(title)}</text>',
        ]

    def line(self, x1, y1, x2, y2, stroke="black", width=1.0, dash: str | None = None) -> None:
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<line x1="{_f(x1)}" y1="{_f(y1)}" x2="{_f(x2)}" y2="{_f(y2)}" '
            f'stroke="{stroke}" stroke-width="{_f(width)}"{d}/>'
        )

    def rect(self, x, y, w, h, fill, stroke="black", opacity=1.0) -> None:
        self.parts.append(
            f'<rect x="{_f(x)}" y="{_f(y)}" width="{_f(w)}" height="{_f(h)}" fill="{fill}" '
            f'fill-opacity="{_f(opacity)}" stroke="{stroke}"/>'
        )

    def circle(self, cx, cy, r, fill, stroke="none", opacity=1.0) -> None:
        self.parts.append(
            f'<circle cx="{_f(cx)}" cy="{_f(cy)}" r="{_f(r)}" fill="{fill}" '
            f'fill-opacity="{_f(opacity)}" stroke="{stroke}"/>'
        )

    def polyline(self, pts, stroke, width=1.5) -> None:
        p = " ".join(f"{_f(x)},{_f(y)}" for x, y in pts)
        self.parts.append(f'<polyline points="{p}" fill="none" stroke="{stroke}" stroke-width="{_f(width)}"/>')

    def text(self, x, y, s, anchor="middle", rotate: float | None = None) -> None:
        t = f' transform="rotate({_f(rotate)} {_f(x)} {_f(y)})"' if rotate is not None else ""
        self.parts.append(f'<text x="{_f(x)}" y="{_f(y)}" text-anchor="{anchor}"{t}>{escape(str(s))}</text>')

    def save(self, path: Path) -> None:
        path.write_text("\n".join([*self.parts, "</svg>"]) + "\n")


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def box_plot_svg(
    data: dict[str, Sequence[float]], teams: Sequence[str], title: str, ylabel: str, path: Path
) -> None:
    """Tukey box plot per team: box Q1-Q3, whiskers to 1.5 IQR, outliers as dots."""
    left, right, top, bottom = 60, 20, 30, 90
    step = 50
    width = left + right + step * max(1, len(teams))
    height = 320
    svg = _Svg(width, height, title)
    all_vals = np.concatenate([np.asarray(data[t], float) for t in teams]) if teams else np.zeros(1)
    lo, hi = float(all_vals.min()), float(all_vals.max())
    pad = 0.05 * (hi - lo) if hi > lo else 0.5
    lo, hi = lo - pad, hi + pad
    plot_h = height - top - bottom

    def y(v: float) -> float:
        return top + plot_h * (1.0 - (v - lo) / (hi - lo))

    svg.line(left, top, left, top + plot_h)
    svg.line(left, top + plot_h, width - right, top + plot_h)
    for tv in _nice_ticks(lo, hi):
        svg.line(left - 4, y(tv), left, y(tv))
        svg.text(left - 6, y(tv) + 4, f"{tv:.2f}", anchor="end")
    svg.text(14, top + plot_h / 2, ylabel, rotate=-90)

    for i, team in enumerate(teams):
        vals = np.sort(np.asarray(data[team], float))
        q1, med, q3 = quartiles(vals)
        iqr = q3 - q1
        inside = vals[(vals >= q1 - 1.5 * iqr) & (vals <= q3 + 1.5 * iqr)]
        w_lo, w_hi = float(inside.min()), float(inside.max())
        cx = left + step * (i + 0.5)
        color = PALETTE[i % len(PALETTE)]
        svg.line(cx, y(w_lo), cx, y(q1))
        svg.line(cx, y(q3), cx, y(w_hi))
        svg.line(cx - 8, y(w_lo), cx + 8, y(w_lo))
        svg.line(cx - 8, y(w_hi), cx + 8, y(w_hi))
        svg.rect(cx - 15, y(q3), 30, max(y(q1) - y(q3), 0.5), fill=color, opacity=0.6)
        svg.line(cx - 15, y(med), cx + 15, y(med), width=2.0)
        for v in vals[(vals < w_lo) | (vals > w_hi)]:
            svg.circle(cx, y(float(v)), 2.0, fill="none", stroke=color)
        svg.text(cx, top + plot_h + 12, team, anchor="end", rotate=-45)
    svg.save(path)


def blob_plot_svg(
    samples: Sequence[tuple[str, int, int]], teams: Sequence[str], title: str, path: Path
) -> None:
    """Rank frequency per team over bootstrap samples.

    ``samples`` holds (team, rank, reference_rank) rows. Blob area is
    proportional to how often a team received a rank; the cross marks the
    full-data rank.
    """
    n_teams = len(teams)
    counts: dict[tuple[str, int], int] = defaultdict(int)
    per_team: dict[str, int] = defaultdict(int)
    reference: dict[str, int] = {}
    for team, rank, ref in samples:
        counts[(team, rank)] += 1
        per_team[team] += 1
        reference[team] = ref
    left, right, top, bottom = 50, 20, 30, 90
    step = 50
    width = left + right + step * max(1, n_teams)
    row_h = 24
    height = top + bottom + row_h * max(1, n_teams)
    svg = _Svg(width, height, title)
    plot_h = row_h * n_teams

    def y(rank: int) -> float:
        return top + row_h * (rank - 0.5)

    svg.line(left, top, left, top + plot_h)
    svg.line(left, top + plot_h, width - right, top + plot_h)
    for r in range(1, n_teams + 1):
        svg.text(left - 6, y(r) + 4, r, anchor="end")
    svg.text(14, top + plot_h / 2, "rank", rotate=-90)
    for i, team in enumerate(teams):
        cx = left + step * (i + 0.5)
        color = PALETTE[i % len(PALETTE)]
        total = per_team.get(team, 0)
        for r in range(1, n_teams + 1):
            c = counts.get((team, r), 0)
            if c and total:
                svg.circle(cx, y(r), 10.0 * float(np.sqrt(c / total)), fill=color, opacity=0.7)
        if team in reference:
            ry = y(reference[team])
            svg.line(cx - 5, ry - 5, cx + 5, ry + 5, width=1.5)
            svg.line(cx - 5, ry + 5, cx + 5, ry - 5, width=1.5)
        svg.text(cx, top + plot_h + 12, team, anchor="end", rotate=-45)
    svg.save(path)


def line_plot_svg(ranks: dict[str, dict[str, int]], teams: Sequence[str], title: str, path: Path) -> None:
    """One line per team across ranking schemes; height is the rank."""
    schemes = list(ranks)
    n_teams = len(teams)
    left, right, top, bottom = 50, 140, 30, 110
    step = 120
    width = left + right + step * max(1, len(schemes) - 1)
    row_h = 24
    height = top + bottom + row_h * max(1, n_teams)
    svg = _Svg(width, height, title)

    def x(i: int) -> float:
        return left + step * i

    def y(rank: int) -> float:
        return top + row_h * (rank - 0.5)

    for r in range(1, n_teams + 1):
        svg.line(left, y(r), x(len(schemes) - 1), y(r), stroke="#dddddd", dash="2,2")
        svg.text(left - 8, y(r) + 4, r, anchor="end")
    for i, s in enumerate(schemes):
        svg.line(x(i), top, x(i), top + row_h * n_teams, stroke="#999999")
        svg.text(x(i), top + row_h * n_teams + 12, s, anchor="end", rotate=-35)
    for j, team in enumerate(teams):
        color = PALETTE[j % len(PALETTE)]
        pts = [(x(i), y(ranks[s][team])) for i, s in enumerate(schemes)]
        svg.polyline(pts, stroke=color)
        for px, py in pts:
            svg.circle(px, py, 3.0, fill=color)
        svg.text(pts[-1][0] + 8, pts[-1][1] + 4, team, anchor="start")
    svg.save(path)


def _slug(text: str) -> str:
    return "".join(ch if ch.isalnum() else "_" for ch in text)


def write_report(
    records: Sequence[Record],
    ranking: RankingOutcome,
    out_dir: str | Path,
    samples: dict[str, list[tuple[str, int, int]]] | None = None,
    comparison: dict[str, dict[str, int]] | None = None,
) -> list[Path]:
    """Write leaderboard tables and figures; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    cells, rows = build_leaderboard(records, ranking, ranked=True)
    write_leaderboard(cells, rows, out / "leaderboard.csv", out / "leaderboard.txt")
    write_stats_csv(rows, out / "leaderboard_stats.csv")
    written += [out / "leaderboard.csv", out / "leaderboard.txt", out / "leaderboard_stats.csv"]

    aux_cells, aux_rows = build_leaderboard(records, ranking, ranked=False)
    if aux_cells:
        write_leaderboard(aux_cells, aux_rows, out / "auxiliary.csv", out / "auxiliary.txt")
        written += [out / "auxiliary.csv", out / "auxiliary.txt"]

    teams = ranking.order
    by_cell: dict[tuple[str, str], dict[str, list[float]]] = defaultdict(lambda: defaultdict(list))
    for r in records:
        by_cell[(r.structure, r.metric)][r.team].append(r.value)
    for (s, m), data in by_cell.items():
        present = [t for t in teams if t in data]
        p = out / f"box_{_slug(s)}_{m}.svg"
        scale = 100.0 if m == "DSC" else 1.0
        scaled = {t: [v * scale for v in data[t]] for t in present}
        box_plot_svg(scaled, present, f"{s} {m}", "DSC (%)" if m == "DSC" else "ASSD (mm)", p)
        written.append(p)

    if samples:
        for label, rows_ in samples.items():
            p = out / f"blob_{_slug(label)}.svg"
            blob_plot_svg(rows_, teams, f"bootstrap ranks ({label})", p)
            written.append(p)
    if comparison:
        p = out / "schemes_lines.svg"
        line_plot_svg(comparison, teams, "ranking schemes", p)
        written.append(p)
    return written


def read_samples_csv(path: str | Path) -> dict[str, list[tuple[str, int, int]]]:
    out: dict[str, list[tuple[str, int, int]]] = defaultdict(list)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out[row["subset"]].append((row["team"], int(row["rank"]), int(row["reference_rank"])))
    return dict(out)
