"""Command-line entry point: ``challenge-eval <subcommand> ...``.

Exit codes: 0 success, 1 validation failure, 2 input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .manifest import ManifestError, load_manifest
from .ordinal import KOOS_GRADES, confusion_matrix, ma_mae, pair_grades, read_grades_csv
from .pipeline import evaluate_challenge, validate_submission
from .ranking import OFFICIAL_SCHEME, SCHEMES, IncompleteTableError, RankingOutcome, ResultsTable, rank_koos, rank_teams
from .report import read_samples_csv, write_report
from .seg_metrics import EmptyReferenceError, OverlapError
from .stability import SchemeComparison, compare_schemes, metric_subset_stability
from .synth import SynthSpec, dilation_ladder, generate_challenge
from .volume import GridMismatchError, NiftiError, SchemeError

EXIT_OK, EXIT_INVALID, EXIT_INPUT = 0, 1, 2

log = logging.getLogger("challenge_eval")

INPUT_ERRORS = (
    OSError, ValueError, KeyError, ManifestError, NiftiError, GridMismatchError,
    SchemeError, IncompleteTableError, EmptyReferenceError, OverlapError,
)


def _directions(args) -> dict[str, str] | None:
    if getattr(args, "manifest", None):
        return load_manifest(args.manifest).directions
    return None


def _dump(data, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2) + "\n")


def cmd_validate(args) -> int:
    manifest = load_manifest(args.manifest)
    dirs = [Path(d) for d in args.submission] or [manifest.submission_dir(t) for t in manifest.teams]
    reports = [validate_submission(d, manifest) for d in dirs]
    for rep in reports:
        status = "valid" if rep.valid else f"INVALID ({len(rep.issues)} issues)"
        print(f"{rep.submission_dir}: {status}")
        for issue in rep.issues:
            print(f"  {issue}")
    if args.out:
        _dump([r.to_dict() for r in reports], Path(args.out))
    return EXIT_OK if all(r.valid for r in reports) else EXIT_INVALID


def cmd_evaluate(args) -> int:
    manifest = load_manifest(args.manifest)
    invalid = [r for r in (validate_submission(manifest.submission_dir(t), manifest) for t in manifest.teams)
               if not r.valid]
    if invalid:
        for rep in invalid:
            print(f"{rep.submission_dir}: incomplete submission, not evaluated", file=sys.stderr)
            for issue in rep.issues:
                print(f"  {issue}", file=sys.stderr)
        return EXIT_INVALID
    table = evaluate_challenge(manifest, n_jobs=args.jobs)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(out)
    n_pen = sum(r.penalized for r in table.records)
    print(f"wrote {len(table.records)} rows to {out} ({n_pen} penalized)")
    return EXIT_OK


def cmd_rank(args) -> int:
    table = ResultsTable.from_csv(args.results, _directions(args))
    outcome = rank_teams(table, args.scheme)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    outcome.save_json(out)
    outcome.save_csv(out.with_suffix(".csv"))
    for team in outcome.order:
        print(f"{outcome.final_ranks[team]:>3}  {outcome.rank_scores[team]:.3f}  {team}")
    return EXIT_OK


def _subsets(args, table: ResultsTable) -> list[list[str]]:
    if not args.metrics:
        return [table.metrics]
    return [[m.strip() for m in spec.split(",") if m.strip()] for spec in args.metrics]


def cmd_stability(args) -> int:
    table = ResultsTable.from_csv(args.results, _directions(args))
    summaries = metric_subset_stability(
        table, args.scheme, _subsets(args, table), n_samples=args.samples, seed=args.seed, n_jobs=args.jobs
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _dump({"scheme": args.scheme, "summaries": {k: s.to_dict() for k, s in summaries.items()}},
          out / "stability.json")
    for i, (label, s) in enumerate(summaries.items()):
        s.write_samples_csv(out / "samples.csv", label=label, append=i > 0)
        lo, hi = s.tau_iqr
        print(f"{label}: median tau {s.tau_median:.3f} IQR [{lo:.3f}; {hi:.3f}], "
              f"distinct cases {100 * s.distinct_fraction_mean:.1f}%")
    return EXIT_OK


def cmd_compare_schemes(args) -> int:
    table = ResultsTable.from_csv(args.results, _directions(args))
    comp = compare_schemes(table)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    comp.save_json(out)
    comp.save_csv(out.with_suffix(".csv"))
    print("team," + ",".join(comp.ranks))
    for t in comp.teams:
        print(t + "," + ",".join(str(comp.ranks[s][t]) for s in comp.ranks))
    return EXIT_OK


def cmd_koos(args) -> int:
    truth = read_grades_csv(args.truth)
    domain = tuple(int(g) for g in args.grades.split(",")) if args.grades else KOOS_GRADES
    scores, matrices = {}, {}
    for spec in args.predictions:
        name, _, path = spec.rpartition("=")
        name = name or Path(path).stem
        preds = pair_grades(truth, read_grades_csv(path), domain)
        scores[name] = ma_mae(preds, fixed_class_count=args.fixed_class_count)
        matrices[name] = confusion_matrix(preds, normalized=True).tolist()
    outcome = rank_koos(scores)
    for team in outcome.order:
        print(f"{outcome.final_ranks[team]:>3}  {scores[team]:.4f}  {team}")
    if args.out:
        _dump(
            {
                "fixed_class_count": args.fixed_class_count,
                "grade_domain": list(domain),
                "ranking": outcome.to_dict(),
                "confusion_normalized": {t: matrices[t] for t in outcome.order},
            },
            Path(args.out),
        )
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.config:
        spec = SynthSpec.from_dict(json.loads(Path(args.config).read_text()))
    else:
        severities = [float(s) for s in args.severities.split(",")]
        spec = SynthSpec(n_cases=args.cases, teams=dilation_ladder(severities), seed=args.seed, edition=args.edition)
    manifest = generate_challenge(spec, args.out)
    print(f"wrote {len(manifest.cases)} cases x {len(manifest.teams)} teams to {args.out}")
    return EXIT_OK


def cmd_report(args) -> int:
    table_records = ResultsTable.from_csv(args.results).records
    ranking = RankingOutcome.load_json(args.ranking)
    samples = read_samples_csv(args.samples) if args.samples else None
    comparison = SchemeComparison.load_json(args.comparison).ranks if args.comparison else None
    written = write_report(table_records, ranking, args.out, samples=samples, comparison=comparison)
    print((Path(args.out) / "leaderboard.txt").read_text(), end="")
    print(f"wrote {len(written)} files to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="challenge-eval", description="Segmentation challenge evaluation and ranking.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate", help="check submission completeness and grids")
    s.add_argument("submission", nargs="*", help="submission directories (default: every team's)")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", help="write the report as JSON")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("evaluate", help="compute all metric values into a long-form CSV")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("rank", help="rank teams from a results CSV")
    s.add_argument("results")
    s.add_argument("--scheme", choices=SCHEMES, default=OFFICIAL_SCHEME)
    s.add_argument("--manifest")
    s.add_argument("--out", required=True, help="JSON path; a CSV is written next to it")
    s.set_defaults(func=cmd_rank)

    s = sub.add_parser("stability", help="bootstrap ranking stability")
    s.add_argument("results")
    s.add_argument("--scheme", choices=SCHEMES, default=OFFICIAL_SCHEME)
    s.add_argument("--samples", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--metrics", action="append",
                   help="comma-separated metric subset; repeat for several subsets")
    s.add_argument("--manifest")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_stability)

    s = sub.add_parser("compare-schemes", help="final ranks under all four aggregation schemes")
    s.add_argument("results")
    s.add_argument("--manifest")
    s.add_argument("--out", required=True, help="JSON path; a CSV is written next to it")
    s.set_defaults(func=cmd_compare_schemes)

    s = sub.add_parser("koos", help="MA-MAE for ordinal grade predictions")
    s.add_argument("truth", help="CSV of case_id,grade")
    s.add_argument("predictions", nargs="+", help="CSV per team, optionally as name=path")
    s.add_argument("--fixed-class-count", action="store_true",
                   help="divide by the full grade domain size instead of the present classes")
    s.add_argument("--grades", help="comma-separated grade domain (default 1,2,3,4)")
    s.add_argument("--out")
    s.set_defaults(func=cmd_koos)

    s = sub.add_parser("synth", help="generate a synthetic challenge")
    s.add_argument("--config", help="JSON synth spec; overrides the flags below")
    s.add_argument("--cases", type=int, default=20)
    s.add_argument("--severities", default="0,1,2,3,4")
    s.add_argument("--edition", choices=("2022", "2023"), default="2023")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("report", help="leaderboard tables and SVG figures")
    s.add_argument("results")
    s.add_argument("ranking")
    s.add_argument("--samples", help="samples.csv from the stability command")
    s.add_argument("--comparison", help="JSON from compare-schemes")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
