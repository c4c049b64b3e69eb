"""Challenge manifest: cases, teams, structures, metrics and file layout.

The manifest is stored as JSON::

    {
      "name": "crossmoda2023-synthetic",
      "scheme_id": "crossmoda2023",
      "cases": ["case_000", ...],
      "teams": ["team_a", ...],
      "structures": [
        {"name": "intra", "kind": "direct", "labels": [1]},
        {"name": "VS", "kind": "union", "operands": ["intra", "extra"], "ranked": false},
        {"name": "boundary", "kind": "interface", "operands": ["intra", "extra"],
         "ranked": false, "metrics": ["ASSD"]}
      ],
      "metrics": [{"name": "DSC", "direction": "higher-better"},
                  {"name": "ASSD", "direction": "lower-better"}],
      "penalty_mm": 350.0,
      "ground_truth": "gt/{case}.nii.gz",
      "predictions_dir": "pred/{team}",
      "prediction_file": "{case}.nii.gz",
      "dominance": [["team_a", "team_b"]]
    }

Relative paths are resolved against the manifest's own directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

HIGHER_BETTER = "higher-better"
LOWER_BETTER = "lower-better"

# Fixed directions; a manifest may not flip them.
METRIC_DIRECTIONS = {"DSC": HIGHER_BETTER, "ASSD": LOWER_BETTER}

STRUCTURE_KINDS = ("direct", "union", "interface")

DEFAULT_PENALTY_MM = 350.0


class ManifestError(ValueError):
    """Raised for malformed or inconsistent manifests."""


@dataclass(frozen=True)
class Structure:
    name: str
    kind: str
    labels: tuple[int, ...] = ()
    operands: tuple[str, ...] = ()
    ranked: bool = True
    # None means every manifest metric applies (interfaces default to ASSD only)
    metrics: tuple[str, ...] | None = None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"name": self.name, "kind": self.kind}
        if self.kind == "direct":
            out["labels"] = list(self.labels)
        else:
            out["operands"] = list(self.operands)
        out["ranked"] = self.ranked
        if self.metrics is not None:
            out["metrics"] = list(self.metrics)
        return out


@dataclass(frozen=True)
class Metric:
    name: str
    direction: str

    @property
    def higher_better(self) -> bool:
        return self.direction == HIGHER_BETTER


@dataclass
class ChallengeManifest:
    cases: list[str]
    teams: list[str]
    structures: list[Structure]
    metrics: list[Metric]
    penalty_mm: float = DEFAULT_PENALTY_MM
    scheme_id: str = ""
    name: str = ""
    ground_truth: str = "gt/{case}.nii.gz"
    predictions_dir: str = "pred/{team}"
    prediction_file: str = "{case}.nii.gz"
    dominance: list[tuple[str, str]] = field(default_factory=list)
    root: Path | None = None

    def __post_init__(self) -> None:
        self._validate()

    def _validate(self) -> None:
        if len(set(self.cases)) != len(self.cases):
            raise ManifestError("duplicate case ids")
        if len(set(self.teams)) != len(self.teams):
            raise ManifestError("duplicate team ids")
        metric_names = [m.name for m in self.metrics]
        if len(set(metric_names)) != len(metric_names):
            raise ManifestError("duplicate metrics")
        for m in self.metrics:
            expected = METRIC_DIRECTIONS.get(m.name)
            if expected is None:
                raise ManifestError(f"unknown metric {m.name!r}")
            if m.direction != expected:
                raise ManifestError(f"metric {m.name} must be {expected}, got {m.direction!r}")
        if self.penalty_mm <= 0:
            raise ManifestError("penalty_mm must be positive")

        direct: dict[str, Structure] = {}
        seen: set[str] = set()
        used_labels: dict[int, str] = {}
        for s in self.structures:
            if s.name in seen:
                raise ManifestError(f"duplicate structure {s.name!r}")
            seen.add(s.name)
            if s.kind not in STRUCTURE_KINDS:
                raise ManifestError(f"structure {s.name}: unknown kind {s.kind!r}")
            if s.kind == "direct":
                if not s.labels or any(lab <= 0 for lab in s.labels):
                    raise ManifestError(f"structure {s.name}: direct structures need positive label ids")
                for lab in s.labels:
                    if lab in used_labels:
                        raise ManifestError(
                            f"label {lab} claimed by both {used_labels[lab]} and {s.name}"
                        )
                    used_labels[lab] = s.name
                direct[s.name] = s
            else:
                missing = [op for op in s.operands if op not in direct]
                if missing:
                    raise ManifestError(
                        f"structure {s.name}: operands {missing} are not previously declared direct structures"
                    )
                if s.kind == "union" and len(s.operands) < 1:
                    raise ManifestError(f"structure {s.name}: union needs operands")
                if s.kind == "interface" and len(s.operands) != 2:
                    raise ManifestError(f"structure {s.name}: interface needs exactly two operands")
            if s.metrics is not None:
                unknown = [m for m in s.metrics if m not in metric_names]
                if unknown:
                    raise ManifestError(f"structure {s.name}: metrics {unknown} not declared")
                if s.kind == "interface" and "DSC" in s.metrics:
                    raise ManifestError(f"structure {s.name}: interfaces only support ASSD")

        for better, worse in self.dominance:
            if better not in self.teams or worse not in self.teams:
                raise ManifestError(f"dominance pair ({better}, {worse}) names unknown teams")

    # -- lookups -------------------------------------------------------------

    def structure(self, name: str) -> Structure:
        for s in self.structures:
            if s.name == name:
                return s
        raise KeyError(f"unknown structure {name!r}")

    def metric(self, name: str) -> Metric:
        for m in self.metrics:
            if m.name == name:
                return m
        raise KeyError(f"unknown metric {name!r}")

    @property
    def label_ids(self) -> frozenset[int]:
        """Valid label values, background included."""
        ids = {0}
        for s in self.structures:
            if s.kind == "direct":
                ids.update(s.labels)
        return frozenset(ids)

    @property
    def directions(self) -> dict[str, str]:
        return {m.name: m.direction for m in self.metrics}

    def structure_metrics(self, structure: Structure) -> list[str]:
        if structure.metrics is not None:
            return [m.name for m in self.metrics if m.name in structure.metrics]
        if structure.kind == "interface":
            return [m.name for m in self.metrics if m.name == "ASSD"]
        return [m.name for m in self.metrics]

    def evaluation_cells(self) -> list[tuple[str, str, bool]]:
        """(structure, metric, ranked) in declaration order."""
        return [
            (s.name, m, s.ranked)
            for s in self.structures
            for m in self.structure_metrics(s)
        ]

    def ranked_cells(self) -> list[tuple[str, str]]:
        return [(s, m) for s, m, ranked in self.evaluation_cells() if ranked]

    # -- paths ---------------------------------------------------------------

    def _resolve(self, rel: str) -> Path:
        p = Path(rel)
        if not p.is_absolute() and self.root is not None:
            p = self.root / p
        return p

    def ground_truth_path(self, case: str) -> Path:
        return self._resolve(self.ground_truth.format(case=case))

    def submission_dir(self, team: str) -> Path:
        return self._resolve(self.predictions_dir.format(team=team))

    def prediction_filename(self, case: str) -> str:
        return self.prediction_file.format(case=case)

    def prediction_path(self, team: str, case: str) -> Path:
        return self.submission_dir(team) / self.prediction_filename(case)

    # -- (de)serialization ---------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "scheme_id": self.scheme_id,
            "cases": list(self.cases),
            "teams": list(self.teams),
            "structures": [s.to_dict() for s in self.structures],
            "metrics": [{"name": m.name, "direction": m.direction} for m in self.metrics],
            "penalty_mm": self.penalty_mm,
            "ground_truth": self.ground_truth,
            "predictions_dir": self.predictions_dir,
            "prediction_file": self.prediction_file,
            "dominance": [list(p) for p in self.dominance],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any], root: Path | None = None) -> ChallengeManifest:
        try:
            structures = [
                Structure(
                    name=s["name"],
                    kind=s["kind"],
                    labels=tuple(int(v) for v in s.get("labels", ())),
                    operands=tuple(s.get("operands", ())),
                    ranked=bool(s.get("ranked", True)),
                    metrics=tuple(s["metrics"]) if s.get("metrics") is not None else None,
                )
                for s in data["structures"]
            ]
            metrics = [
                Metric(m["name"], m.get("direction", METRIC_DIRECTIONS.get(m["name"], "")))
                for m in data["metrics"]
            ]
            return cls(
                cases=[str(c) for c in data["cases"]],
                teams=[str(t) for t in data["teams"]],
                structures=structures,
                metrics=metrics,
                penalty_mm=float(data.get("penalty_mm", DEFAULT_PENALTY_MM)),
                scheme_id=data.get("scheme_id", ""),
                name=data.get("name", ""),
                ground_truth=data.get("ground_truth", "gt/{case}.nii.gz"),
                predictions_dir=data.get("predictions_dir", "pred/{team}"),
                prediction_file=data.get("prediction_file", "{case}.nii.gz"),
                dominance=[(str(a), str(b)) for a, b in data.get("dominance", [])],
                root=root,
            )
        except (KeyError, TypeError) as exc:
            raise ManifestError(f"malformed manifest: {exc}") from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def load_manifest(path: str | Path) -> ChallengeManifest:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    return ChallengeManifest.from_dict(data, root=path.parent)


_METRICS = [Metric("DSC", HIGHER_BETTER), Metric("ASSD", LOWER_BETTER)]


def preset_2022(cases: list[str] | None = None, teams: list[str] | None = None) -> ChallengeManifest:
    """Two-structure layout: VS (label 1) and cochlea (label 2)."""
    return ChallengeManifest(
        cases=list(cases or []),
        teams=list(teams or []),
        structures=[
            Structure("VS", "direct", labels=(1,)),
            Structure("cochlea", "direct", labels=(2,)),
        ],
        metrics=list(_METRICS),
        scheme_id="crossmoda2022",
        name="crossmoda2022",
    )


def preset_2023(cases: list[str] | None = None, teams: list[str] | None = None) -> ChallengeManifest:
    """Three-class layout with the combined VS and split-boundary auxiliaries."""
    return ChallengeManifest(
        cases=list(cases or []),
        teams=list(teams or []),
        structures=[
            Structure("intra", "direct", labels=(1,)),
            Structure("extra", "direct", labels=(2,)),
            Structure("cochlea", "direct", labels=(3,)),
            Structure("VS", "union", operands=("intra", "extra"), ranked=False),
            Structure("boundary", "interface", operands=("intra", "extra"), ranked=False),
        ],
        metrics=list(_METRICS),
        scheme_id="crossmoda2023",
        name="crossmoda2023",
    )


PRESETS = {"2022": preset_2022, "2023": preset_2023}
