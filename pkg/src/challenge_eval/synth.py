"""Synthetic challenges with a known quality ordering among teams.

Ground truths are axis-aligned ellipsoid "tumours" cut by a plane into an
intra part (low x) and an extra part (high x), plus two small spherical
cochlea blobs. Team predictions are the ground truth pushed through a
perturbation profile whose magnitudes scale with a severity scalar.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .manifest import ChallengeManifest, preset_2022, preset_2023
from .ranking import ResultsTable
from .volume import SIX_CONNECTIVITY, BinaryMask, LabelVolume, write_label_volume

PERTURB_OPS = ("dilate", "erode", "translate", "drop", "jitter")


class PhantomFitError(ValueError):
    """Phantom geometry does not fit the grid with the required margin."""


@dataclass(frozen=True)
class PerturbOp:
    """One perturbation step.

    ``amount`` means: voxels of dilation/erosion, probability of dropping the
    structure, or probability of toggling each boundary voxel (jitter).
    ``offset`` is used by translate only.
    """

    kind: str
    amount: float = 1.0
    offset: tuple[int, int, int] = (0, 0, 0)

    def __post_init__(self) -> None:
        if self.kind not in PERTURB_OPS:
            raise ValueError(f"unknown perturbation {self.kind!r}")
        if self.amount < 0:
            raise ValueError("perturbation amount must be >= 0")
        object.__setattr__(self, "offset", tuple(int(v) for v in self.offset))


@dataclass(frozen=True)
class PerturbationProfile:
    ops: tuple[PerturbOp, ...] = ()
    severity: float = 0.0

    def __post_init__(self) -> None:
        if self.severity < 0:
            raise ValueError("severity must be >= 0")
        object.__setattr__(self, "ops", tuple(self.ops))

    def to_dict(self) -> dict:
        return {"severity": self.severity, "ops": [asdict(op) for op in self.ops]}

    @classmethod
    def from_dict(cls, data: dict) -> PerturbationProfile:
        ops = tuple(
            PerturbOp(o["kind"], float(o.get("amount", 1.0)), tuple(o.get("offset", (0, 0, 0))))
            for o in data.get("ops", ())
        )
        return cls(ops, float(data.get("severity", 0.0)))


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed) & ((1 << 64) - 1))))


def _shift(bits: np.ndarray, offset) -> np.ndarray:
    out = np.zeros_like(bits)
    src, dst = [], []
    for n, o in zip(bits.shape, offset):
        if abs(o) >= n:
            return out
        src.append(slice(max(0, -o), n - max(0, o)))
        dst.append(slice(max(0, o), n - max(0, -o)))
    out[tuple(dst)] = bits[tuple(src)]
    return out


def perturb_mask(mask: BinaryMask, profile: PerturbationProfile, case_seed: int) -> BinaryMask:
    if profile.severity == 0 or not profile.ops:
        return mask
    rng = _rng(case_seed)
    bits = np.array(mask.bits, copy=True)
    s = profile.severity
    for op in profile.ops:
        if op.kind in ("dilate", "erode"):
            k = int(round(op.amount * s))
            if k > 0 and bits.any():
                fn = ndimage.binary_dilation if op.kind == "dilate" else ndimage.binary_erosion
                bits = fn(bits, structure=SIX_CONNECTIVITY, iterations=k)
        elif op.kind == "translate":
            off = tuple(int(round(v * s)) for v in op.offset)
            if any(off):
                bits = _shift(bits, off)
        elif op.kind == "drop":
            if rng.random() < min(1.0, op.amount * s):
                bits[:] = False
        elif op.kind == "jitter":
            p = min(1.0, op.amount * s)
            edge = bits ^ ndimage.binary_erosion(bits, structure=SIX_CONNECTIVITY)
            outer = ndimage.binary_dilation(bits, structure=SIX_CONNECTIVITY) & ~bits
            flips = (edge | outer) & (rng.random(bits.shape) < p)
            bits ^= flips
    return BinaryMask(bits, mask.spacing)


@dataclass(frozen=True)
class PhantomParams:
    radii_range: tuple[float, float] = (4.0, 7.0)  # voxels
    split_range: tuple[float, float] = (-0.3, 0.3)  # plane offset, fraction of x radius
    cochlea_radius: float = 1.6  # voxels
    margin: int = 2


@dataclass
class SynthSpec:
    n_cases: int = 20
    dims: tuple[int, int, int] = (40, 40, 24)
    spacing: tuple[float, float, float] = (0.5, 0.5, 1.0)
    teams: list[tuple[str, PerturbationProfile]] = field(default_factory=list)
    seed: int = 0
    edition: str = "2023"
    phantom: PhantomParams = field(default_factory=PhantomParams)

    def __post_init__(self) -> None:
        if self.n_cases < 1:
            raise ValueError("n_cases must be positive")
        if self.edition not in ("2022", "2023"):
            raise ValueError("edition must be '2022' or '2023'")
        ids = [t for t, _ in self.teams]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate team ids")
        _check_fit(self)

    @property
    def case_ids(self) -> list[str]:
        return [f"case_{i:03d}" for i in range(self.n_cases)]

    def to_dict(self) -> dict:
        return {
            "n_cases": self.n_cases,
            "dims": list(self.dims),
            "spacing": list(self.spacing),
            "seed": self.seed,
            "edition": self.edition,
            "phantom": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self.phantom).items()},
            "teams": [{"id": t, **p.to_dict()} for t, p in self.teams],
        }

    @classmethod
    def from_dict(cls, data: dict) -> SynthSpec:
        ph = data.get("phantom", {})
        phantom = PhantomParams(
            radii_range=tuple(ph.get("radii_range", (4.0, 7.0))),
            split_range=tuple(ph.get("split_range", (-0.3, 0.3))),
            cochlea_radius=float(ph.get("cochlea_radius", 1.6)),
            margin=int(ph.get("margin", 2)),
        )
        return cls(
            n_cases=int(data.get("n_cases", 20)),
            dims=tuple(data.get("dims", (40, 40, 24))),
            spacing=tuple(float(s) for s in data.get("spacing", (0.5, 0.5, 1.0))),
            teams=[(t["id"], PerturbationProfile.from_dict(t)) for t in data.get("teams", [])],
            seed=int(data.get("seed", 0)),
            edition=str(data.get("edition", "2023")),
            phantom=phantom,
        )


def dilation_ladder(severities, prefix: str = "team") -> list[tuple[str, PerturbationProfile]]:
    """Teams that share a one-voxel dilation profile at increasing severity."""
    op = (PerturbOp("dilate", 1.0),)
    return [(f"{prefix}_{i}", PerturbationProfile(op, float(s))) for i, s in enumerate(severities)]


# ---------------------------------------------------------------------------
# phantom geometry (voxel units)


def _tumour_box(spec: SynthSpec) -> tuple[np.ndarray, np.ndarray]:
    """Allowed centre range for the tumour; it lives in the lower 65% of y."""
    nx, ny, nz = spec.dims
    r_max = spec.phantom.radii_range[1]
    m = spec.phantom.margin
    lo = np.array([m + r_max, m + r_max, m + r_max])
    hi = np.array([nx - 1 - m - r_max, 0.65 * ny - r_max, nz - 1 - m - r_max])
    return lo, hi


def _cochlea_centres(spec: SynthSpec) -> list[np.ndarray]:
    nx, ny, nz = spec.dims
    y = 0.65 * ny + 1 + (ny - 0.65 * ny) / 2.0
    return [np.array([0.3 * nx, y, (nz - 1) / 2.0]), np.array([0.7 * nx, y, (nz - 1) / 2.0])]


def _check_fit(spec: SynthSpec) -> None:
    ph = spec.phantom
    lo, hi = _tumour_box(spec)
    if np.any(lo > hi) or ph.radii_range[0] <= 0 or ph.radii_range[0] > ph.radii_range[1]:
        raise PhantomFitError(f"tumour with radii {ph.radii_range} does not fit grid {spec.dims}")
    r = ph.cochlea_radius
    for c in _cochlea_centres(spec):
        if np.any(c - r < ph.margin) or np.any(c + r > np.array(spec.dims) - 1 - ph.margin):
            raise PhantomFitError(f"cochlea blobs do not fit grid {spec.dims}")
        if c[1] - r <= 0.65 * spec.dims[1]:
            raise PhantomFitError("cochlea blobs would touch the tumour region")


def _case_seed(seed: int, *key: int) -> int:
    ss = np.random.SeedSequence(int(seed) & ((1 << 64) - 1), spawn_key=tuple(key))
    return int(ss.generate_state(1, np.uint64)[0])


def phantom_labels(spec: SynthSpec, case_index: int) -> dict[str, np.ndarray]:
    """Direct-structure masks of one ground-truth case."""
    rng = _rng(_case_seed(spec.seed, 0, case_index))
    ph = spec.phantom
    lo, hi = _tumour_box(spec)
    centre = rng.uniform(lo, hi)
    radii = rng.uniform(ph.radii_range[0], ph.radii_range[1], size=3)
    split = centre[0] + rng.uniform(*ph.split_range) * radii[0]

    grid = np.indices(spec.dims, dtype=np.float64)
    q = sum(((grid[a] - centre[a]) / radii[a]) ** 2 for a in range(3))
    tumour = q <= 1.0
    intra = tumour & (grid[0] < split)
    extra = tumour & ~intra

    cochlea = np.zeros(spec.dims, dtype=bool)
    for c in _cochlea_centres(spec):
        c = c + rng.uniform(-0.5, 0.5, size=3)
        d2 = sum((grid[a] - c[a]) ** 2 for a in range(3))
        cochlea |= d2 <= ph.cochlea_radius**2
    if spec.edition == "2022":
        return {"VS": tumour, "cochlea": cochlea}
    return {"intra": intra, "extra": extra, "cochlea": cochlea}


def _compose(
    masks: dict[str, np.ndarray],
    manifest: ChallengeManifest,
    dims,
    reference: dict[str, np.ndarray] | None = None,
    _dist_cache: dict[str, np.ndarray] | None = None,
) -> np.ndarray:
    """Label volume from per-structure masks.

    Voxels claimed by several masks go to the structure whose ``reference``
    (unperturbed) mask is nearest, so dilated neighbours keep their shared
    boundary; without references, earlier structures win.
    """
    names = [s.name for s in manifest.structures if s.kind == "direct" and s.name in masks]
    label_of = {s.name: s.labels[0] for s in manifest.structures if s.kind == "direct"}
    labels = np.zeros(dims, dtype=np.uint8)
    stack = np.stack([masks[n] for n in names])
    claims = stack.sum(axis=0)
    if reference is None or claims.max(initial=0) <= 1:
        for name in names:
            labels[masks[name] & (labels == 0)] = label_of[name]
        return labels
    cache = {} if _dist_cache is None else _dist_cache
    for n in names:
        if n not in cache:
            ref = reference[n]
            cache[n] = ndimage.distance_transform_edt(~ref) if ref.any() else np.full(dims, np.inf)
    dist = np.where(stack, np.stack([cache[n] for n in names]), np.inf)
    winner = np.argmin(dist, axis=0)  # first index on ties
    claimed = claims > 0
    lut = np.array([label_of[n] for n in names], dtype=np.uint8)
    labels[claimed] = lut[winner[claimed]]
    return labels


def synth_manifest(spec: SynthSpec) -> ChallengeManifest:
    base = preset_2023 if spec.edition == "2023" else preset_2022
    m = base(spec.case_ids, [t for t, _ in spec.teams])
    m.name = f"synthetic-{spec.edition}"
    m.dominance = dominance_pairs(spec.teams)
    return m


def dominance_pairs(teams: list[tuple[str, PerturbationProfile]]) -> list[tuple[str, str]]:
    """(better, worse) pairs: same ops, strictly lower severity."""
    pairs = []
    for a, pa in teams:
        for b, pb in teams:
            if pa.ops == pb.ops and pa.severity < pb.severity:
                pairs.append((a, b))
    return pairs


def synthesize_case(
    spec: SynthSpec, case_index: int, manifest: ChallengeManifest | None = None
) -> tuple[LabelVolume, dict[str, LabelVolume]]:
    """Ground truth and every team's prediction for one case, in memory."""
    manifest = manifest or synth_manifest(spec)
    masks = phantom_labels(spec, case_index)
    gt = LabelVolume(_compose(masks, manifest, spec.dims), spec.spacing)
    preds, dist_cache = {}, {}
    for ti, (team, profile) in enumerate(spec.teams):
        perturbed = {}
        for si, (name, bits) in enumerate(masks.items()):
            seed = _case_seed(spec.seed, 1, ti, case_index, si)
            perturbed[name] = perturb_mask(BinaryMask(bits, spec.spacing), profile, seed).bits
        preds[team] = LabelVolume(_compose(perturbed, manifest, spec.dims, masks, dist_cache), spec.spacing)
    return gt, preds


def generate_challenge(spec: SynthSpec, out_dir: str | Path) -> ChallengeManifest:
    """Write GT and prediction NIfTI files, ``manifest.json`` and ``synth_spec.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = synth_manifest(spec)
    manifest.root = out_dir
    for i, case in enumerate(spec.case_ids):
        gt, preds = synthesize_case(spec, i, manifest)
        write_label_volume(gt, manifest.ground_truth_path(case))
        for team, vol in preds.items():
            write_label_volume(vol, manifest.prediction_path(team, case))
    manifest.save(out_dir / "manifest.json")
    (out_dir / "synth_spec.json").write_text(json.dumps(spec.to_dict(), indent=2) + "\n")
    return manifest


# ---------------------------------------------------------------------------
# direct results tables, for bootstrap studies at scale


def synth_results_table(
    n_cases: int,
    n_teams: int,
    seed: int = 0,
    structures=("intra", "extra", "cochlea"),
    gap: float = 0.01,
    noise: float = 0.03,
    dominant_leader: bool = True,
    assd_outlier_rate: float = 0.0,
) -> ResultsTable:
    """Metric values drawn directly, without volumes.

    Team ``j`` is on average ``j * gap`` worse than team 0. With
    ``dominant_leader`` team 0 is strictly best in every cell. ASSD outliers
    (5 to 350 mm) replace entries with probability ``assd_outlier_rate``; a
    dominant leader is re-placed ahead of them.
    """
    rng = _rng(seed)
    teams = [f"team_{j}" for j in range(n_teams)]
    cases = [f"case_{i:04d}" for i in range(n_cases)]
    cells = [(s, m) for s in structures for m in ("DSC", "ASSD")]
    values = np.empty((n_cases, n_teams, len(cells)))
    for ci in range(n_cases):
        for si in range(len(structures)):
            base_dsc = rng.uniform(0.70, 0.90)
            base_assd = rng.uniform(0.3, 0.8)
            dsc = base_dsc - gap * np.arange(n_teams) + noise * rng.standard_normal(n_teams)
            assd = base_assd + gap * np.arange(n_teams) + noise * np.abs(rng.standard_normal(n_teams))
            if assd_outlier_rate > 0:
                hit = rng.random(n_teams) < assd_outlier_rate
                assd = np.where(hit, rng.uniform(5.0, 350.0, n_teams), assd)
            dsc = np.clip(dsc, 0.0, 0.99)
            if dominant_leader and n_teams > 1:
                dsc[0] = dsc[1:].max() + 0.005
                assd[0] = max(assd[1:].min() - 0.005, 0.0)
                if assd[0] >= assd[1:].min():
                    assd[1:] = np.maximum(assd[1:], assd[0] + 0.005)
            values[ci, :, 2 * si] = dsc
            values[ci, :, 2 * si + 1] = assd
    return ResultsTable.from_array(values, cases, teams, cells)
