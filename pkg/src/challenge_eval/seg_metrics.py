"""Overlap and surface-distance metrics for 3D binary masks.

Boundaries are the centres of foreground voxels with at least one
6-connected neighbour that is background or outside the grid, expressed in
millimetres (voxel index times spacing). Point-to-set distances are exact
Euclidean nearest-neighbour distances found with a k-d tree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .manifest import DEFAULT_PENALTY_MM, ChallengeManifest
from .volume import (
    SIX_CONNECTIVITY,
    BinaryMask,
    LabelVolume,
    check_grid_compatible,
    extract_structure_mask,
    validate_labels,
)


class EmptyReferenceError(ValueError):
    """ASSD is undefined when the reference boundary is empty."""


class OverlapError(ValueError):
    """Masks that must be disjoint share voxels."""


@dataclass(frozen=True)
class BoundaryPointSet:
    points: np.ndarray  # (n, 3) float64, mm

    @property
    def count(self) -> int:
        return int(self.points.shape[0])

    def __len__(self) -> int:
        return self.count


@dataclass(frozen=True)
class MetricValue:
    metric: str
    structure: str
    value: float
    penalized: bool = False
    # both masks empty; DSC defined as 1.0 by convention
    degenerate: bool = False
    ranked: bool = True


def _to_points(bits: np.ndarray, spacing) -> BoundaryPointSet:
    idx = np.argwhere(bits)
    return BoundaryPointSet(idx.astype(np.float64) * np.asarray(spacing, dtype=np.float64))


def dice(pred: BinaryMask, gt: BinaryMask, structure: str = "") -> MetricValue:
    check_grid_compatible(pred, gt)
    inter = int(np.count_nonzero(pred.bits & gt.bits))
    total = pred.count + gt.count
    if total == 0:
        return MetricValue("DSC", structure, 1.0, degenerate=True)
    return MetricValue("DSC", structure, 2.0 * inter / total)


def boundary_bits(bits: np.ndarray) -> np.ndarray:
    interior = ndimage.binary_erosion(bits, structure=SIX_CONNECTIVITY, border_value=0)
    return bits & ~interior


def boundary_points(mask: BinaryMask) -> BoundaryPointSet:
    return _to_points(boundary_bits(mask.bits), mask.spacing)


def interface_points(intra: BinaryMask, extra: BinaryMask) -> BoundaryPointSet:
    """Centres of ``intra`` voxels that touch ``extra`` across a face."""
    check_grid_compatible(intra, extra)
    if np.any(intra.bits & extra.bits):
        raise OverlapError("intra and extra masks overlap")
    near_extra = ndimage.binary_dilation(extra.bits, structure=SIX_CONNECTIVITY)
    return _to_points(intra.bits & near_extra, intra.spacing)


def _directed_sum(src: np.ndarray, dst: np.ndarray) -> float:
    dist, _ = cKDTree(dst).query(src, k=1)
    return float(np.sum(dist))


def surface_distance(pred_pts: BoundaryPointSet, gt_pts: BoundaryPointSet) -> float:
    """Symmetric mean distance between two nonempty point sets."""
    if pred_pts.count == 0 or gt_pts.count == 0:
        raise ValueError("surface distance needs two nonempty point sets")
    total = _directed_sum(pred_pts.points, gt_pts.points) + _directed_sum(gt_pts.points, pred_pts.points)
    return total / (pred_pts.count + gt_pts.count)


def assd(
    pred: BinaryMask,
    gt: BinaryMask,
    penalty_mm: float = DEFAULT_PENALTY_MM,
    structure: str = "",
) -> MetricValue:
    """Average symmetric surface distance in mm.

    An all-background prediction scores ``penalty_mm`` and is flagged as
    penalized. An empty reference raises EmptyReferenceError.
    """
    check_grid_compatible(pred, gt)
    if gt.count == 0:
        raise EmptyReferenceError(f"empty ground truth for {structure or 'structure'}")
    if pred.count == 0:
        return MetricValue("ASSD", structure, float(penalty_mm), penalized=True)
    return MetricValue("ASSD", structure, surface_distance(boundary_points(pred), boundary_points(gt)))


def split_boundary_assd(
    pred_intra: BinaryMask,
    pred_extra: BinaryMask,
    gt_intra: BinaryMask,
    gt_extra: BinaryMask,
    penalty_mm: float = DEFAULT_PENALTY_MM,
    structure: str = "boundary",
) -> MetricValue:
    for m in (pred_extra, gt_intra, gt_extra):
        check_grid_compatible(pred_intra, m)
    gt_pts = interface_points(gt_intra, gt_extra)
    if gt_pts.count == 0:
        raise EmptyReferenceError("ground truth has no intra/extra interface")
    pred_pts = interface_points(pred_intra, pred_extra)
    if pred_pts.count == 0:
        return MetricValue("ASSD", structure, float(penalty_mm), penalized=True)
    return MetricValue("ASSD", structure, surface_distance(pred_pts, gt_pts))


def evaluate_case(pred: LabelVolume, gt: LabelVolume, manifest: ChallengeManifest) -> list[MetricValue]:
    """All declared (structure, metric) values for one case, in manifest order."""
    check_grid_compatible(pred, gt)
    validate_labels(pred, manifest)
    validate_labels(gt, manifest)

    masks: dict[str, tuple[BinaryMask, BinaryMask]] = {}

    def pair(name: str) -> tuple[BinaryMask, BinaryMask]:
        if name not in masks:
            masks[name] = (
                extract_structure_mask(pred, name, manifest),
                extract_structure_mask(gt, name, manifest),
            )
        return masks[name]

    out: list[MetricValue] = []
    for s in manifest.structures:
        for metric in manifest.structure_metrics(s):
            if s.kind == "interface":
                (p_a, g_a), (p_b, g_b) = pair(s.operands[0]), pair(s.operands[1])
                mv = split_boundary_assd(p_a, p_b, g_a, g_b, manifest.penalty_mm, structure=s.name)
            else:
                p, g = pair(s.name)
                if metric == "DSC":
                    mv = dice(p, g, structure=s.name)
                else:
                    mv = assd(p, g, manifest.penalty_mm, structure=s.name)
            out.append(
                MetricValue(mv.metric, s.name, mv.value, mv.penalized, mv.degenerate, ranked=s.ranked)
            )
    return out
