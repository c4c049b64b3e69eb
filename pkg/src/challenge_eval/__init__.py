"""Evaluation, ranking and ranking-stability tools for 3D segmentation challenges."""

from .manifest import ChallengeManifest, Metric, Structure, load_manifest, preset_2022, preset_2023
from .ordinal import OrdinalPredictionSet, confusion_matrix, ma_mae
from .pipeline import ValidationReport, evaluate_challenge, validate_submission
from .ranking import (
    SCHEMES,
    RankingOutcome,
    Record,
    ResultsTable,
    cumulative_rank,
    per_cell_ranks,
    rank_koos,
    rank_teams,
)
from .seg_metrics import (
    BoundaryPointSet,
    MetricValue,
    assd,
    boundary_points,
    dice,
    evaluate_case,
    interface_points,
    split_boundary_assd,
)
from .stability import (
    BootstrapSummary,
    SchemeComparison,
    bootstrap_stability,
    compare_schemes,
    kendall_tau,
    metric_subset_stability,
)
from .synth import PerturbationProfile, PerturbOp, SynthSpec, dilation_ladder, generate_challenge
from .volume import (
    BinaryMask,
    LabelVolume,
    check_grid_compatible,
    extract_structure_mask,
    read_label_volume,
    write_label_volume,
)

__version__ = "0.1.0"
