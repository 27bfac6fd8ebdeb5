"""albench: a desk-scale benchmark of pool-based active learning for binary
defect segmentation under controlled class imbalance and label shift."""

from .acquisition import (
    STRATEGIES,
    ScoreVector,
    SelectionResult,
    mean_entropy,
    select_coreset,
    select_entropy,
    select_random,
)
from .data import (
    DatasetManifest,
    ManifestEntry,
    PatchRecord,
    load_manifest,
    read_patch,
    save_manifest,
)
from .harness import ALRunConfig, CycleRecord, compute_budget, run_experiment, run_repetition
from .learner import (
    LearnerConfig,
    MultiScaleLogisticSegmenter,
    combo_loss,
    combo_loss_grad,
    extract_features,
)
from .metrics import (
    ConfusionCounts,
    UniquenessRecord,
    aggregate,
    f1_defect,
    faulty_selected_fraction,
    uniqueness_score,
)
from .synth import (
    PoolSpec,
    SynthConfig,
    build_disjoint_pools,
    build_pool,
    generate_synthetic,
    patchify,
)
from .tensorfile import read_tensor, write_tensor

__version__ = "0.1.0"

__all__ = [
    "ALRunConfig",
    "ConfusionCounts",
    "CycleRecord",
    "DatasetManifest",
    "LearnerConfig",
    "ManifestEntry",
    "MultiScaleLogisticSegmenter",
    "PatchRecord",
    "PoolSpec",
    "ScoreVector",
    "SelectionResult",
    "STRATEGIES",
    "SynthConfig",
    "UniquenessRecord",
    "aggregate",
    "build_disjoint_pools",
    "build_pool",
    "combo_loss",
    "combo_loss_grad",
    "compute_budget",
    "extract_features",
    "f1_defect",
    "faulty_selected_fraction",
    "generate_synthetic",
    "load_manifest",
    "mean_entropy",
    "patchify",
    "read_patch",
    "read_tensor",
    "run_experiment",
    "run_repetition",
    "save_manifest",
    "select_coreset",
    "select_entropy",
    "select_random",
    "uniqueness_score",
    "write_tensor",
]
