"""Difficulty-boosted training for multi-source deepfake detection.

The toolkit covers four pieces that usually live in separate scripts:

- a dataset curation pipeline (score filters, style/word filters, manual
  review, face cropping) driven by line-delimited manifests,
- training strategies for heterogeneous merged datasets, centered on
  momentum difficulty boosting (per-sample loss weights from an EMA
  teacher's cross-entropy, rescaled into [1, C] per mini-batch),
- evaluation metrics (AUC, EER, threshold accuracy), and
- frequency analysis of high-pass-filtered images.

Everything is plain numpy at desk scale: the reference detector is a small
MLP with exact analytic gradients, so every training claim is testable
against independent oracles.
"""

__version__ = "0.1.0"

from .boosting import (
    DifficultyWeights,
    MomentumState,
    StrategyConfig,
    TrainLog,
    difficulty_scores,
    momentum_update,
    rescale_weights,
    train,
)
from .datasets import (
    Manifest,
    MixtureSpec,
    SampleRecord,
    SourceSpec,
    canonical_mixture,
    load_manifest,
    make_mixture,
    merge_sources,
    per_source_stats,
    save_manifest,
    split_records,
)
from .errors import (
    DomainError,
    ManifestParseError,
    NumericError,
    ShapeError,
    ValidationError,
)
from .metrics import MetricsReport, ScoredSet, acc, auc, eer, evaluate
from .nn import ClassifierSpec, grad_check, init_params
