"""Counterfactual skin-tone bias audit harness for action recognition logs."""

__version__ = "0.1.0"

from .errors import AuditError, ConfigError, ManifestParseError, ValidationError
from .jobgen import (
    BestSetting,
    BestSettings,
    RenderJob,
    expand_jobs,
    filter_to_best,
    select_best_settings,
    select_worst_settings,
    validate_best_subset,
)
from .labelmatch import (
    EmbeddingTable,
    MatchEntry,
    MatchTable,
    Vocabulary,
    match_lexical,
    match_semantic,
    normalize_label,
)
from .manifest import (
    CANONICAL_TONES,
    FactorSpace,
    Manifest,
    MotionGroup,
    SkinTone,
    ValidationReport,
    VideoRecord,
    build_full_manifest,
    group_motions,
    parse_manifest,
    serialize_manifest,
    validate_factorial,
)
from .metrics import (
    AblationTable,
    DivergenceMatrix,
    PredictionLog,
    PredictionRecord,
    accuracy,
    best_worst_summary,
    divergence_by_action,
    divergence_matrix,
    error_matrix,
    load_predictions,
    predictions_to_csv,
)
from .simulator import BiasRule, SimulatorConfig, simulate
from .stats import (
    PermutationConfig,
    SignificanceReport,
    audit_model,
    bonferroni,
    canonical_pairs,
    collect_top1_labels,
    observed_divergence,
    pair_test,
)
