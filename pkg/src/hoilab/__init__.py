"""Desk-scale laboratory for long-tailed multi-label interaction heads.

The package covers the full loop: synthetic verb-object data with a
controllable long tail, sign losses with analytic gradients, a scaled
linear head initialised from class text embeddings, an oversampling
trainer, ranking metrics with few-shot breakdowns, and box-conditioned
attention pooling for pair detections.
"""

from .classifier import (
    EmbeddingMatrix,
    LinearClassifier,
    backward,
    forward,
    init_from_embeddings,
    init_random,
    load_checkpoint,
    load_embeddings,
    save_checkpoint,
    save_embeddings,
)
from .datagen import (
    SampleSet,
    SemanticModel,
    SyntheticDataset,
    generate_dataset,
    sample_semantic_model,
    synthesize_language_embeddings,
)
from .evaluation import EvalReport, average_precision, evaluate
from .losses import (
    bce_loss,
    focal_loss,
    get_loss,
    lse_sign_loss,
    positive_negative_ratio,
    weighted_bce_loss,
)
from .regional import (
    AttentionMask,
    AttentionParams,
    Box,
    boxes_to_mask,
    detection_ap,
    iou,
    masked_attention_pool,
    match_predictions,
    score_pair,
)
from .taxonomy import (
    ClassStats,
    ClassTaxonomy,
    build_taxonomy,
    compute_stats,
    make_prompt,
)
from .trainer import EpochPlan, TrainConfig, TrainingLog, lr_at, plan_epoch, train

__version__ = "0.1.0"
