"""Box-supervised mask auto-labeling toolkit.

Pipeline per annotated box: expand the box by a random margin, crop and
resize the region, fit a per-pixel logit mask against the row/column MIL
dice loss plus a CRF self-training dice loss with an EMA-teacher average,
refine with color-kernel mean-field passes, and threshold.
"""

from .boxes import BBox
from .config import RunConfig
from .crf import CrfParams, PairwiseKernel, build_kernel, crf_energy, mean_field, threshold
from .imaging import (
    BinaryMask,
    Image,
    ProbMask,
    crop,
    load_binary_mask,
    load_image,
    load_prob_mask,
    resize_bilinear,
    save_binary_mask,
    save_image,
    save_prob_mask,
)
from .metrics import (
    ClusterAssignment,
    FeatureField,
    assignment_from_mask,
    clustering_score,
    mask_dice,
    mask_iou,
    retention,
)
from .mil import Bag, BagSet, bags_for_box, build_bags, mil_loss
from .rng import stream
from .roi import (
    CropGeometry,
    ExpandedBBox,
    ExpansionParams,
    expand_box,
    expand_with_draws,
    make_crop_geometry,
    mask_to_image_space,
)
from .synth import SceneSpec, generate
from .training import (
    EmaState,
    LabelResult,
    LogitConfig,
    LogitField,
    LossWeights,
    TotalLoss,
    average_masks,
    crf_self_training_loss,
    ema_update,
    optimize_logits,
    sigmoid,
    total_loss,
)

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "Bag",
    "BagSet",
    "BinaryMask",
    "ClusterAssignment",
    "CropGeometry",
    "CrfParams",
    "EmaState",
    "ExpandedBBox",
    "ExpansionParams",
    "FeatureField",
    "Image",
    "LabelResult",
    "LogitConfig",
    "LogitField",
    "LossWeights",
    "PairwiseKernel",
    "ProbMask",
    "RunConfig",
    "SceneSpec",
    "TotalLoss",
    "assignment_from_mask",
    "average_masks",
    "bags_for_box",
    "build_bags",
    "build_kernel",
    "clustering_score",
    "crf_energy",
    "crf_self_training_loss",
    "crop",
    "ema_update",
    "expand_box",
    "expand_with_draws",
    "generate",
    "load_binary_mask",
    "load_image",
    "load_prob_mask",
    "make_crop_geometry",
    "mask_dice",
    "mask_iou",
    "mask_to_image_space",
    "mean_field",
    "mil_loss",
    "optimize_logits",
    "resize_bilinear",
    "retention",
    "save_binary_mask",
    "save_image",
    "save_prob_mask",
    "sigmoid",
    "stream",
    "threshold",
    "total_loss",
]
