"""Loss composition, EMA teacher, and the direct-logit mask optimizer.

The optimizer treats a per-pixel logit field as the trainable parameters:
m = sigmoid(z). A shadow logit field updated by exponential moving average
plays the teacher; the task/teacher average feeds the mean-field refiner,
whose output l is a constant pseudo-label in the backward pass. The total
objective is

    loss = alpha_mil * L_mil(m) + alpha_crf * L_crf(m, l)

with L_crf the dice loss  1 - 2 * sum(l m) / sum(l^2 + m^2).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .crf import CrfParams, PairwiseKernel, build_kernel, mean_field, threshold
from .errors import NonFiniteLossError, UndefinedDiceError
from .imaging import Image, ProbMask, require_same_shape
from .mil import BagSet, build_bags, mil_loss
from .roi import CropGeometry


@dataclass(frozen=True)
class LossWeights:
    alpha_mil: float = 4.0
    alpha_crf: float = 0.5

    def __post_init__(self):
        if self.alpha_mil < 0 or self.alpha_crf < 0:
            raise ValueError("loss weights must be >= 0")


@dataclass(frozen=True)
class EmaState:
    """Flat task/teacher parameter vectors and the teacher momentum."""

    task_params: np.ndarray
    teacher_params: np.ndarray
    momentum: float = 0.996

    def __post_init__(self):
        if self.task_params.shape != self.teacher_params.shape:
            raise ValueError("task and teacher parameter vectors must match")
        if not 0.0 <= self.momentum <= 1.0:
            raise ValueError(f"momentum must be in [0, 1], got {self.momentum}")


@dataclass
class LogitField:
    """Per-pixel logits being optimized, plus the loop hyperparameters."""

    z: np.ndarray
    learning_rate: float = 40.0
    steps: int = 500


@dataclass(frozen=True)
class LogitConfig:
    """Settings for :func:`optimize_logits`.

    The loop is staged. For the first ``crf_warmup`` steps the self-training
    weight is zero while the bag loss imprints the expansion margins. Until
    ``positive_delay`` steps only the suppressive half of the gradient is
    applied, so pseudo-labels carve the background into the mask before any
    pixel is pushed up. Without the hold, the first positive bag maxima
    land on arbitrary high-noise pixels, and a maximum pinned inside a
    background pocket seeds a label region that never unlearns.
    """

    learning_rate: float = 40.0
    steps: int = 500
    init_noise: float = 0.01
    ema_momentum: float = 0.996
    include_margin_bags: bool = True
    crf_warmup: int = 40
    positive_delay: int = 120


@dataclass(frozen=True)
class TotalLoss:
    loss: float
    grad: np.ndarray
    refined: ProbMask
    mil: float
    crf: float


@dataclass(frozen=True)
class LabelResult:
    mask: ProbMask
    refined: ProbMask
    trace: list[tuple[int, float, float, float]] = field(default_factory=list)


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def average_masks(m: ProbMask, m_t: ProbMask) -> ProbMask:
    """Elementwise mean of the task and teacher predictions."""
    require_same_shape(m, m_t)
    return ProbMask((m.data + m_t.data) / 2.0)


def crf_self_training_loss(m: ProbMask, l: ProbMask) -> tuple[float, np.ndarray]:
    """Dice loss against a refined pseudo-label, with gradient w.r.t. m.

    ``l`` is treated as a constant. Raises if both inputs are identically
    zero (the dice denominator vanishes).
    """
    require_same_shape(m, l)
    lm = l.data
    mm = m.data
    s = 2.0 * float(np.sum(lm * mm))
    d = float(np.sum(lm * lm + mm * mm))
    if d == 0.0:
        raise UndefinedDiceError("dice undefined: both masks are identically zero")
    loss = 1.0 - s / d
    grad = -2.0 * (lm * d - s * mm) / (d * d)
    return float(loss), grad


def total_loss(
    m: ProbMask,
    m_t: ProbMask,
    img: Image,
    bags: BagSet,
    weights: LossWeights,
    crf_params: CrfParams,
    kernel: Optional[PairwiseKernel] = None,
) -> TotalLoss:
    """Weighted MIL + self-training loss with gradient w.r.t. the task mask.

    The refinement input is the task/teacher average conditioned on the
    box: pixels outside the ground-truth box are known background, so their
    scores are zeroed before refinement. The pseudo-label for the
    self-training dice term is the thresholded refinement: refinement ends
    with a cutoff, so the label is binary. Neither the teacher mask nor the
    pseudo-label receives gradient.
    """
    m_a = average_masks(m, m_t)
    if kernel is None:
        kernel = build_kernel(img, crf_params)
    conditioned = ProbMask(np.where(bags.box_region(), m_a.data, 0.0))
    refined, _ = mean_field(conditioned, kernel, crf_params)
    pseudo = ProbMask(threshold(refined, crf_params).data.astype(np.float64))
    loss_mil, grad_mil = mil_loss(m, bags)
    loss_crf, grad_crf = crf_self_training_loss(m, pseudo)
    loss = weights.alpha_mil * loss_mil + weights.alpha_crf * loss_crf
    grad = weights.alpha_mil * grad_mil + weights.alpha_crf * grad_crf
    return TotalLoss(loss=float(loss), grad=grad, refined=refined, mil=loss_mil, crf=loss_crf)


def ema_update(state: EmaState) -> EmaState:
    """One teacher step: teacher <- momentum * teacher + (1 - momentum) * task."""
    mu = state.momentum
    teacher = mu * state.teacher_params + (1.0 - mu) * state.task_params
    return EmaState(task_params=state.task_params, teacher_params=teacher, momentum=mu)


def optimize_logits(
    img: Image,
    geom: CropGeometry,
    weights: LossWeights,
    crf_params: CrfParams,
    cfg: LogitConfig,
    rng: np.random.Generator,
) -> LabelResult:
    """Fit a per-pixel logit field to one crop by gradient descent.

    Logits start at zero plus small seeded uniform noise to break bag-max
    ties. Each step refines the task/teacher average into a pseudo-label,
    evaluates the combined loss, and applies

        z <- z - lr * dL/dm * m * (1 - m).

    Returns the final task mask, the refinement of the final task/teacher
    average, and the per-step (mil, crf, total) loss trace.
    """
    bags = build_bags(geom, include_margins=cfg.include_margin_bags)
    kernel = build_kernel(img, crf_params)
    shape = (geom.crop_h, geom.crop_w)
    z = rng.uniform(-cfg.init_noise, cfg.init_noise, size=shape)
    z_teacher = z.copy()
    trace: list[tuple[int, float, float, float]] = []
    for step in range(cfg.steps):
        m = ProbMask(sigmoid(z))
        m_t = ProbMask(sigmoid(z_teacher))
        warm = step < cfg.crf_warmup
        step_weights = LossWeights(alpha_mil=weights.alpha_mil, alpha_crf=0.0) if warm else weights
        parts = total_loss(m, m_t, img, bags, step_weights, crf_params, kernel=kernel)
        if not np.isfinite(parts.loss) or not np.isfinite(parts.grad).all():
            raise NonFiniteLossError(f"non-finite loss or gradient at step {step}")
        trace.append((step, parts.mil, parts.crf, parts.loss))
        grad = np.maximum(parts.grad, 0.0) if step < cfg.positive_delay else parts.grad
        md = m.data
        z = z - cfg.learning_rate * grad * md * (1.0 - md)
        ema = ema_update(
            EmaState(task_params=z.ravel(), teacher_params=z_teacher.ravel(), momentum=cfg.ema_momentum)
        )
        z_teacher = ema.teacher_params.reshape(shape)
    final_m = ProbMask(sigmoid(z))
    final_avg = average_masks(final_m, ProbMask(sigmoid(z_teacher)))
    refined, _ = mean_field(final_avg, kernel, crf_params)
    return LabelResult(mask=final_m, refined=refined, trace=trace)
