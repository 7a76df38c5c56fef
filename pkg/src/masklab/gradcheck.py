"""Finite-difference verification of the analytic loss gradients.

Central differences with step h are an independent oracle: they evaluate
only loss values, never the analytic gradient code. Comparison is
elementwise relative error where either side is meaningfully large, and
absolute error below that (bag maxima make most MIL gradient entries
exactly zero on both sides).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .boxes import BBox
from .imaging import ProbMask
from .mil import bags_for_box, mil_loss
from .rng import stream
from .training import LossWeights, crf_self_training_loss

REL_TOL_SINGLE = 1e-5
REL_TOL_COMPOSED = 1e-4
_SCALE_FLOOR = 1e-5
_ABS_TOL = 1e-10


def central_difference(f: Callable[[np.ndarray], float], m0: np.ndarray, h: float = 1e-4) -> np.ndarray:
    grad = np.zeros_like(m0)
    it = np.nditer(m0, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        plus = m0.copy()
        minus = m0.copy()
        plus[idx] += h
        minus[idx] -= h
        grad[idx] = (f(plus) - f(minus)) / (2.0 * h)
        it.iternext()
    return grad


def max_mismatch(analytic: np.ndarray, fd: np.ndarray) -> float:
    """Worst elementwise error, expressed on the relative-tolerance scale.

    Entries where both gradients are below the scale floor are compared
    absolutely against ``_ABS_TOL`` and mapped onto the same scale so a
    single number can be thresholded against the relative tolerance.
    """
    scale = np.maximum(np.abs(analytic), np.abs(fd))
    diff = np.abs(analytic - fd)
    large = scale >= _SCALE_FLOOR
    worst = 0.0
    if large.any():
        worst = float(np.max(diff[large] / scale[large]))
    if (~large).any():
        worst = max(worst, float(np.max(diff[~large]) / _ABS_TOL) * REL_TOL_SINGLE)
    return worst


def _separate_bag_maxima(m: np.ndarray, box: BBox, gap: float = 8e-4) -> np.ndarray:
    """Nudge each row/column maximum clear of its runner-up.

    Central differences flip a bag's argmax when the top two values sit
    within the step size, so ties are perturbed away before checking.
    """
    m = m.copy()
    h, w = m.shape
    for _ in range(20):
        dirty = False
        for axis in (0, 1):
            order = np.sort(m, axis=axis)
            top = order.take(-1, axis=axis)
            second = order.take(-2, axis=axis) if m.shape[axis] > 1 else top - 2 * gap
            need = (top - second) < gap
            if need.any():
                dirty = True
                argmax = np.argmax(m, axis=axis)
                for k in np.nonzero(need)[0]:
                    idx = (argmax[k], k) if axis == 0 else (k, argmax[k])
                    m[idx] = min(m[idx] + gap, 0.98)
        if not dirty:
            return m
    raise RuntimeError("could not separate bag maxima")


@dataclass(frozen=True)
class GradCheckCase:
    name: str
    size: tuple[int, int]
    max_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance


def _random_instance(rng: np.random.Generator, min_size: int = 6, max_size: int = 12):
    h = int(rng.integers(min_size, max_size + 1))
    w = int(rng.integers(min_size, max_size + 1))
    x0 = float(rng.uniform(0.6, w / 2 - 0.5))
    x1 = float(rng.uniform(w / 2 + 0.5, w - 0.6))
    y0 = float(rng.uniform(0.6, h / 2 - 0.5))
    y1 = float(rng.uniform(h / 2 + 0.5, h - 0.6))
    box = BBox(x0, y0, x1, y1)
    m = _separate_bag_maxima(rng.uniform(0.05, 0.95, size=(h, w)), box)
    l = rng.uniform(0.0, 1.0, size=(h, w))
    return m, l, box, h, w


def check_mil(rng: np.random.Generator, inject_error: bool = False) -> GradCheckCase:
    m, _, box, h, w = _random_instance(rng)
    bags = bags_for_box(box, w, h)
    _, grad = mil_loss(ProbMask(m), bags)
    if inject_error:
        grad = grad + 1e-3
    fd = central_difference(lambda a: mil_loss(ProbMask(a), bags)[0], m)
    return GradCheckCase("mil", (h, w), max_mismatch(grad, fd), REL_TOL_SINGLE)


def check_crf_dice(rng: np.random.Generator, inject_error: bool = False) -> GradCheckCase:
    m, l, _, h, w = _random_instance(rng)
    label = ProbMask(l)
    _, grad = crf_self_training_loss(ProbMask(m), label)
    if inject_error:
        grad = grad + 1e-3
    fd = central_difference(lambda a: crf_self_training_loss(ProbMask(a), label)[0], m)
    return GradCheckCase("crf_dice", (h, w), max_mismatch(grad, fd), REL_TOL_SINGLE)


def check_composed(rng: np.random.Generator, weights: LossWeights | None = None,
                   inject_error: bool = False) -> GradCheckCase:
    """Weighted-sum gradient against a frozen pseudo-label."""
    weights = weights or LossWeights()
    m, l, box, h, w = _random_instance(rng)
    bags = bags_for_box(box, w, h)
    label = ProbMask(l)

    def loss_of(a: np.ndarray) -> float:
        return (
            weights.alpha_mil * mil_loss(ProbMask(a), bags)[0]
            + weights.alpha_crf * crf_self_training_loss(ProbMask(a), label)[0]
        )

    grad = (
        weights.alpha_mil * mil_loss(ProbMask(m), bags)[1]
        + weights.alpha_crf * crf_self_training_loss(ProbMask(m), label)[1]
    )
    if inject_error:
        grad = grad + 1e-3
    fd = central_difference(loss_of, m)
    return GradCheckCase("composed", (h, w), max_mismatch(grad, fd), REL_TOL_COMPOSED)


def run_checks(seed: int, count: int, inject_error: bool = False) -> dict:
    """Run ``count`` seeded instances of every check; returns a JSON-able report."""
    if count < 1:
        raise ValueError(f"instance count must be >= 1, got {count}")
    cases: list[GradCheckCase] = []
    for i in range(count):
        cases.append(check_mil(stream(seed, 0, i), inject_error=inject_error))
        cases.append(check_crf_dice(stream(seed, 1, i), inject_error=inject_error))
        cases.append(check_composed(stream(seed, 2, i), inject_error=inject_error))
    summary = {}
    for name in ("mil", "crf_dice", "composed"):
        sub = [c for c in cases if c.name == name]
        summary[name] = {
            "instances": len(sub),
            "max_error": max(c.max_error for c in sub),
            "tolerance": sub[0].tolerance,
            "pass": all(c.passed for c in sub),
        }
    return {"seed": seed, "count": count, "checks": summary, "pass": all(v["pass"] for v in summary.values())}
