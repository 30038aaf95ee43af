"""Cross-entropy, weighted cross-entropy and focal loss with analytic logit gradients.

For p = softmax(z) and target t, every loss is a scalar f(p_t):
    ce:          -log p_t
    weighted_ce: -w_t log p_t
    focal:       -a_t (1 - p_t)^g log p_t
and d f / d z_j = f'(p_t) p_t (delta_tj - p_j).
"""

import logging
from typing import Dict, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.special import softmax as _softmax

from config import Config
from devanagari_clf.errors import LossError
from devanagari_clf.models.schemas import LossKind, LossSpec

logger = logging.getLogger(__name__)


class LossValue(BaseModel):
    """Loss and its gradient; for batches, grad_logits is the gradient of the mean (one row per example)"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    value: float
    grad_logits: np.ndarray
    clamped: bool = False


def softmax(logits) -> np.ndarray:
    """Row-wise softmax with max subtraction"""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise LossError(f"non-finite logits: {logits}")
    return _softmax(logits, axis=-1)


def _class_vector(mapping: Dict[int, float], num_classes: int, what: str) -> np.ndarray:
    missing = [c for c in range(num_classes) if c not in mapping]
    if missing:
        raise LossError(f"{what} missing for classes {missing}")
    return np.array([mapping[c] for c in range(num_classes)], dtype=np.float64)


def _scale_per_example(spec: LossSpec, targets: np.ndarray, num_classes: int) -> np.ndarray:
    """The w_t / a_t multiplier of every example"""
    if spec.kind == LossKind.WEIGHTED_CE:
        if not isinstance(spec.weights, dict):
            raise LossError("weighted_ce weights must be resolved before use (got 'auto')")
        return _class_vector(spec.weights, num_classes, "class weights")[targets]
    if spec.kind == LossKind.FOCAL:
        if isinstance(spec.alpha, dict):
            return _class_vector(spec.alpha, num_classes, "focal alpha")[targets]
        return np.full(len(targets), float(spec.alpha))
    return np.ones(len(targets))


def per_example_losses(spec: LossSpec, logit_rows, targets: Sequence[int]):
    """Vectorised core: returns (values, grads, clamped_mask), gradients not averaged"""
    logits = np.atleast_2d(np.asarray(logit_rows, dtype=np.float64))
    targets = np.asarray(targets, dtype=np.int64)
    n, num_classes = logits.shape
    if len(targets) != n:
        raise LossError(f"{n} logit rows but {len(targets)} targets")
    if np.any(targets < 0) or np.any(targets >= num_classes):
        raise LossError(f"target out of range for {num_classes} classes: {targets}")

    probs = softmax(logits)
    rows = np.arange(n)
    p_t = probs[rows, targets]
    clamped = p_t < Config.PROB_CLAMP
    if np.any(clamped):
        logger.warning(f"clamped p_t to {Config.PROB_CLAMP} for {int(clamped.sum())} example(s)")
        p_t = np.where(clamped, Config.PROB_CLAMP, p_t)
    log_p = np.log(p_t)
    scale = _scale_per_example(spec, targets, num_classes)

    if spec.kind == LossKind.FOCAL and spec.gamma != 0:
        gamma = float(spec.gamma)
        one_minus = 1.0 - p_t
        modulator = one_minus ** gamma
        values = -scale * modulator * log_p
        # gamma * p_t * (1 - p_t)^(gamma - 1) * log p_t, written to stay finite at p_t = 1
        safe = np.where(one_minus > 0, one_minus, 1.0)
        focus = np.where(one_minus > 0, gamma * p_t * modulator * log_p / safe, 0.0)
        coeff = -scale * (modulator - focus)
    else:
        values = -scale * log_p
        coeff = -scale

    onehot = np.zeros_like(probs)
    onehot[rows, targets] = 1.0
    grads = coeff[:, None] * (onehot - probs)
    # Exact zero loss at p_t = 1 keeps -0.0 out of reported values
    values = np.where(values == 0.0, 0.0, values)
    return values, grads, clamped


def loss(spec: LossSpec, logits, target: int) -> LossValue:
    """Loss of one example"""
    values, grads, clamped = per_example_losses(spec, [logits], [target])
    return LossValue(value=float(values[0]), grad_logits=grads[0], clamped=bool(clamped[0]))


def batch_loss(spec: LossSpec, logit_rows, targets: Sequence[int]) -> LossValue:
    """Mean loss over a batch; gradient rows are those of the mean"""
    if len(targets) == 0:
        raise LossError("empty batch")
    values, grads, clamped = per_example_losses(spec, logit_rows, targets)
    n = len(values)
    return LossValue(value=float(values.mean()), grad_logits=grads / n, clamped=bool(clamped.any()))

