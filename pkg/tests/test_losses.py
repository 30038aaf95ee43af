import math

import numpy as np
import pytest
from pydantic import ValidationError

from devanagari_clf.errors import LossError
from devanagari_clf.models.schemas import LossKind, LossSpec
from devanagari_clf.utils.losses import batch_loss, loss, softmax

CE = LossSpec(kind=LossKind.CE)


def _focal(alpha=0.35, gamma=4.0):
    return LossSpec(kind=LossKind.FOCAL, alpha=alpha, gamma=gamma)


def _random_cases(rng, count):
    for _ in range(count):
        num_classes = int(rng.integers(2, 6))
        yield rng.normal(0, 3, size=num_classes), int(rng.integers(num_classes))


def _numeric_grad(spec, logits, target, h=1e-5):
    grad = np.zeros_like(logits)
    for j in range(len(logits)):
        up, down = logits.copy(), logits.copy()
        up[j] += h
        down[j] -= h
        grad[j] = (loss(spec, up, target).value - loss(spec, down, target).value) / (2 * h)
    return grad


def test_softmax_examples():
    np.testing.assert_allclose(softmax([0.0, 0.0]), [0.5, 0.5], atol=1e-15)
    np.testing.assert_allclose(softmax([1000.0, 0.0]), [1.0, 0.0], atol=1e-12)
    probs = softmax(np.random.default_rng(0).normal(0, 50, size=(100, 5)))
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)


def test_softmax_rejects_non_finite():
    with pytest.raises(LossError):
        softmax([0.0, math.nan])
    with pytest.raises(LossError):
        softmax([math.inf, 0.0])


def test_ce_uniform_two_classes():
    result = loss(CE, [0.0, 0.0], 0)
    assert result.value == pytest.approx(math.log(2), abs=1e-15)
    np.testing.assert_allclose(result.grad_logits, [-0.5, 0.5], atol=1e-15)


def test_focal_point_value():
    result = loss(_focal(0.35, 4.0), [0.0, 0.0], 0)
    assert result.value == pytest.approx(0.35 * 0.5 ** 4 * math.log(2), abs=1e-12)
    assert result.value == pytest.approx(0.0151626, abs=1e-6)


def test_focal_without_focusing_equals_ce():
    rng = np.random.default_rng(1)
    plain = _focal(alpha=1.0, gamma=0.0)
    for logits, target in _random_cases(rng, 1000):
        assert abs(loss(plain, logits, target).value - loss(CE, logits, target).value) <= 1e-12


def test_focal_gamma_zero_scales_ce():
    rng = np.random.default_rng(2)
    for logits, target in _random_cases(rng, 200):
        alpha = float(rng.uniform(0.05, 1.0))
        expected = alpha * loss(CE, logits, target).value
        assert loss(_focal(alpha, 0.0), logits, target).value == pytest.approx(expected, rel=1e-12, abs=1e-15)


def test_focal_to_ce_ratio():
    alpha, gamma = 0.35, 4.0
    previous = math.inf
    for margin in np.linspace(-3, 3, 25):
        logits = np.array([margin, 0.0, 0.0])
        p_t = softmax(logits)[0]
        ratio = loss(_focal(alpha, gamma), logits, 0).value / loss(CE, logits, 0).value
        assert ratio == pytest.approx(alpha * (1 - p_t) ** gamma, rel=1e-9)
        assert ratio < previous
        previous = ratio


def test_weighted_ce_with_unit_weights_equals_ce():
    spec = LossSpec(kind=LossKind.WEIGHTED_CE, weights={0: 1.0, 1: 1.0, 2: 1.0})
    rng = np.random.default_rng(3)
    for _ in range(100):
        logits = rng.normal(0, 2, size=3)
        target = int(rng.integers(3))
        assert loss(spec, logits, target).value == loss(CE, logits, target).value


def test_weighted_ce_scales_by_target_weight():
    spec = LossSpec(kind=LossKind.WEIGHTED_CE, weights={0: 0.5, 1: 3.0})
    logits = np.array([0.2, -0.4])
    assert loss(spec, logits, 1).value == pytest.approx(3.0 * loss(CE, logits, 1).value, rel=1e-12)


@pytest.mark.parametrize("spec", [
    CE,
    LossSpec(kind=LossKind.WEIGHTED_CE, weights={0: 0.4, 1: 2.5, 2: 1.0, 3: 0.7, 4: 1.3}),
    _focal(0.35, 4.0),
    _focal(0.8, 0.5),
], ids=["ce", "weighted_ce", "focal", "focal-fractional-gamma"])
def test_gradient_matches_finite_differences(spec):
    rng = np.random.default_rng(4)
    for _ in range(100):
        num_classes = 5 if spec.kind == LossKind.WEIGHTED_CE else int(rng.integers(2, 6))
        logits = rng.normal(0, 2, size=num_classes)
        target = int(rng.integers(num_classes))
        analytic = loss(spec, logits, target).grad_logits
        numeric = _numeric_grad(spec, logits, target)
        scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-7)
        assert np.linalg.norm(analytic - numeric) / scale < 1e-4


@pytest.mark.parametrize("spec", [CE, _focal(0.35, 4.0), _focal(1.0, 2.0)])
def test_loss_decreases_as_target_logit_grows(spec):
    values = [loss(spec, [z, 0.5, -0.5], 0).value for z in np.linspace(-5, 5, 41)]
    assert all(later < earlier for earlier, later in zip(values, values[1:]))


@pytest.mark.parametrize("spec", [
    CE, LossSpec(kind=LossKind.WEIGHTED_CE, weights={0: 2.0, 1: 0.5}), _focal(0.35, 4.0)
])
def test_confident_correct_prediction_costs_nothing(spec):
    result = loss(spec, [50.0, -50.0], 0)
    assert 0.0 <= result.value <= 1e-9
    assert np.all(np.isfinite(result.grad_logits))


def test_vanishing_target_probability_is_clamped():
    result = loss(CE, [0.0, -100.0], 1)
    assert result.clamped
    assert result.value == pytest.approx(-math.log(1e-12))
    assert not loss(CE, [0.0, 0.0], 1).clamped


def test_batch_of_one_equals_single():
    single = loss(_focal(), [0.3, -0.2, 1.0], 2)
    batch = batch_loss(_focal(), [[0.3, -0.2, 1.0]], [2])
    assert batch.value == single.value
    np.testing.assert_array_equal(batch.grad_logits[0], single.grad_logits)


def test_batch_is_mean():
    rng = np.random.default_rng(5)
    logits = rng.normal(size=(3, 4))
    targets = [0, 3, 1]
    singles = [loss(CE, row, t) for row, t in zip(logits, targets)]
    batch = batch_loss(CE, logits, targets)
    assert batch.value == pytest.approx(sum(s.value for s in singles) / 3, rel=1e-12)
    np.testing.assert_allclose(batch.grad_logits, np.stack([s.grad_logits for s in singles]) / 3, rtol=1e-12)
    duplicated = batch_loss(CE, np.vstack([logits[:1], logits[:1]]), [0, 0])
    assert duplicated.value == pytest.approx(singles[0].value, rel=1e-12)


def test_batch_rejects_empty_and_bad_targets():
    with pytest.raises(LossError):
        batch_loss(CE, np.zeros((0, 2)), [])
    with pytest.raises(LossError):
        loss(CE, [0.0, 0.0], 2)


def test_loss_spec_validation():
    with pytest.raises(ValidationError):
        LossSpec(kind=LossKind.FOCAL, alpha=0.35)
    with pytest.raises(ValidationError):
        LossSpec(kind=LossKind.FOCAL, alpha=0.35, gamma=4.0, weights={0: 1.0, 1: 2.0})
    with pytest.raises(ValidationError):
        LossSpec(kind=LossKind.FOCAL, alpha=1.5, gamma=1.0)
    with pytest.raises(ValidationError):
        LossSpec(kind=LossKind.FOCAL, alpha=0.5, gamma=-1.0)
    with pytest.raises(ValidationError):
        LossSpec(kind=LossKind.WEIGHTED_CE)
    with pytest.raises(ValidationError):
        LossSpec(kind=LossKind.CE, gamma=2.0)


def test_auto_weights_need_resolution():
    spec = LossSpec(kind=LossKind.WEIGHTED_CE, weights="auto")
    with pytest.raises(LossError):
        loss(spec, [0.0, 0.0], 0)


def test_per_class_alpha():
    spec = LossSpec(kind=LossKind.FOCAL, alpha={0: 0.25, 1: 0.75}, gamma=2.0)
    uniform = _focal(0.75, 2.0)
    assert loss(spec, [0.1, 0.4], 1).value == pytest.approx(loss(uniform, [0.1, 0.4], 1).value, rel=1e-12)
