"""Softmax linear classifier over hashed n-gram features.

Model file layout (JSON, UTF-8, keys sorted):
    {
      "format": "devclf-softmax", "format_version": 1,
      "checksum": sha256 hex of the canonical JSON of "payload",
      "payload": {
        "label_schema": {...}, "featurizer_config": {...},
        "num_classes": C, "dimension": D,
        "columns": [...],          # feature columns holding any non-zero weight
        "weights": base64 of float64 little-endian [C x len(columns)], row-major,
        "bias": base64 of float64 little-endian [C]
      }
    }
Columns absent from "columns" are exactly zero, so loading reproduces parameters bitwise.
"""

import base64
import hashlib
import json
import logging
import math
import os
from typing import List, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from config import Config
from devanagari_clf.errors import InputError, LossError, ModelFileError, SchemaMismatchError, TrainingError
from devanagari_clf.models.schemas import (
    ClassDistribution, DatasetSplit, FeaturizerConfig, LabelSchema, LossKind, LossSpec, LRSchedule, Prediction,
    TaskId, TrainConfig
)
from devanagari_clf.services.corpus import class_distribution, class_weights
from devanagari_clf.utils.featurizer import featurize, featurize_split, to_matrix
from devanagari_clf.utils.losses import batch_loss, softmax

logger = logging.getLogger(__name__)


class SoftmaxClassifier(BaseModel):
    """Weights [num_classes x dimension] and bias [num_classes]; immutable once built"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    weights: np.ndarray
    bias: np.ndarray
    label_schema: LabelSchema
    featurizer_config: FeaturizerConfig

    @model_validator(mode="after")
    def _check_parameters(self) -> "SoftmaxClassifier":
        expected = (self.label_schema.num_classes, self.featurizer_config.dimension)
        if self.weights.shape != expected:
            raise ValueError(f"weights shape {self.weights.shape} != {expected}")
        if self.bias.shape != (self.label_schema.num_classes,):
            raise ValueError(f"bias shape {self.bias.shape} != ({self.label_schema.num_classes},)")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValueError("model parameters must be finite")
        self.weights.setflags(write=False)
        self.bias.setflags(write=False)
        return self

    @classmethod
    def zeros(cls, label_schema: LabelSchema, featurizer_config: FeaturizerConfig) -> "SoftmaxClassifier":
        return cls(
            weights=np.zeros((label_schema.num_classes, featurizer_config.dimension)),
            bias=np.zeros(label_schema.num_classes),
            label_schema=label_schema,
            featurizer_config=featurizer_config,
        )

    def predict(self, text: str) -> Prediction:
        return predict(self, text)


def _prediction_from_logits(logits: np.ndarray) -> Prediction:
    probs = softmax(logits)
    return Prediction(label=int(np.argmax(probs)), probabilities=[float(p) for p in probs])


def predict(model: SoftmaxClassifier, text: str) -> Prediction:
    """probabilities = softmax(W x + b); ties go to the lowest code"""
    vector = featurize(text, model.featurizer_config)
    indices = np.fromiter(vector.entries.keys(), dtype=np.int64, count=len(vector.entries))
    values = np.fromiter(vector.entries.values(), dtype=np.float64, count=len(vector.entries))
    logits = model.weights[:, indices] @ values + model.bias
    return _prediction_from_logits(logits)


def predict_split(model: SoftmaxClassifier, split: DatasetSplit) -> List[Prediction]:
    check_schema(model, split.label_schema)
    return [predict(model, text) for text in split.texts]


def check_schema(model: SoftmaxClassifier, schema: Union[LabelSchema, TaskId, str]):
    task_id = schema.task_id if isinstance(schema, LabelSchema) else TaskId(schema)
    if model.label_schema.task_id != task_id:
        raise SchemaMismatchError(
            f"model was trained for task {model.label_schema.task_id.value}, not task {task_id.value}"
        )


def learning_rate_at(config: TrainConfig, step: int, total_steps: int) -> float:
    """Constant, or linear warmup to the configured rate followed by linear decay to 0"""
    if config.lr_schedule == LRSchedule.CONSTANT:
        return config.learning_rate
    warmup = min(config.warmup_steps, total_steps)
    if step < warmup:
        return config.learning_rate * (step + 1) / warmup
    remaining = total_steps - warmup
    return config.learning_rate * max(0.0, (total_steps - step) / remaining) if remaining > 0 else 0.0


def resolve_loss_spec(spec: LossSpec, distribution: Optional[ClassDistribution] = None) -> LossSpec:
    """Replace weights="auto" with inverse-frequency weights of the given distribution"""
    if spec.kind != LossKind.WEIGHTED_CE or spec.weights != "auto":
        return spec
    if distribution is None:
        raise LossError("weights='auto' needs the training class distribution")
    weights = class_weights(distribution)
    logger.info(f"Resolved automatic class weights: {weights}")
    return spec.model_copy(update={"weights": weights})


class Trainer:
    """Mini-batch gradient descent with decoupled weight decay"""

    def __init__(self, config: TrainConfig, featurizer_config: Optional[FeaturizerConfig] = None):
        self.config = config
        self.featurizer_config = featurizer_config or FeaturizerConfig()
        self.epoch_losses: List[float] = []

    @property
    def seed(self) -> int:
        return self.config.seed if self.config.seed is not None else Config.get_seed()

    def fit(self, split: DatasetSplit) -> SoftmaxClassifier:
        if len(split) == 0:
            raise InputError("cannot train on an empty split")
        if not split.is_labeled:
            raise InputError(f"{split.name.value} split has unlabeled examples")

        schema = split.label_schema
        spec = resolve_loss_spec(self.config.loss, class_distribution(split, schema))
        X = to_matrix(featurize_split(split, self.featurizer_config), self.featurizer_config.dimension)
        y = np.asarray(split.labels, dtype=np.int64)
        n = len(y)

        weights = np.zeros((schema.num_classes, self.featurizer_config.dimension))
        bias = np.zeros(schema.num_classes)
        steps_per_epoch = math.ceil(n / self.config.batch_size)
        total_steps = steps_per_epoch * self.config.epochs
        rng = np.random.default_rng(self.seed)
        decay = self.config.weight_decay
        self.epoch_losses = []

        logger.info(
            f"Training on {n} examples ({schema.task_id.value}, loss={spec.kind.value}, "
            f"epochs={self.config.epochs}, steps={total_steps}, seed={self.seed})"
        )
        step = 0
        for epoch in range(self.config.epochs):
            order = rng.permutation(n)
            for start in range(0, n, self.config.batch_size):
                batch = order[start:start + self.config.batch_size]
                xb = X[batch]
                logits = np.asarray(xb @ weights.T) + bias
                value = batch_loss(spec, logits, y[batch])
                if not math.isfinite(value.value):
                    logger.error(f"Non-finite training loss at epoch {epoch}, step {step}")
                    raise TrainingError(f"non-finite loss {value.value}", epoch=epoch, step=step)
                grad_w = np.asarray(xb.T @ value.grad_logits).T
                grad_b = value.grad_logits.sum(axis=0)
                lr = learning_rate_at(self.config, step, total_steps)
                weights -= lr * (grad_w + decay * weights)
                bias -= lr * (grad_b + decay * bias)
                step += 1

            epoch_loss = batch_loss(spec, np.asarray(X @ weights.T) + bias, y).value
            if not math.isfinite(epoch_loss):
                logger.error(f"Non-finite epoch loss at epoch {epoch}")
                raise TrainingError(f"non-finite loss {epoch_loss}", epoch=epoch, step=step)
            self.epoch_losses.append(epoch_loss)
            logger.info(f"Epoch {epoch + 1}/{self.config.epochs}: loss={epoch_loss:.6f}")

        return SoftmaxClassifier(
            weights=weights, bias=bias, label_schema=schema, featurizer_config=self.featurizer_config
        )


def train(
    split: DatasetSplit, config: TrainConfig, featurizer_config: Optional[FeaturizerConfig] = None
) -> SoftmaxClassifier:
    return Trainer(config, featurizer_config).fit(split)


def _encode(array: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(array, dtype="<f8").tobytes()).decode("ascii")


def _decode(text: str, shape) -> np.ndarray:
    return np.frombuffer(base64.b64decode(text), dtype="<f8").reshape(shape).astype(np.float64)


def _checksum(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def save_model(model: SoftmaxClassifier, path: str):
    """Write the model file (layout in the module docstring)"""
    columns = np.flatnonzero(np.any(model.weights != 0, axis=0))
    payload = {
        "label_schema": model.label_schema.model_dump(mode="json"),
        "featurizer_config": model.featurizer_config.model_dump(mode="json"),
        "num_classes": model.label_schema.num_classes,
        "dimension": model.featurizer_config.dimension,
        "columns": [int(c) for c in columns],
        "weights": _encode(model.weights[:, columns]),
        "bias": _encode(model.bias),
    }
    document = {
        "format": Config.MODEL_FORMAT,
        "format_version": Config.MODEL_FORMAT_VERSION,
        "checksum": _checksum(payload),
        "payload": payload,
    }
    try:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            json.dump(document, f, sort_keys=True, ensure_ascii=False, indent=1)
            f.write("\n")
        logger.info(f"Saved model to {path} ({len(columns)} non-zero columns)")
    except OSError as e:
        logger.error(f"Failed to save model to {path}: {e}")
        raise


def load_model(path: str, task_id: Optional[Union[TaskId, str]] = None) -> SoftmaxClassifier:
    """Read a model file, verifying format version, checksum and (optionally) task"""
    try:
        with open(path, "r", encoding="utf-8") as f:
            document = json.load(f)
    except FileNotFoundError as e:
        raise InputError(f"model file not found: {path}") from e
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as e:
        logger.error(f"Corrupt model file {path}: {e}")
        raise ModelFileError(f"corrupt model file {path}: {e}") from e

    if document.get("format") != Config.MODEL_FORMAT:
        raise ModelFileError(f"{path} is not a {Config.MODEL_FORMAT} model file")
    if document.get("format_version") != Config.MODEL_FORMAT_VERSION:
        raise ModelFileError(
            f"model format version {document.get('format_version')} != {Config.MODEL_FORMAT_VERSION}"
        )
    payload = document.get("payload")
    if not isinstance(payload, dict) or document.get("checksum") != _checksum(payload):
        raise ModelFileError(f"corrupt model file {path}: checksum mismatch")

    try:
        schema = LabelSchema.model_validate(payload["label_schema"])
        featurizer_config = FeaturizerConfig.model_validate(payload["featurizer_config"])
        num_classes, dimension = payload["num_classes"], payload["dimension"]
        columns = np.asarray(payload["columns"], dtype=np.int64)
        weights = np.zeros((num_classes, dimension))
        weights[:, columns] = _decode(payload["weights"], (num_classes, len(columns)))
        bias = _decode(payload["bias"], (num_classes,))
        model = SoftmaxClassifier(
            weights=weights, bias=bias, label_schema=schema, featurizer_config=featurizer_config
        )
    except (KeyError, ValueError) as e:
        logger.error(f"Invalid model payload in {path}: {e}")
        raise ModelFileError(f"corrupt model file {path}: {e}") from e

    if task_id is not None:
        check_schema(model, task_id)
    return model
