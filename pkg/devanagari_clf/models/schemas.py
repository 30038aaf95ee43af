from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import List, Dict, Any, Optional, Union, Literal
from enum import Enum
import math

from config import Config


class TaskId(str, Enum):
    A = "A"
    B = "B"
    C = "C"


class SplitName(str, Enum):
    TRAIN = "train"
    DEV = "dev"
    TEST = "test"


class DataFormat(str, Enum):
    CSV = "csv"
    TSV = "tsv"
    JSONL = "jsonl"


class LossKind(str, Enum):
    CE = "ce"
    WEIGHTED_CE = "weighted_ce"
    FOCAL = "focal"


class LRSchedule(str, Enum):
    CONSTANT = "constant"
    LINEAR = "linear"


class Normalization(str, Enum):
    NONE = "none"
    L2 = "l2"


class DecidedBy(str, Enum):
    MAJORITY = "majority"
    FALLBACK = "fallback"


class PromptMode(str, Enum):
    TRAIN = "train"
    INFERENCE = "inference"


# Label names in code order
TASK_LABELS: Dict[TaskId, List[str]] = {
    TaskId.A: ["Nepali", "Marathi", "Sanskrit", "Bhojpuri", "Hindi"],
    TaskId.B: ["Non-hate", "Hate"],
    TaskId.C: ["Individual", "Organization", "Community"],
}


class LabelSchema(BaseModel):
    """Ordered label names of one task; a label's code is its position"""
    model_config = ConfigDict(frozen=True)

    task_id: TaskId
    labels: List[str]

    @model_validator(mode="after")
    def _check_labels(self) -> "LabelSchema":
        expected = TASK_LABELS[self.task_id]
        if self.labels != expected:
            raise ValueError(f"task {self.task_id.value} labels must be {expected}, got {self.labels}")
        if len({name.lower() for name in self.labels}) != len(self.labels):
            raise ValueError("label names must be unique")
        return self

    @classmethod
    def for_task(cls, task_id: Union[TaskId, str]) -> "LabelSchema":
        task_id = TaskId(task_id)
        return cls(task_id=task_id, labels=list(TASK_LABELS[task_id]))

    @property
    def num_classes(self) -> int:
        return len(self.labels)

    def is_valid(self, code: int) -> bool:
        return 0 <= code < self.num_classes

    def code_of(self, name: str) -> Optional[int]:
        """Case-insensitive lookup of a label name"""
        wanted = name.strip().lower()
        for code, label in enumerate(self.labels):
            if label.lower() == wanted:
                return code
        return None

    def name_of(self, code: int) -> str:
        return self.labels[code]


class LabeledExample(BaseModel):
    model_config = ConfigDict(frozen=True)

    text: str
    label: Optional[int] = None

    @field_validator("text")
    @classmethod
    def _non_empty(cls, value: str) -> str:
        if not value.strip():
            raise ValueError("empty text")
        return value


class DatasetSplit(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: SplitName
    label_schema: LabelSchema
    examples: List[LabeledExample] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_examples(self) -> "DatasetSplit":
        for i, example in enumerate(self.examples):
            if example.label is None:
                if self.name != SplitName.TEST:
                    raise ValueError(f"{self.name.value} example {i} has no label")
            elif not self.label_schema.is_valid(example.label):
                raise ValueError(f"example {i}: label code out of range: {example.label}")
        return self

    def __len__(self) -> int:
        return len(self.examples)

    @property
    def texts(self) -> List[str]:
        return [example.text for example in self.examples]

    @property
    def labels(self) -> List[Optional[int]]:
        return [example.label for example in self.examples]

    @property
    def is_labeled(self) -> bool:
        return all(example.label is not None for example in self.examples)


class ClassDistribution(BaseModel):
    model_config = ConfigDict(frozen=True)

    counts: Dict[int, int]
    total: int

    @model_validator(mode="after")
    def _check_total(self) -> "ClassDistribution":
        if any(count < 0 for count in self.counts.values()):
            raise ValueError("class counts must be non-negative")
        if self.total != sum(self.counts.values()):
            raise ValueError(f"total {self.total} != sum of counts {sum(self.counts.values())}")
        return self


class FeaturizerConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_min: int = Field(default=Config.NGRAM_MIN, ge=1)
    n_max: int = Field(default=Config.NGRAM_MAX, le=8)
    dimension: int = Config.FEATURE_DIMENSION
    normalize: Normalization = Normalization.L2
    lowercase: bool = False

    @model_validator(mode="after")
    def _check_ranges(self) -> "FeaturizerConfig":
        if self.n_max < self.n_min:
            raise ValueError(f"n_max ({self.n_max}) < n_min ({self.n_min})")
        # Powers of two below 2**10 are accepted so collision behaviour can be exercised
        if self.dimension < 2 or self.dimension & (self.dimension - 1):
            raise ValueError(f"dimension must be a power of two, got {self.dimension}")
        return self


class FeatureVector(BaseModel):
    model_config = ConfigDict(frozen=True)

    dimension: int
    entries: Dict[int, float] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_indices(self) -> "FeatureVector":
        for index in self.entries:
            if not 0 <= index < self.dimension:
                raise ValueError(f"index {index} outside dimension {self.dimension}")
        return self

    def norm(self) -> float:
        return math.sqrt(sum(value * value for value in self.entries.values()))


class LossSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: LossKind = LossKind.CE
    weights: Optional[Union[Literal["auto"], Dict[int, float]]] = None
    alpha: Optional[Union[float, Dict[int, float]]] = None
    gamma: Optional[float] = None

    @model_validator(mode="after")
    def _check_kind(self) -> "LossSpec":
        if self.kind == LossKind.FOCAL:
            if self.alpha is None or self.gamma is None:
                raise ValueError("focal loss requires alpha and gamma")
            alphas = self.alpha.values() if isinstance(self.alpha, dict) else [self.alpha]
            if any(not 0 < a <= 1 for a in alphas):
                raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
            if self.gamma < 0:
                raise ValueError(f"gamma must be >= 0, got {self.gamma}")
            if self.weights is not None:
                raise ValueError("focal loss does not combine with class weights")
        elif self.kind == LossKind.WEIGHTED_CE:
            if self.weights is None:
                raise ValueError("weighted_ce requires weights (a mapping or 'auto')")
            if isinstance(self.weights, dict) and any(w <= 0 for w in self.weights.values()):
                raise ValueError("class weights must be positive")
            if self.alpha is not None or self.gamma is not None:
                raise ValueError("alpha/gamma only apply to focal loss")
        elif self.weights is not None or self.alpha is not None or self.gamma is not None:
            raise ValueError("plain ce takes no weights, alpha or gamma")
        return self


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    learning_rate: float = Field(default=Config.LEARNING_RATE, gt=0)
    epochs: int = Field(default=Config.EPOCHS, gt=0)
    batch_size: int = Field(default=Config.BATCH_SIZE, gt=0)
    lr_schedule: LRSchedule = LRSchedule.LINEAR
    warmup_steps: int = Field(default=0, ge=0)
    weight_decay: float = Field(default=Config.WEIGHT_DECAY, ge=0)
    seed: Optional[int] = Field(default=None, ge=0, lt=2 ** 64)
    loss: LossSpec = Field(default_factory=LossSpec)
    # Documentation-only values (e.g. the encoder fine-tuning settings); never read by training
    reference: Dict[str, Any] = Field(default_factory=dict)


class Prediction(BaseModel):
    model_config = ConfigDict(frozen=True)

    label: int
    probabilities: List[float]

    @model_validator(mode="after")
    def _check_argmax(self) -> "Prediction":
        if abs(sum(self.probabilities) - 1.0) > 1e-9:
            raise ValueError("probabilities must sum to 1")
        best = max(self.probabilities)
        if self.label != self.probabilities.index(best):
            raise ValueError("label must be the lowest-code argmax")
        return self


class VoteOutcome(BaseModel):
    model_config = ConfigDict(frozen=True)

    label: int
    vote_counts: Dict[int, int]
    decided_by: DecidedBy


class ConfusionMatrix(BaseModel):
    """counts[true][predicted]"""
    model_config = ConfigDict(frozen=True)

    label_schema: LabelSchema
    counts: List[List[int]]

    @model_validator(mode="after")
    def _check_square(self) -> "ConfusionMatrix":
        side = self.label_schema.num_classes
        if len(self.counts) != side or any(len(row) != side for row in self.counts):
            raise ValueError(f"confusion matrix must be {side}x{side}")
        if any(value < 0 for row in self.counts for value in row):
            raise ValueError("confusion counts must be non-negative")
        return self

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.counts)


class ClassMetrics(BaseModel):
    label: str
    precision: float = Field(ge=0.0, le=1.0)
    recall: float = Field(ge=0.0, le=1.0)
    f1: float = Field(ge=0.0, le=1.0)


class MetricsReport(BaseModel):
    per_class: List[ClassMetrics]
    macro_precision: float = Field(ge=0.0, le=1.0)
    macro_recall: float = Field(ge=0.0, le=1.0)
    macro_f1: float = Field(ge=0.0, le=1.0)
    micro_f1: float = Field(ge=0.0, le=1.0)
    support: List[int]


class PromptTemplate(BaseModel):
    model_config = ConfigDict(frozen=True)

    task_id: TaskId
    body: str


class FewShotExample(BaseModel):
    model_config = ConfigDict(frozen=True)

    text: str
    label: str

    @field_validator("text", "label")
    @classmethod
    def _non_empty(cls, value: str) -> str:
        if not value.strip():
            raise ValueError("few-shot example fields must be non-empty")
        return value


# Pipeline configuration file

class DataConfig(BaseModel):
    train: str
    dev: str
    test: Optional[str] = None
    format: DataFormat = DataFormat.CSV
    test_labeled: bool = False


class ModelConfig(BaseModel):
    name: str = Field(min_length=1)
    train: TrainConfig = Field(default_factory=TrainConfig)


class EnsembleConfig(BaseModel):
    name: str = Field(default="ensemble", min_length=1)
    members: List[str] = Field(min_length=2)
    fallback: Union[int, str]

    @model_validator(mode="after")
    def _check_fallback(self) -> "EnsembleConfig":
        if isinstance(self.fallback, int):
            if not 0 <= self.fallback < len(self.members):
                raise ValueError(f"ensemble {self.name}: fallback index out of range: {self.fallback}")
        elif self.fallback not in self.members:
            raise ValueError(f"ensemble {self.name}: fallback is not a member: {self.fallback}")
        return self

    def fallback_index(self) -> int:
        return self.fallback if isinstance(self.fallback, int) else self.members.index(self.fallback)

    @property
    def fallback_name(self) -> str:
        return self.members[self.fallback_index()]


class GridSearchConfig(BaseModel):
    alphas: List[float] = Field(default_factory=lambda: list(Config.ALPHA_GRID), min_length=1)
    gammas: List[float] = Field(default_factory=lambda: list(Config.GAMMA_GRID), min_length=1)
    model: Optional[str] = None


class PromptConfig(BaseModel):
    examples: Optional[List[FewShotExample]] = None


class PipelineConfig(BaseModel):
    config_version: int = Config.CONFIG_VERSION
    task: TaskId
    data: DataConfig
    featurizer: FeaturizerConfig = Field(default_factory=FeaturizerConfig)
    models: List[ModelConfig] = Field(min_length=1)
    # Several ensembles may share members and differ only in fallback
    ensembles: List[EnsembleConfig] = Field(default_factory=list)
    gridsearch: Optional[GridSearchConfig] = None
    prompts: PromptConfig = Field(default_factory=PromptConfig)
    output_dir: Optional[str] = None
    seed: Optional[int] = None
    max_workers: int = Field(default=1, ge=1)
    audit_reference: bool = False

    @model_validator(mode="before")
    @classmethod
    def _single_ensemble_block(cls, data: Any) -> Any:
        """Accept a lone "ensemble" object as a one-element "ensembles" list"""
        if isinstance(data, dict) and "ensemble" in data:
            data = dict(data)
            single = data.pop("ensemble")
            if "ensembles" in data:
                raise ValueError("use either 'ensemble' or 'ensembles', not both")
            data["ensembles"] = [] if single is None else [single]
        return data

    @model_validator(mode="after")
    def _check_references(self) -> "PipelineConfig":
        if self.config_version != Config.CONFIG_VERSION:
            raise ValueError(f"unsupported config_version {self.config_version}")
        names = [model.name for model in self.models]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate model names: {names}")
        ensemble_names = [ensemble.name for ensemble in self.ensembles]
        if len(set(ensemble_names)) != len(ensemble_names):
            raise ValueError(f"duplicate ensemble names: {ensemble_names}")
        clashes = sorted(set(ensemble_names) & set(names))
        if clashes:
            raise ValueError(f"ensemble names clash with model names: {clashes}")
        for ensemble in self.ensembles:
            unknown = [m for m in ensemble.members if m not in names]
            if unknown:
                raise ValueError(f"ensemble {ensemble.name} members not among models: {unknown}")
        if self.gridsearch is not None and self.gridsearch.model is not None:
            if self.gridsearch.model not in names:
                raise ValueError(f"grid search model not among models: {self.gridsearch.model}")
        return self

    @property
    def label_schema(self) -> LabelSchema:
        return LabelSchema.for_task(self.task)

    def get_model(self, name: str) -> ModelConfig:
        for model in self.models:
            if model.name == name:
                return model
        raise KeyError(name)

    def get_ensemble(self, name: str) -> EnsembleConfig:
        for ensemble in self.ensembles:
            if ensemble.name == name:
                return ensemble
        raise KeyError(name)
