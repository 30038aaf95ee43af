import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from typing import List, Any, Optional, Protocol, Sequence, runtime_checkable

from pydantic import BaseModel, ConfigDict, Field, model_validator

from devanagari_clf.errors import EnsembleMemberError, SchemaMismatchError
from devanagari_clf.models.schemas import DatasetSplit, DecidedBy, LabelSchema, Prediction, VoteOutcome

logger = logging.getLogger(__name__)


@runtime_checkable
class Predictor(Protocol):
    label_schema: LabelSchema

    def predict(self, text: str) -> Prediction:
        ...


class EnsembleSpec(BaseModel):
    """Ordered members plus the member consulted when no label has a unique top vote"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    members: List[Any] = Field(min_length=2)
    fallback_index: int
    names: Optional[List[str]] = None
    max_workers: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _check_members(self) -> "EnsembleSpec":
        if not 0 <= self.fallback_index < len(self.members):
            raise ValueError(f"fallback_index {self.fallback_index} out of range for {len(self.members)} members")
        if self.names is not None and len(self.names) != len(self.members):
            raise ValueError("names must match members one to one")
        for i, member in enumerate(self.members):
            if not isinstance(member, Predictor):
                raise ValueError(f"member {i} has no predict()/label_schema")
        schemas = {member.label_schema.task_id for member in self.members}
        if len(schemas) != 1:
            raise SchemaMismatchError(f"ensemble members disagree on task: {sorted(s.value for s in schemas)}")
        return self

    @property
    def label_schema(self) -> LabelSchema:
        return self.members[0].label_schema

    def member_name(self, index: int) -> str:
        return self.names[index] if self.names else f"member-{index}"

    @property
    def fallback_name(self) -> str:
        return self.member_name(self.fallback_index)

    def decide(self, text: str) -> VoteOutcome:
        return ensemble_predict(self, text)

    def decide_split(self, split: DatasetSplit) -> List[VoteOutcome]:
        return ensemble_predict_split(self, split)


def vote(predictions: Sequence[int], fallback_index: int) -> VoteOutcome:
    """Unique plurality wins; any tie at the top count defers to predictions[fallback_index]"""
    if not predictions:
        raise ValueError("vote needs at least one prediction")
    if not 0 <= fallback_index < len(predictions):
        raise ValueError(f"fallback_index {fallback_index} out of range for {len(predictions)} predictions")

    counts = Counter(int(p) for p in predictions)
    top = max(counts.values())
    leaders = [label for label, count in counts.items() if count == top]
    vote_counts = dict(sorted(counts.items()))
    if len(leaders) == 1:
        return VoteOutcome(label=leaders[0], vote_counts=vote_counts, decided_by=DecidedBy.MAJORITY)
    return VoteOutcome(
        label=int(predictions[fallback_index]), vote_counts=vote_counts, decided_by=DecidedBy.FALLBACK
    )


def _member_label(spec: EnsembleSpec, index: int, text: str) -> int:
    try:
        return spec.members[index].predict(text).label
    except Exception as e:
        logger.error(f"Ensemble {spec.member_name(index)} failed: {e}")
        raise EnsembleMemberError(index, e) from e


def ensemble_predict(spec: EnsembleSpec, text: str) -> VoteOutcome:
    """Collect member labels in member order, then vote"""
    indices = range(len(spec.members))
    if spec.max_workers > 1:
        with ThreadPoolExecutor(max_workers=spec.max_workers) as pool:
            labels = list(pool.map(lambda i: _member_label(spec, i, text), indices))
    else:
        labels = [_member_label(spec, i, text) for i in indices]
    return vote(labels, spec.fallback_index)


def ensemble_predict_split(spec: EnsembleSpec, split: DatasetSplit) -> List[VoteOutcome]:
    if split.label_schema.task_id != spec.label_schema.task_id:
        raise SchemaMismatchError(
            f"ensemble is for task {spec.label_schema.task_id.value}, split is task {split.label_schema.task_id.value}"
        )
    outcomes = [ensemble_predict(spec, text) for text in split.texts]
    if outcomes:
        fallbacks = sum(1 for o in outcomes if o.decided_by == DecidedBy.FALLBACK)
        logger.info(
            f"Ensemble decided {len(outcomes)} examples, {fallbacks} by fallback to {spec.fallback_name}"
        )
    return outcomes
