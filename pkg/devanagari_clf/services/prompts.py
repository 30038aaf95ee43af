import logging
import os
import re
from typing import Any, Dict, List, Optional, Union

from devanagari_clf.errors import InputError, PromptError
from devanagari_clf.models.schemas import DatasetSplit, FewShotExample, PromptMode, PromptTemplate, TaskId

logger = logging.getLogger(__name__)

TEMPLATE_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "prompts")
FEW_SHOT_SLOTS = 5

# {text}, {label}, {example_textN}, {example_textN_label}, or bare {} (positional: text, then label)
_PLACEHOLDER = re.compile(r"\{(text|label|example_text[1-9](?:_label)?)?\}")


def load_template(task_id: Union[TaskId, str]) -> PromptTemplate:
    """Read the checked-in template for a task, byte for byte"""
    task_id = TaskId(task_id)
    path = os.path.join(TEMPLATE_DIR, f"task_{task_id.value.lower()}.txt")
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            body = f.read()
    except OSError as e:
        logger.error(f"Missing prompt template {path}: {e}")
        raise PromptError(f"prompt template for task {task_id.value} not found: {path}") from e
    return PromptTemplate(task_id=task_id, body=body)


def placeholders(template: PromptTemplate) -> List[str]:
    """Placeholder names in order of appearance; bare {} is reported as ''"""
    return [match.group(1) or "" for match in _PLACEHOLDER.finditer(template.body)]


def render(
    template: PromptTemplate,
    text: str,
    label: Optional[str] = None,
    examples: Optional[List[FewShotExample]] = None,
) -> str:
    """Fill placeholders in one pass; label=None leaves the response slot empty (inference mode)"""
    values: Dict[str, str] = {"text": text, "label": label if label is not None else ""}
    if examples is not None:
        if template.task_id == TaskId.B and len(examples) != FEW_SHOT_SLOTS:
            raise PromptError(f"task B takes exactly {FEW_SHOT_SLOTS} examples, got {len(examples)}")
        for i, example in enumerate(examples, start=1):
            values[f"example_text{i}"] = example.text
            values[f"example_text{i}_label"] = example.label
    positional = iter(["text", "label"])

    def substitute(match: re.Match) -> str:
        name = match.group(1)
        if name is None:
            name = next(positional, None)
            if name is None:
                raise PromptError("template has more positional placeholders than (text, label)")
        if name not in values:
            raise PromptError(f"unresolved placeholder {{{name}}} in task {template.task_id.value} template")
        return values[name]

    return _PLACEHOLDER.sub(substitute, template.body)


class PromptRenderer:
    """Renders one task's template over whole splits, reusing the loaded template"""

    def __init__(self, task_id: Union[TaskId, str], examples: Optional[List[FewShotExample]] = None):
        self.task_id = TaskId(task_id)
        self.examples = examples
        self._template: Optional[PromptTemplate] = None

    @property
    def template(self) -> PromptTemplate:
        if self._template is None:
            self._template = load_template(self.task_id)
        return self._template

    def render_split(self, split: DatasetSplit, mode: Union[PromptMode, str]) -> List[Dict[str, Any]]:
        """One record per example; train mode fills gold labels, inference leaves the response empty"""
        mode = PromptMode(mode)
        if mode == PromptMode.TRAIN and not split.is_labeled:
            raise InputError(f"{split.name.value} split is unlabeled; use inference mode")
        try:
            records = []
            for i, example in enumerate(split.examples):
                label = str(example.label) if mode == PromptMode.TRAIN else None
                prompt = render(self.template, example.text, label, self.examples)
                records.append({"index": i, "task": self.task_id.value, "prompt": prompt})
            return records
        except Exception as e:
            logger.error(f"Error rendering {mode.value} prompts for {split.name.value}: {e}")
            raise
