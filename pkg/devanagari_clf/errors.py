"""Exception hierarchy; the CLI maps InputError to exit 2 and everything else to exit 1"""

from typing import List, Optional
from pydantic import BaseModel


class RecordIssue(BaseModel):
    line: int
    message: str

    def __str__(self) -> str:
        return f"line {self.line}: {self.message}"


class PipelineError(Exception):
    """Base class for all pipeline errors"""
    exit_code = 1


class InputError(PipelineError):
    """Bad user input: files, config, labels"""
    exit_code = 2


class DatasetNotFoundError(InputError):
    def __init__(self, path: str):
        super().__init__(f"dataset not found: {path}")
        self.path = path


class DatasetError(InputError):
    def __init__(self, path: str, issues: List[RecordIssue]):
        preview = "; ".join(str(issue) for issue in issues[:5])
        more = f" (+{len(issues) - 5} more)" if len(issues) > 5 else ""
        super().__init__(f"{path}: {len(issues)} invalid record(s): {preview}{more}")
        self.path = path
        self.issues = issues


class ConfigError(InputError):
    pass


class SchemaMismatchError(InputError):
    pass


class LossError(PipelineError):
    pass


class TrainingError(PipelineError):
    def __init__(self, message: str, epoch: Optional[int] = None, step: Optional[int] = None):
        super().__init__(f"{message} (epoch={epoch}, step={step})")
        self.epoch = epoch
        self.step = step


class ModelFileError(PipelineError):
    pass


class EnsembleMemberError(PipelineError):
    def __init__(self, member_index: int, cause: Exception):
        super().__init__(f"ensemble member {member_index} failed: {cause}")
        self.member_index = member_index
        self.cause = cause


class PromptError(InputError):
    """Template or few-shot input problem, usually from the config prompts block"""


class MetricsError(PipelineError):
    pass
