import os
import csv
import json
import logging
from typing import List, Dict, Any, Optional, Tuple, Union

import pandas as pd

from devanagari_clf.errors import DatasetError, DatasetNotFoundError, InputError, RecordIssue, SchemaMismatchError
from devanagari_clf.models.schemas import (
    ClassDistribution, DataConfig, DataFormat, DatasetSplit, LabeledExample, LabelSchema, SplitName, TaskId
)

logger = logging.getLogger(__name__)

# Official per-split class counts of the shared-task data, in label-code order
REFERENCE_DISTRIBUTIONS: Dict[TaskId, Dict[SplitName, List[int]]] = {
    TaskId.A: {
        SplitName.TRAIN: [12544, 11034, 10996, 10184, 7664],
        SplitName.DEV: [2688, 2364, 2356, 2182, 1643],
        SplitName.TEST: [2688, 2365, 2356, 2183, 1642],
    },
    TaskId.B: {
        SplitName.TRAIN: [16805, 2214],
        SplitName.DEV: [3602, 474],
        SplitName.TEST: [3601, 475],
    },
    TaskId.C: {
        SplitName.TRAIN: [1074, 856, 284],
        SplitName.DEV: [230, 183, 61],
        SplitName.TEST: [230, 184, 61],
    },
}

_SEPARATORS = {DataFormat.CSV: ",", DataFormat.TSV: "\t"}


class DatasetAccessAudit:
    """Records every split read from disk, so phases can prove they never touched test"""

    def __init__(self):
        self.reads: List[Tuple[str, str]] = []

    def record(self, split_name: SplitName, path: str):
        self.reads.append((split_name.value, os.path.abspath(path)))

    def splits_read(self) -> List[str]:
        return [name for name, _ in self.reads]

    def reset(self):
        self.reads.clear()


access_audit = DatasetAccessAudit()


def _read_records(path: str, fmt: DataFormat) -> List[Tuple[int, Dict[str, Any]]]:
    """Return (line number, record) pairs; records keep their original field names"""
    if fmt == DataFormat.JSONL:
        records = []
        with open(path, "r", encoding="utf-8") as f:
            for line_no, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as e:
                    obj = {"__error__": f"invalid JSON: {e.msg}"}
                if not isinstance(obj, dict):
                    obj = {"__error__": "JSONL record is not an object"}
                records.append((line_no, obj))
        return records

    records = []
    with open(path, "r", encoding="utf-8-sig", newline="") as f:
        reader = csv.reader(f, delimiter=_SEPARATORS[fmt])
        columns: Optional[List[str]] = None
        text_col = label_col = None
        previous_end = 0
        for row in reader:
            # A quoted field may span lines, so a record starts just after the previous one ended
            start, previous_end = previous_end + 1, reader.line_num
            if not row:
                continue
            if columns is None:
                columns = row
                text_col, label_col = _pick_columns(columns)
                continue
            values = dict(zip(columns, row))
            record = {"text": values.get(text_col, "")}
            if label_col is not None:
                record["label"] = values.get(label_col, "")
            records.append((start, record))
    if columns is None:
        raise InputError(f"dataset {path} has no header row")
    return records


def _pick_columns(columns: List[str]) -> Tuple[Optional[str], Optional[str]]:
    """Named text/label columns win; otherwise text is the first column that is not the label"""
    label_col = "label" if "label" in columns else None
    if "text" in columns:
        text_col = "text"
    else:
        rest = [c for c in columns if c != label_col]
        text_col = rest[0] if rest else None
    if label_col is None:
        rest = [c for c in columns if c != text_col]
        label_col = rest[0] if rest else None
    return text_col, label_col


def _parse_label(raw: Any, schema: LabelSchema) -> int:
    if isinstance(raw, bool) or raw is None:
        raise ValueError("missing label")
    if isinstance(raw, float):
        if not raw.is_integer():
            raise ValueError(f"label is not an integer code: {raw}")
        raw = int(raw)
    if isinstance(raw, int):
        code = raw
    else:
        value = str(raw).strip()
        if not value:
            raise ValueError("missing label")
        try:
            code = int(value)
        except ValueError:
            code = schema.code_of(value)
            if code is None:
                raise ValueError(f"unknown label string: {value!r}")
    if not schema.is_valid(code):
        raise ValueError(f"label code out of range: {code}")
    return code


def load_dataset_with_issues(
    path: str,
    format: Union[DataFormat, str],
    schema: LabelSchema,
    has_labels: bool,
    name: Union[SplitName, str] = SplitName.TRAIN,
) -> Tuple[DatasetSplit, List[RecordIssue]]:
    """Lenient loader: every record becomes either an example or an issue"""
    fmt = DataFormat(format)
    split_name = SplitName(name)
    if not os.path.isfile(path):
        raise DatasetNotFoundError(path)
    try:
        records = _read_records(path, fmt)
    except (OSError, UnicodeDecodeError, csv.Error) as e:
        logger.error(f"Error reading dataset {path}: {e}")
        raise InputError(f"unreadable dataset {path}: {e}") from e
    access_audit.record(split_name, path)

    examples: List[LabeledExample] = []
    issues: List[RecordIssue] = []
    for line_no, record in records:
        if "__error__" in record:
            issues.append(RecordIssue(line=line_no, message=record["__error__"]))
            continue
        text = record.get("text")
        if not isinstance(text, str) or not text.strip():
            issues.append(RecordIssue(line=line_no, message="empty text"))
            continue
        label = None
        if has_labels:
            try:
                label = _parse_label(record.get("label"), schema)
            except ValueError as e:
                issues.append(RecordIssue(line=line_no, message=str(e)))
                continue
        examples.append(LabeledExample(text=text, label=label))

    split = DatasetSplit(name=split_name, label_schema=schema, examples=examples)
    logger.info(f"Loaded {split_name.value} split from {path}: {len(examples)} examples, {len(issues)} rejected")
    return split, issues


def load_dataset(
    path: str,
    format: Union[DataFormat, str],
    schema: LabelSchema,
    has_labels: bool,
    name: Union[SplitName, str] = SplitName.TRAIN,
) -> DatasetSplit:
    """Load a split, failing with every bad record's line number if any record is invalid"""
    split, issues = load_dataset_with_issues(path, format, schema, has_labels, name)
    if issues:
        logger.error(f"Dataset {path} has {len(issues)} invalid record(s)")
        raise DatasetError(path, issues)
    return split


class CorpusReader:
    """Loads the configured train/dev/test files for one task"""

    def __init__(self, data_config: DataConfig, schema: LabelSchema):
        self.data_config = data_config
        self.schema = schema

    def path(self, split_name: Union[SplitName, str]) -> Optional[str]:
        split_name = SplitName(split_name)
        return {
            SplitName.TRAIN: self.data_config.train,
            SplitName.DEV: self.data_config.dev,
            SplitName.TEST: self.data_config.test,
        }[split_name]

    def has_labels(self, split_name: Union[SplitName, str]) -> bool:
        return self.data_config.test_labeled if SplitName(split_name) == SplitName.TEST else True

    def load(self, split_name: Union[SplitName, str]) -> DatasetSplit:
        split_name = SplitName(split_name)
        path = self.path(split_name)
        if path is None:
            raise InputError(f"no {split_name.value} dataset configured")
        try:
            return load_dataset(path, self.data_config.format, self.schema, self.has_labels(split_name), split_name)
        except Exception as e:
            logger.error(f"Error loading {split_name.value} split: {e}")
            raise


def save_dataset(split: DatasetSplit, path: str, format: Union[DataFormat, str]):
    """Write a split as UTF-8 with LF line endings; labels are written as codes"""
    fmt = DataFormat(format)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    labeled = split.is_labeled and len(split) > 0
    if fmt == DataFormat.JSONL:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for example in split.examples:
                record: Dict[str, Any] = {"text": example.text}
                if example.label is not None:
                    record["label"] = example.label
                f.write(json.dumps(record, ensure_ascii=False) + "\n")
        return
    frame = pd.DataFrame({"text": split.texts})
    if labeled:
        frame["label"] = [int(label) for label in split.labels]
    # Texts are always quoted so embedded CR, LF and edge whitespace survive a reload
    frame.to_csv(
        path,
        sep=_SEPARATORS[fmt],
        index=False,
        encoding="utf-8",
        lineterminator="\n",
        quoting=csv.QUOTE_NONNUMERIC,
    )


def class_distribution(split: DatasetSplit, schema: LabelSchema) -> ClassDistribution:
    """Per-label counts, zero-count labels included"""
    counts = {code: 0 for code in range(schema.num_classes)}
    for i, example in enumerate(split.examples):
        if example.label is None:
            raise InputError(f"{split.name.value} example {i} is unlabeled")
        if not schema.is_valid(example.label):
            raise SchemaMismatchError(f"label {example.label} not in task {schema.task_id.value} schema")
        counts[example.label] += 1
    return ClassDistribution(counts=counts, total=len(split))


def merge_splits(a: DatasetSplit, b: DatasetSplit) -> DatasetSplit:
    """Concatenate a then b; the result keeps a's split name"""
    if a.label_schema != b.label_schema:
        raise SchemaMismatchError(
            f"cannot merge task {a.label_schema.task_id.value} with task {b.label_schema.task_id.value}"
        )
    if not (a.is_labeled and b.is_labeled):
        raise InputError("only labeled splits can be merged")
    return DatasetSplit(name=a.name, label_schema=a.label_schema, examples=list(a.examples) + list(b.examples))


def class_weights(dist: ClassDistribution) -> Dict[int, float]:
    """Inverse-frequency weights total / (num_classes * count_c); their frequency-weighted mean is 1"""
    empty = [code for code, count in dist.counts.items() if count <= 0]
    if empty:
        raise InputError(f"cannot weight classes with zero examples: {empty}")
    num_classes = len(dist.counts)
    return {code: dist.total / (num_classes * count) for code, count in sorted(dist.counts.items())}


def audit_distribution(
    dist: ClassDistribution, reference: List[int], schema: Optional[LabelSchema] = None
) -> List[str]:
    """Compare counts with a reference list in code order; an empty list means they match"""
    problems = []
    if len(reference) != len(dist.counts):
        return [f"reference has {len(reference)} classes, distribution has {len(dist.counts)}"]
    for code, expected in enumerate(reference):
        actual = dist.counts.get(code, 0)
        if actual != expected:
            label = schema.name_of(code) if schema else str(code)
            problems.append(f"{label}: expected {expected}, found {actual}")
    if dist.total != sum(reference):
        problems.append(f"total: expected {sum(reference)}, found {dist.total}")
    return problems


def distribution_table(distributions: Dict[str, ClassDistribution], schema: LabelSchema) -> pd.DataFrame:
    """Class x split count table with a Total row"""
    data = {
        split_name: [dist.counts.get(code, 0) for code in range(schema.num_classes)] + [dist.total]
        for split_name, dist in distributions.items()
    }
    return pd.DataFrame(data, index=list(schema.labels) + ["Total"])
