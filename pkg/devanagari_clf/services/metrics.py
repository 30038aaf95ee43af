import json
import logging
import os
from typing import List, Dict, Any, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from devanagari_clf.errors import InputError, MetricsError
from devanagari_clf.models.schemas import ClassMetrics, ConfusionMatrix, DatasetSplit, LabelSchema, MetricsReport
from devanagari_clf.services.classifier import SoftmaxClassifier, predict_split
from devanagari_clf.services.ensemble import EnsembleSpec, ensemble_predict_split

logger = logging.getLogger(__name__)

RANK_KEYS = ("macro_f1", "micro_f1")


def confusion(gold: Sequence[int], pred: Sequence[int], schema: LabelSchema) -> ConfusionMatrix:
    """counts[g][p] over paired gold/predicted codes"""
    if len(gold) != len(pred):
        raise MetricsError(f"length mismatch: {len(gold)} gold vs {len(pred)} predicted")
    if len(gold) == 0:
        raise MetricsError("nothing to score")
    gold_arr = np.asarray(gold, dtype=np.int64)
    pred_arr = np.asarray(pred, dtype=np.int64)
    side = schema.num_classes
    for name, arr in (("gold", gold_arr), ("predicted", pred_arr)):
        bad = arr[(arr < 0) | (arr >= side)]
        if bad.size:
            raise MetricsError(f"invalid {name} code(s) for task {schema.task_id.value}: {sorted(set(bad.tolist()))}")
    counts = np.zeros((side, side), dtype=np.int64)
    np.add.at(counts, (gold_arr, pred_arr), 1)
    return ConfusionMatrix(label_schema=schema, counts=counts.tolist())


def _safe_ratio(numerator: np.ndarray, denominator: np.ndarray) -> np.ndarray:
    """Elementwise ratio with 0 wherever the denominator is 0"""
    out = np.zeros_like(numerator, dtype=np.float64)
    np.divide(numerator, denominator, out=out, where=denominator > 0)
    return out


def report(cm: ConfusionMatrix) -> MetricsReport:
    """Per-class precision/recall/F1, unweighted macro means, micro-F1 = accuracy"""
    counts = np.asarray(cm.counts, dtype=np.float64)
    total = counts.sum()
    if total == 0:
        raise MetricsError("empty confusion matrix")
    tp = np.diag(counts)
    precision = _safe_ratio(tp, counts.sum(axis=0))
    recall = _safe_ratio(tp, counts.sum(axis=1))
    f1 = _safe_ratio(2 * precision * recall, precision + recall)
    per_class = [
        ClassMetrics(label=name, precision=float(p), recall=float(r), f1=float(f))
        for name, p, r, f in zip(cm.label_schema.labels, precision, recall, f1)
    ]
    return MetricsReport(
        per_class=per_class,
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
        macro_f1=float(f1.mean()),
        micro_f1=float(tp.sum() / total),
        support=[int(s) for s in counts.sum(axis=1)],
    )


def evaluate(
    model_or_ensemble: Union[SoftmaxClassifier, EnsembleSpec], split: DatasetSplit
) -> Tuple[ConfusionMatrix, MetricsReport]:
    """Predict a labeled split and score it"""
    if not split.is_labeled:
        raise InputError(f"{split.name.value} split is not labeled; cannot evaluate")
    if isinstance(model_or_ensemble, EnsembleSpec):
        predicted = [outcome.label for outcome in ensemble_predict_split(model_or_ensemble, split)]
    else:
        predicted = [prediction.label for prediction in predict_split(model_or_ensemble, split)]
    cm = confusion(split.labels, predicted, split.label_schema)
    result = report(cm)
    logger.info(
        f"Evaluated {len(split)} {split.name.value} examples: macro_f1={result.macro_f1:.4f} micro_f1={result.micro_f1:.4f}"
    )
    return cm, result


def rank_models(reports: Dict[str, MetricsReport], key: str = "macro_f1") -> List[str]:
    """Names by descending key; equal scores in lexicographic name order"""
    if key not in RANK_KEYS:
        raise MetricsError(f"unknown ranking key {key!r}; expected one of {RANK_KEYS}")
    return sorted(reports, key=lambda name: (-getattr(reports[name], key), name))


def report_table(reports: Dict[str, MetricsReport]) -> pd.DataFrame:
    """Model | F1 | Recall | Precision (macro) plus micro-F1, one row per model"""
    rows = [
        {
            "Model": name,
            "F1": round(r.macro_f1, 4),
            "Recall": round(r.macro_recall, 4),
            "Precision": round(r.macro_precision, 4),
            "Micro-F1": round(r.micro_f1, 4),
        }
        for name, r in reports.items()
    ]
    return pd.DataFrame(rows, columns=["Model", "F1", "Recall", "Precision", "Micro-F1"])


def split_table(reports: Dict[str, MetricsReport]) -> pd.DataFrame:
    """Macro-F1 per model with dev and test side by side; reports are keyed <model>-<split>"""
    rows: Dict[str, Dict[str, Any]] = {}
    for key, r in reports.items():
        model, _, split = key.rpartition("-")
        if not model or split not in ("dev", "test"):
            continue
        row = rows.setdefault(model, {"Model": model, "Dev F1": None, "Test F1": None, "Test Micro-F1": None})
        if split == "dev":
            row["Dev F1"] = round(r.macro_f1, 4)
        else:
            row["Test F1"] = round(r.macro_f1, 4)
            row["Test Micro-F1"] = round(r.micro_f1, 4)
    columns = ["Model", "Dev F1", "Test F1", "Test Micro-F1"]
    return pd.DataFrame([rows[m] for m in sorted(rows)], columns=columns)


def format_report(name: str, result: MetricsReport) -> str:
    """Human-readable text: summary row followed by the per-class breakdown"""
    per_class = pd.DataFrame(
        [
            {"Class": c.label, "Precision": round(c.precision, 4), "Recall": round(c.recall, 4),
             "F1": round(c.f1, 4), "Support": s}
            for c, s in zip(result.per_class, result.support)
        ]
    )
    return (
        report_table({name: result}).to_string(index=False)
        + "\n\n"
        + per_class.to_string(index=False)
        + "\n"
    )


def confusion_frame(cm: ConfusionMatrix) -> pd.DataFrame:
    labels = cm.label_schema.labels
    frame = pd.DataFrame(cm.counts, index=labels, columns=labels)
    frame.index.name = "true\\predicted"
    return frame


class ReportStore:
    """Reads and writes the report files kept under one reports directory"""

    def __init__(self, reports_dir: str):
        self.reports_dir = reports_dir

    def path(self, name: str) -> str:
        return os.path.join(self.reports_dir, f"{name}.json")

    def exists(self, name: str) -> bool:
        return os.path.isfile(self.path(name))

    def write(self, name: str, cm: ConfusionMatrix, result: MetricsReport) -> Dict[str, str]:
        """Write <name>.json (key-value), <name>.txt (table) and <name>-confusion.csv"""
        try:
            os.makedirs(self.reports_dir, exist_ok=True)
            paths = {
                "json": self.path(name),
                "text": os.path.join(self.reports_dir, f"{name}.txt"),
                "confusion": os.path.join(self.reports_dir, f"{name}-confusion.csv"),
            }
            record: Dict[str, Any] = {"name": name, "report": result.model_dump(mode="json"), "confusion": cm.counts}
            with open(paths["json"], "w", encoding="utf-8", newline="\n") as f:
                json.dump(record, f, indent=2, sort_keys=True, ensure_ascii=False)
                f.write("\n")
            with open(paths["text"], "w", encoding="utf-8", newline="\n") as f:
                f.write(format_report(name, result))
            confusion_frame(cm).to_csv(paths["confusion"], encoding="utf-8", lineterminator="\n")
            logger.info(f"Wrote report {name} to {self.reports_dir}")
            return paths
        except Exception as e:
            logger.error(f"Error writing report {name}: {e}")
            raise

    def read(self, name: str) -> MetricsReport:
        path = self.path(name)
        try:
            with open(path, "r", encoding="utf-8") as f:
                return MetricsReport.model_validate(json.load(f)["report"])
        except Exception as e:
            logger.error(f"Error reading report {path}: {e}")
            raise

    def names(self) -> List[str]:
        if not os.path.isdir(self.reports_dir):
            return []
        return sorted(
            file_name[:-len(".json")] for file_name in os.listdir(self.reports_dir) if file_name.endswith(".json")
        )

    def read_all(self) -> Dict[str, MetricsReport]:
        return {name: self.read(name) for name in self.names()}
