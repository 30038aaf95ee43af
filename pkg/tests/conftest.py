import csv
import json
import os
import random
from typing import Dict, List, Optional, Sequence

import pytest

from devanagari_clf.models.schemas import (
    DatasetSplit, FeaturizerConfig, LabeledExample, LabelSchema, Normalization, SplitName, TaskId
)
from devanagari_clf.services.corpus import access_audit

# Disjoint consonant inventories, one per class code
CLASS_ALPHABETS = [
    "कखगघङच",
    "छजझञटठ",
    "डढणतथद",
    "धनपफबभ",
    "मयरलवश",
]


def make_text(alphabet: str, rng: random.Random) -> str:
    words = []
    for _ in range(rng.randint(2, 4)):
        words.append("".join(rng.choice(alphabet) for _ in range(rng.randint(3, 6))))
    return " ".join(words)


def make_examples(per_class: Sequence[int], seed: int, alphabets: Sequence[str] = CLASS_ALPHABETS) -> List[LabeledExample]:
    """Interleaved examples; class c draws only from alphabets[c]"""
    rng = random.Random(seed)
    by_class = [[make_text(alphabets[c], rng) for _ in range(count)] for c, count in enumerate(per_class)]
    examples = []
    for i in range(max(per_class)):
        for c, texts in enumerate(by_class):
            if i < len(texts):
                examples.append(LabeledExample(text=texts[i], label=c))
    return examples


def make_split(
    schema: LabelSchema, per_class: Sequence[int], seed: int = 0, name: SplitName = SplitName.TRAIN
) -> DatasetSplit:
    return DatasetSplit(name=name, label_schema=schema, examples=make_examples(per_class, seed))


def write_csv(path: str, examples: Sequence[LabeledExample], labeled: bool = True):
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["text", "label"] if labeled else ["text"])
        for example in examples:
            writer.writerow([example.text, example.label] if labeled else [example.text])


@pytest.fixture(autouse=True)
def _reset_access_audit():
    access_audit.reset()
    yield
    access_audit.reset()


@pytest.fixture
def schema_a() -> LabelSchema:
    return LabelSchema.for_task(TaskId.A)


@pytest.fixture
def schema_b() -> LabelSchema:
    return LabelSchema.for_task(TaskId.B)


@pytest.fixture
def schema_c() -> LabelSchema:
    return LabelSchema.for_task(TaskId.C)


@pytest.fixture
def small_featurizer() -> FeaturizerConfig:
    return FeaturizerConfig(dimension=2 ** 12, normalize=Normalization.L2)


@pytest.fixture
def make_pipeline(tmp_path):
    """Write a Task A dataset plus config file; returns the config path"""

    def _make(
        per_class_train: int = 40,
        per_class_dev: int = 10,
        per_class_test: int = 10,
        test_labeled: bool = True,
        dimension: int = 2 ** 12,
        models: Optional[List[Dict]] = None,
        ensemble: Optional[Dict] = None,
        ensembles: Optional[List[Dict]] = None,
        gridsearch: Optional[Dict] = None,
        prompts: Optional[Dict] = None,
        seed: int = 7,
        out_name: str = "out",
        data_seed: int = 1,
    ) -> str:
        data_dir = tmp_path / "data"
        data_dir.mkdir(exist_ok=True)
        write_csv(str(data_dir / "train.csv"), make_examples([per_class_train] * 5, data_seed))
        write_csv(str(data_dir / "dev.csv"), make_examples([per_class_dev] * 5, data_seed + 1))
        write_csv(str(data_dir / "test.csv"), make_examples([per_class_test] * 5, data_seed + 2), labeled=test_labeled)

        config = {
            "config_version": 1,
            "task": "A",
            "data": {
                "train": "data/train.csv",
                "dev": "data/dev.csv",
                "test": "data/test.csv",
                "format": "csv",
                "test_labeled": test_labeled,
            },
            "featurizer": {"n_min": 1, "n_max": 3, "dimension": dimension, "normalize": "l2"},
            "models": models or [
                {"name": "ce", "train": {"loss": {"kind": "ce"}}},
                {"name": "wce", "train": {"loss": {"kind": "weighted_ce", "weights": "auto"}}},
                {"name": "focal", "train": {"loss": {"kind": "focal", "alpha": 0.35, "gamma": 4.0}}},
            ],
            "output_dir": str(tmp_path / out_name),
            "seed": seed,
        }
        if ensemble is not None:
            config["ensemble"] = ensemble
        if ensembles is not None:
            config["ensembles"] = ensembles
        if gridsearch is not None:
            config["gridsearch"] = gridsearch
        if prompts is not None:
            config["prompts"] = prompts
        path = tmp_path / f"config-{out_name}.json"
        path.write_text(json.dumps(config, ensure_ascii=False), encoding="utf-8")
        return str(path)

    return _make


def tree_bytes(root: str) -> Dict[str, bytes]:
    """Relative path -> file bytes for every file under root"""
    files = {}
    for directory, _, names in os.walk(root):
        for name in names:
            path = os.path.join(directory, name)
            with open(path, "rb") as f:
                files[os.path.relpath(path, root)] = f.read()
    return files
