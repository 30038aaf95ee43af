"""Two-phase workflow: train candidates, select on dev, retrain on train+dev, predict test"""

import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Any, Optional, TextIO, Tuple

import pandas as pd
from pydantic import BaseModel, ConfigDict, ValidationError

from config import Config
from devanagari_clf.errors import ConfigError, InputError
from devanagari_clf.models.schemas import (
    DatasetSplit, EnsembleConfig, LossKind, LossSpec, MetricsReport, ModelConfig, PipelineConfig, PromptMode,
    SplitName, TrainConfig
)
from devanagari_clf.services.classifier import SoftmaxClassifier, load_model, predict_split, save_model, train
from devanagari_clf.services.corpus import (
    REFERENCE_DISTRIBUTIONS, CorpusReader, audit_distribution, class_distribution, distribution_table, merge_splits
)
from devanagari_clf.services.ensemble import EnsembleSpec
from devanagari_clf.services.metrics import (
    ReportStore, confusion, evaluate, rank_models, report, report_table, split_table
)
from devanagari_clf.services.prompts import PromptRenderer
from devanagari_clf.utils.featurizer import dump_sparse, featurize

logger = logging.getLogger(__name__)

Scorer = Callable[[float, float], float]


class GridSearchResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    best_alpha: float
    best_gamma: float
    best_score: float
    table: pd.DataFrame


def load_pipeline_config(path: str, output_dir: Optional[str] = None, seed: Optional[int] = None) -> PipelineConfig:
    """Read the JSON config; data paths resolve against the config file's directory.

    Precedence for output directory and seed: CLI flag, then environment, then file.
    """
    if not os.path.isfile(path):
        raise ConfigError(f"config not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a JSON object")

    base = os.path.dirname(os.path.abspath(path))
    data = raw.get("data")
    if isinstance(data, dict):
        for key in ("train", "dev", "test"):
            value = data.get(key)
            if isinstance(value, str) and not os.path.isabs(value):
                data[key] = os.path.join(base, value)

    if os.getenv("DEVCLF_OUTPUT_DIR"):
        raw["output_dir"] = os.getenv("DEVCLF_OUTPUT_DIR")
    if os.getenv("DEVCLF_SEED"):
        raw["seed"] = os.getenv("DEVCLF_SEED")
    if output_dir is not None:
        raw["output_dir"] = output_dir
    if seed is not None:
        raw["seed"] = seed

    try:
        return PipelineConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"invalid config {path}: {e}") from e


def grid_search(alphas: List[float], gammas: List[float], scorer: Scorer, max_workers: int = 1) -> GridSearchResult:
    """Score every (alpha, gamma) cell; best is highest score, ties to smaller gamma then smaller alpha"""
    if not alphas or not gammas:
        raise InputError("grid search needs non-empty alpha and gamma grids")
    cells = [(alpha, gamma) for gamma in gammas for alpha in alphas]
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            scores = list(pool.map(lambda cell: scorer(*cell), cells))
    else:
        scores = [scorer(alpha, gamma) for alpha, gamma in cells]
    table = pd.DataFrame(
        [{"alpha": a, "gamma": g, "macro_f1": s} for (a, g), s in zip(cells, scores)],
        columns=["alpha", "gamma", "macro_f1"],
    )
    best = min(range(len(cells)), key=lambda i: (-scores[i], cells[i][1], cells[i][0]))
    return GridSearchResult(
        best_alpha=cells[best][0], best_gamma=cells[best][1], best_score=scores[best], table=table
    )


class PipelineRunner:
    """Runs the pipeline commands for one validated config, writing under its output directory"""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.corpus = CorpusReader(config.data, config.label_schema)
        self.reports = ReportStore(os.path.join(self.output_dir, Config.REPORTS_DIR))
        logger.info(f"Pipeline for task {config.task.value} writing to {self.output_dir}")

    @classmethod
    def from_file(cls, path: str, output_dir: Optional[str] = None, seed: Optional[int] = None) -> "PipelineRunner":
        return cls(load_pipeline_config(path, output_dir, seed))

    @property
    def output_dir(self) -> str:
        return self.config.output_dir or Config.get_output_dir()

    @property
    def seed(self) -> int:
        return self.config.seed if self.config.seed is not None else Config.get_seed()

    def _subdir(self, name: str) -> str:
        path = os.path.join(self.output_dir, name)
        os.makedirs(path, exist_ok=True)
        return path

    def model_path(self, name: str, final: bool = False) -> str:
        suffix = Config.FINAL_SUFFIX if final else ""
        return os.path.join(self.output_dir, Config.MODELS_DIR, f"{name}{suffix}.json")

    def predictions_path(self, name: str) -> str:
        return os.path.join(self.output_dir, Config.PREDICTIONS_DIR, f"{name}.csv")

    def resolved_train_config(self, model: ModelConfig) -> TrainConfig:
        """The model's TrainConfig with the pipeline seed filled in when the model sets none"""
        if model.train.seed is not None:
            return model.train
        return model.train.model_copy(update={"seed": self.seed})

    def load_split(self, name: SplitName) -> DatasetSplit:
        return self.corpus.load(name)

    def _model_configs(self, model_name: Optional[str]) -> List[ModelConfig]:
        if model_name is None:
            return list(self.config.models)
        try:
            return [self.config.get_model(model_name)]
        except KeyError:
            raise ConfigError(f"unknown model {model_name!r}; configured: {[m.name for m in self.config.models]}")

    def _map(self, fn, items: List[Any]) -> List[Any]:
        """Ordered map, threaded when max_workers > 1"""
        if self.config.max_workers > 1 and len(items) > 1:
            with ThreadPoolExecutor(max_workers=self.config.max_workers) as pool:
                return list(pool.map(fn, items))
        return [fn(item) for item in items]

    def write_manifest(self) -> str:
        """List every artifact with its sha256; written last by each command"""
        root = self.output_dir
        entries = []
        for sub in (Config.MODELS_DIR, Config.REPORTS_DIR, Config.PREDICTIONS_DIR, Config.PROMPTS_DIR):
            directory = os.path.join(root, sub)
            if not os.path.isdir(directory):
                continue
            for file_name in sorted(os.listdir(directory)):
                entries.append(f"{sub}/{file_name}")
        if os.path.isfile(os.path.join(root, Config.SELECTION_FILE)):
            entries.append(Config.SELECTION_FILE)

        artifacts = {}
        for relative in sorted(entries):
            with open(os.path.join(root, relative), "rb") as f:
                artifacts[relative] = hashlib.sha256(f.read()).hexdigest()
        manifest = {
            "task": self.config.task.value,
            "seed": self.seed,
            "model_format_version": Config.MODEL_FORMAT_VERSION,
            "artifacts": artifacts,
        }
        os.makedirs(root, exist_ok=True)
        path = os.path.join(root, Config.MANIFEST_FILE)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)
            f.write("\n")
        return path

    def train(self, model_name: Optional[str] = None) -> Dict[str, MetricsReport]:
        """Train candidates on train only; write each model and its dev report"""
        models = self._model_configs(model_name)
        try:
            train_split = self.load_split(SplitName.TRAIN)
            dev_split = self.load_split(SplitName.DEV)

            def run(model: ModelConfig) -> Tuple[str, MetricsReport]:
                classifier = train(train_split, self.resolved_train_config(model), self.config.featurizer)
                save_model(classifier, self.model_path(model.name))
                cm, result = evaluate(classifier, dev_split)
                self.reports.write(f"{model.name}-dev", cm, result)
                logger.info(f"Candidate {model.name}: dev macro_f1={result.macro_f1:.4f}")
                return model.name, result

            results = dict(self._map(run, models))
            self.write_manifest()
            return results
        except Exception as e:
            logger.error(f"Error training candidates: {e}")
            raise

    def select(self, top_k: int) -> List[str]:
        """Rank every configured model by dev macro-F1 and persist the top k"""
        if top_k < 1:
            raise InputError(f"top_k must be >= 1, got {top_k}")
        reports = {}
        for model in self.config.models:
            if not self.reports.exists(f"{model.name}-dev"):
                raise InputError(f"missing dev report for {model.name}: {self.reports.path(model.name + '-dev')}")
            reports[model.name] = self.reports.read(f"{model.name}-dev")

        try:
            ranking = rank_models(reports, "macro_f1")
            selected = ranking[:top_k]
            manifest = {
                "key": "macro_f1",
                "ranking": [{"name": name, "macro_f1": reports[name].macro_f1} for name in ranking],
                "selected": selected,
            }
            os.makedirs(self.output_dir, exist_ok=True)
            with open(os.path.join(self.output_dir, Config.SELECTION_FILE), "w", encoding="utf-8", newline="\n") as f:
                json.dump(manifest, f, indent=2)
                f.write("\n")
            logger.info(f"Selected {selected} from {ranking}")
            self.write_manifest()
            return selected
        except Exception as e:
            logger.error(f"Error selecting models: {e}")
            raise

    def read_selection(self) -> List[str]:
        path = os.path.join(self.output_dir, Config.SELECTION_FILE)
        if not os.path.isfile(path):
            raise InputError(f"selection manifest not found: {path}; run select first")
        with open(path, "r", encoding="utf-8") as f:
            return list(json.load(f)["selected"])

    def finalize(self, selection: Optional[List[str]] = None) -> List[str]:
        """Retrain each selected model from scratch on train+dev"""
        selection = selection if selection is not None else self.read_selection()
        models = [self._model_configs(name)[0] for name in selection]
        try:
            train_split = self.load_split(SplitName.TRAIN)
            dev_split = self.load_split(SplitName.DEV)
            merged = merge_splits(train_split, dev_split)

            def run(model: ModelConfig) -> str:
                logger.info(
                    f"Retraining {model.name} on {len(merged)} examples "
                    f"(train {len(train_split)} + dev {len(dev_split)})"
                )
                classifier = train(merged, self.resolved_train_config(model), self.config.featurizer)
                path = self.model_path(model.name, final=True)
                save_model(classifier, path)
                return path

            paths = self._map(run, models)
            self.write_manifest()
            return paths
        except Exception as e:
            logger.error(f"Error finalizing {selection}: {e}")
            raise

    def _load_for_prediction(self, name: str) -> SoftmaxClassifier:
        final = self.model_path(name, final=True)
        if os.path.isfile(final):
            return load_model(final, self.config.task)
        candidate = self.model_path(name)
        if os.path.isfile(candidate):
            logger.warning(f"No final model for {name}; using the train-only candidate")
            return load_model(candidate, self.config.task)
        raise InputError(f"no model artifact for {name} under {os.path.dirname(final)}")

    def build_ensemble(self, ensemble: Optional[EnsembleConfig] = None) -> EnsembleSpec:
        """Load final member models; defaults to the first configured ensemble"""
        if ensemble is None:
            if not self.config.ensembles:
                raise ConfigError("config has no ensemble block")
            ensemble = self.config.ensembles[0]
        members = []
        for name in ensemble.members:
            path = self.model_path(name, final=True)
            if not os.path.isfile(path):
                raise InputError(f"ensemble member {name} has no final model: {path}; run finalize first")
            members.append(load_model(path, self.config.task))
        return EnsembleSpec(
            members=members,
            fallback_index=ensemble.fallback_index(),
            names=list(ensemble.members),
            max_workers=self.config.max_workers,
        )

    def _write_predictions(
        self, name: str, test_split: DatasetSplit, frame: pd.DataFrame, labels: List[int]
    ) -> Dict[str, Any]:
        path = self.predictions_path(name)
        self._subdir(Config.PREDICTIONS_DIR)
        frame.to_csv(path, index=False, encoding="utf-8", lineterminator="\n")
        logger.info(f"Wrote {len(labels)} predictions to {path}")

        result: Dict[str, Any] = {"name": name, "predictions": path, "labels": labels, "report": None}
        if self.config.data.test_labeled and len(test_split) > 0:
            cm = confusion(test_split.labels, labels, self.config.label_schema)
            result["report"] = report(cm)
            self.reports.write(f"{name}-test", cm, result["report"])
        else:
            logger.info(f"Test split is unlabeled; no test report for {name}")
        return result

    def _predict_model(self, name: str, test_split: DatasetSplit) -> Dict[str, Any]:
        schema = self.config.label_schema
        labels = [p.label for p in predict_split(self._load_for_prediction(name), test_split)]
        frame = pd.DataFrame({"index": range(len(labels)), "label": [schema.name_of(c) for c in labels]})
        return self._write_predictions(name, test_split, frame, labels)

    def _predict_ensemble(self, ensemble: EnsembleConfig, test_split: DatasetSplit) -> Dict[str, Any]:
        schema = self.config.label_schema
        outcomes = self.build_ensemble(ensemble).decide_split(test_split)
        labels = [o.label for o in outcomes]
        frame = pd.DataFrame({
            "index": range(len(labels)),
            "label": [schema.name_of(c) for c in labels],
            "decided_by": [o.decided_by.value for o in outcomes],
        })
        return self._write_predictions(ensemble.name, test_split, frame, labels)

    def predict(self, name: Optional[str] = None) -> Dict[str, Dict[str, Any]]:
        """Predict test with one model or ensemble by name, or with every configured ensemble"""
        if name is None and not self.config.ensembles:
            raise ConfigError("predict needs --model or an ensemble block in the config")
        if name is not None and name not in [e.name for e in self.config.ensembles]:
            self._model_configs(name)
        try:
            test_split = self.load_split(SplitName.TEST)
            if name is None:
                results = {e.name: self._predict_ensemble(e, test_split) for e in self.config.ensembles}
            elif name in [e.name for e in self.config.ensembles]:
                results = {name: self._predict_ensemble(self.config.get_ensemble(name), test_split)}
            else:
                results = {name: self._predict_model(name, test_split)}
            self.write_manifest()
            return results
        except Exception as e:
            logger.error(f"Error predicting test: {e}")
            raise

    def gridsearch(self, scorer: Optional[Scorer] = None) -> GridSearchResult:
        """Focal-loss alpha/gamma search on dev; the table goes to reports/gridsearch.csv"""
        grid = self.config.gridsearch
        if grid is None:
            raise ConfigError("config has no gridsearch block")
        try:
            if scorer is None:
                base = self.config.get_model(grid.model) if grid.model else self.config.models[0]
                base_train = self.resolved_train_config(base)
                train_split = self.load_split(SplitName.TRAIN)
                dev_split = self.load_split(SplitName.DEV)

                def scorer(alpha: float, gamma: float) -> float:
                    focal = LossSpec(kind=LossKind.FOCAL, alpha=alpha, gamma=gamma)
                    classifier = train(train_split, base_train.model_copy(update={"loss": focal}), self.config.featurizer)
                    _, result = evaluate(classifier, dev_split)
                    logger.info(f"Grid cell alpha={alpha} gamma={gamma}: dev macro_f1={result.macro_f1:.4f}")
                    return result.macro_f1

            result = grid_search(grid.alphas, grid.gammas, scorer, self.config.max_workers)
            table_path = os.path.join(self._subdir(Config.REPORTS_DIR), "gridsearch.csv")
            result.table.to_csv(table_path, index=False, encoding="utf-8", lineterminator="\n")
            logger.info(
                f"Best focal cell: alpha={result.best_alpha} gamma={result.best_gamma} (macro_f1={result.best_score:.4f})"
            )
            self.write_manifest()
            return result
        except Exception as e:
            logger.error(f"Error in grid search: {e}")
            raise

    def render_prompts(self, split_name: SplitName, mode: PromptMode, stream: Optional[TextIO] = None) -> str:
        """Write one JSONL prompt record per example of the split"""
        split = self.load_split(SplitName(split_name))
        mode = PromptMode(mode)
        renderer = PromptRenderer(self.config.task, self.config.prompts.examples)
        records = renderer.render_split(split, mode)

        path = os.path.join(self._subdir(Config.PROMPTS_DIR), f"{split.name.value}-{mode.value}.jsonl")
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for record in records:
                line = json.dumps(record, ensure_ascii=False) + "\n"
                f.write(line)
                if stream is not None:
                    stream.write(line)
        logger.info(f"Rendered {len(records)} {mode.value} prompts to {path}")
        self.write_manifest()
        return path

    def dump_features(self, limit: int, split_name: SplitName = SplitName.TRAIN) -> str:
        """Write the first `limit` feature vectors as `index<TAB>label<TAB>index:value ...` lines"""
        if limit < 1:
            raise InputError(f"--dump-features needs a positive count, got {limit}")
        split = self.load_split(split_name)
        path = os.path.join(self._subdir(Config.REPORTS_DIR), f"features-{split.name.value}.txt")
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for i, example in enumerate(split.examples[:limit]):
                label = "" if example.label is None else str(example.label)
                f.write(f"{i}\t{label}\t{dump_sparse(featurize(example.text, self.config.featurizer))}\n")
        logger.info(f"Dumped {min(limit, len(split))} feature vectors to {path}")
        return path

    def _fallback_summary(self) -> Optional[pd.DataFrame]:
        rows = []
        for ensemble in self.config.ensembles:
            path = self.predictions_path(ensemble.name)
            if not os.path.isfile(path):
                continue
            decided = pd.read_csv(path, dtype=str, keep_default_na=False)["decided_by"]
            rows.append({
                "Ensemble": ensemble.name,
                "Fallback": ensemble.fallback_name,
                "Fallback rows": int((decided == "fallback").sum()),
                "Rows": len(decided),
            })
        if not rows:
            return None
        return pd.DataFrame(rows, columns=["Ensemble", "Fallback", "Fallback rows", "Rows"])

    def report(self, stream: Optional[TextIO] = None, dump_features: Optional[int] = None) -> str:
        """Summarise every written report and the class distribution of each labeled split"""
        schema = self.config.label_schema
        try:
            reports = self.reports.read_all()
            sections = []
            if reports:
                sections.append("Model scores (macro-averaged)\n" + report_table(reports).to_string(index=False))
                by_split = split_table(reports)
                if len(by_split):
                    sections.append("Dev vs test macro-F1\n" + by_split.to_string(index=False, na_rep="-"))
            else:
                sections.append("No reports found")
            fallbacks = self._fallback_summary()
            if fallbacks is not None:
                sections.append("Ensemble fallbacks\n" + fallbacks.to_string(index=False))

            distributions = {}
            audit_lines = []
            for split_name in (SplitName.TRAIN, SplitName.DEV, SplitName.TEST):
                if split_name == SplitName.TEST and (self.config.data.test is None or not self.config.data.test_labeled):
                    continue
                split = self.load_split(split_name)
                dist = class_distribution(split, schema)
                distributions[split_name.value.capitalize()] = dist
                if self.config.audit_reference:
                    problems = audit_distribution(dist, REFERENCE_DISTRIBUTIONS[self.config.task][split_name], schema)
                    verdict = "matches reference" if not problems else "; ".join(problems)
                    audit_lines.append(f"{split_name.value}: {verdict}")
            sections.append("Class distribution\n" + distribution_table(distributions, schema).to_string())
            if audit_lines:
                sections.append("Reference audit\n" + "\n".join(audit_lines))
            if dump_features is not None:
                dump_path = self.dump_features(dump_features)
                sections.append(f"Feature dump\n{os.path.relpath(dump_path, self.output_dir)}")

            text = "\n\n".join(sections) + "\n"
            summary_path = os.path.join(self._subdir(Config.REPORTS_DIR), "summary.txt")
            with open(summary_path, "w", encoding="utf-8", newline="\n") as f:
                f.write(text)
            (stream or sys.stdout).write(text)
            self.write_manifest()
            return text
        except Exception as e:
            logger.error(f"Error writing summary report: {e}")
            raise
