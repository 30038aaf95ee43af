import os
from typing import Dict, List

class Config:
    # Output Configuration
    OUTPUT_DIR = os.getenv("DEVCLF_OUTPUT_DIR", "runs")
    SEED = int(os.getenv("DEVCLF_SEED", "42"))

    # Artifact layout
    MODELS_DIR = "models"
    REPORTS_DIR = "reports"
    PREDICTIONS_DIR = "predictions"
    PROMPTS_DIR = "prompts"
    MANIFEST_FILE = "manifest.json"
    SELECTION_FILE = "selection.json"
    FINAL_SUFFIX = "-final"

    # Model file
    MODEL_FORMAT = "devclf-softmax"
    MODEL_FORMAT_VERSION = 1
    CONFIG_VERSION = 1

    # Featurizer defaults
    NGRAM_MIN = 1
    NGRAM_MAX = 3
    FEATURE_DIMENSION = 2 ** 18

    # Training defaults
    LEARNING_RATE = 0.5
    EPOCHS = 5
    BATCH_SIZE = 32
    WEIGHT_DECAY = 0.01
    PROB_CLAMP = 1e-12

    # Grid search defaults (contains 0.35 / 4.0)
    ALPHA_GRID: List[float] = [0.25, 0.35, 0.5, 0.75, 1.0]
    GAMMA_GRID: List[float] = [0.0, 1.0, 2.0, 4.0]

    # Logging Configuration
    LOG_LEVEL = os.getenv("DEVCLF_LOG_LEVEL", "INFO")
    LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

    @classmethod
    def get_output_dir(cls) -> str:
        """Output directory, re-read so tests can patch the environment"""
        return os.getenv("DEVCLF_OUTPUT_DIR", cls.OUTPUT_DIR)

    @classmethod
    def get_seed(cls) -> int:
        return int(os.getenv("DEVCLF_SEED", str(cls.SEED)))

    @classmethod
    def get_subcommands(cls) -> Dict[str, str]:
        return {
            "train": "Train candidate models on the train split and score them on dev",
            "select": "Rank candidates by dev macro-F1 and keep the top k",
            "finalize": "Retrain selected models on train+dev",
            "predict": "Predict the test split with one model or the ensemble",
            "gridsearch": "Search focal loss alpha/gamma on dev",
            "render-prompts": "Render decoder prompt templates as JSONL",
            "report": "Summarise reports and class distributions"
        }
