import argparse
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from config import Config
from devanagari_clf.errors import ConfigError, PipelineError
from devanagari_clf.models.schemas import PromptMode, SplitName, TaskId
from devanagari_clf.services.pipeline import PipelineRunner

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="devclf",
        description="Devanagari text classification: train, select, finalize, ensemble-predict",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, help_text in Config.get_subcommands().items():
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("--config", required=True, help="pipeline config (JSON)")
        sub.add_argument("--task", choices=[t.value for t in TaskId], help="assert the config's task")
        sub.add_argument("--out", help="output directory (overrides config and DEVCLF_OUTPUT_DIR)")
        sub.add_argument("--seed", type=int, help="seed (overrides config and DEVCLF_SEED)")
        if name in ("train", "predict"):
            help_text = "model name from the config" if name == "train" else "model or ensemble name"
            sub.add_argument("--model", help=help_text)
        if name == "select":
            sub.add_argument("--top-k", type=int, default=1, dest="top_k")
        if name == "render-prompts":
            sub.add_argument("--split", choices=[s.value for s in SplitName], default=SplitName.TEST.value)
            sub.add_argument("--mode", choices=[m.value for m in PromptMode], default=PromptMode.INFERENCE.value)
            sub.add_argument("--stdout", action="store_true", help="also print records")
        if name == "report":
            sub.add_argument(
                "--dump-features", type=int, dest="dump_features", metavar="N",
                help="also write the first N train feature vectors to reports/features-train.txt",
            )
    return parser


def run(args: argparse.Namespace) -> None:
    runner = PipelineRunner.from_file(args.config, output_dir=args.out, seed=args.seed)
    config = runner.config
    if args.task and TaskId(args.task) != config.task:
        raise ConfigError(f"--task {args.task} does not match config task {config.task.value}")

    if args.command == "train":
        results = runner.train(args.model)
        for name, result in results.items():
            print(f"{name}\tdev macro_f1={result.macro_f1:.4f}\tmicro_f1={result.micro_f1:.4f}")
    elif args.command == "select":
        for name in runner.select(args.top_k):
            print(name)
    elif args.command == "finalize":
        for path in runner.finalize():
            print(path)
    elif args.command == "predict":
        for name, result in runner.predict(args.model).items():
            print(result["predictions"])
            if result["report"] is not None:
                scores = result["report"]
                print(f"{name}\ttest macro_f1={scores.macro_f1:.4f}\tmicro_f1={scores.micro_f1:.4f}")
    elif args.command == "gridsearch":
        result = runner.gridsearch()
        print(result.table.to_string(index=False))
        print(f"best alpha={result.best_alpha} gamma={result.best_gamma} macro_f1={result.best_score:.4f}")
    elif args.command == "render-prompts":
        path = runner.render_prompts(SplitName(args.split), PromptMode(args.mode), sys.stdout if args.stdout else None)
        if not args.stdout:
            print(path)
    elif args.command == "report":
        runner.report(dump_features=args.dump_features)


def main(argv: Optional[List[str]] = None) -> int:
    """CLI entry point; returns 0 on success, 1 on internal errors, 2 on usage/input errors"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE

    try:
        run(args)
        return EXIT_OK
    except PipelineError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except ValidationError as e:
        logger.error(f"{args.command} failed validation: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:
        logger.exception(f"{args.command} failed with an internal error: {e}")
        print(f"internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


def cli() -> None:
    """Console-script entry point"""
    logging.basicConfig(
        level=getattr(logging, Config.LOG_LEVEL.upper(), logging.INFO),
        format=Config.LOG_FORMAT
    )
    sys.exit(main())
