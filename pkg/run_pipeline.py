#!/usr/bin/env python3
"""
Pipeline runner script for the Devanagari text classifier
"""

import logging
import sys
from pathlib import Path

# Make the package importable when run from a checkout
sys.path.insert(0, str(Path(__file__).parent))

from config import Config

# Configure logging
logging.basicConfig(
    level=getattr(logging, Config.LOG_LEVEL.upper(), logging.INFO),
    format=Config.LOG_FORMAT
)
logger = logging.getLogger(__name__)


def check_requirements() -> bool:
    """Check if all required dependencies are available"""
    try:
        import numpy
        import pandas
        import pydantic
        import scipy
        import nltk
        return True
    except ImportError as e:
        logger.error(f"Missing required dependency: {e}")
        logger.error("Please install all required packages (pip install -e .)")
        return False


def main() -> int:
    if not check_requirements():
        return 1

    from devanagari_clf.main import main as cli_main

    return cli_main(sys.argv[1:])


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        logger.info("Interrupted")
        sys.exit(1)
