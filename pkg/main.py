#!/usr/bin/env python3
"""
Robust counterfactual explanations
Main entry point for the command line
"""

import logging
import sys
from pathlib import Path

# Add the current directory to Python path
sys.path.append(str(Path(__file__).parent))

from cli import run_cli
from config import Config


def setup_logging():
    """Setup logging configuration; diagnostics go to stderr, data to stdout."""
    handlers = [logging.StreamHandler(sys.stderr)]
    if Config.LOG_FILE:
        handlers.append(logging.FileHandler(Config.LOG_FILE))
    logging.basicConfig(
        level=getattr(logging, Config.LOG_LEVEL, logging.WARNING),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
    )


def main():
    """Main application entry point."""
    setup_logging()
    logger = logging.getLogger(__name__)
    try:
        code = run_cli(sys.argv[1:])
    except KeyboardInterrupt:
        logger.info("Stopped by user")
        code = 130
    sys.exit(code)


if __name__ == "__main__":
    main()
