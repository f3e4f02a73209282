# Import required logging modules for handling log files and configuration
import logging
import logging.handlers
import os
import sys

from dotenv import load_dotenv  # For loading environment variables

from cli import run_cli


def main():
    """
    Main entry point of the dmskew command.
    Sets up logging configuration and dispatches to the command line.

    The function:
    1. Loads environment variables from .env
    2. Sets up a rotating file handler and a console handler for warnings
    3. Runs the requested subcommand and exits with its status
    """
    load_dotenv()

    # Configure the root logger so library modules share the handlers
    logger = logging.getLogger()
    level = os.getenv("DMSKEW_LOG_LEVEL", "INFO").upper()
    logger.setLevel(getattr(logging, level, logging.INFO))

    # Set up rotating file handler to manage log files
    handler = logging.handlers.RotatingFileHandler(
        filename=os.getenv("DMSKEW_LOG_FILE", "dmskew.log"),
        encoding="utf-8",
        maxBytes=32 * 1024 * 1024,  # 32 MiB max file size
        backupCount=5,  # Keep 5 backup files before rotating
    )

    dt_fmt = "%Y-%m-%d %H:%M:%S"
    formatter = logging.Formatter(
        "[{asctime}] [{levelname:<8}] {name}: {message}", dt_fmt, style="{"
    )
    handler.setFormatter(formatter)
    logger.addHandler(handler)

    console = logging.StreamHandler(sys.stderr)
    console.setLevel(logging.WARNING)
    console.setFormatter(formatter)
    logger.addHandler(console)

    logging.getLogger("matplotlib").setLevel(logging.WARNING)

    logging.getLogger("dmskew").info("Start session")
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
