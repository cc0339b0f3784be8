#!/usr/bin/env python3
"""
scalelab command-line entry point
Loads the command modules, parses the command line and runs one scenario
"""

import argparse
import asyncio
import importlib
import logging
import os
import sys
from typing import Dict, List, Optional

from dotenv import load_dotenv

# Add the parent directory to sys.path to allow importing from utils
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from lab import __version__
from lab.commands._base import EXIT_FAILURE
from utils.scenarios import ScenarioRunner

# Load environment variables
load_dotenv()

# Configure logging
logging.basicConfig(
    level=getattr(logging, os.getenv("LOG_LEVEL", "INFO").upper(), logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    handlers=[
        logging.FileHandler(os.getenv("LOG_FILE", "scalelab.log")),
        logging.StreamHandler()
    ]
)
logger = logging.getLogger("scalelab")


class Lab:
    """Command registry shared by the command modules"""

    def __init__(self, runner: Optional[ScenarioRunner] = None):
        self.runner = runner or ScenarioRunner()
        self.commands: Dict[str, object] = {}
        self.error_handler = None
        self.parser = argparse.ArgumentParser(
            prog="scalelab",
            description="Scale-relativity quantum mechanics laboratory",
        )
        self.parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
        self._subparsers = self.parser.add_subparsers(dest="command", metavar="COMMAND")
        self._subparsers.required = True

    def add_command(self, command) -> None:
        """Register a command object exposing name, help, configure() and run()"""
        parser = self._subparsers.add_parser(command.name, help=command.help, description=command.help)
        command.configure(parser)
        self.commands[command.name] = command
        logger.debug(f"Registered command: {command.name}")


async def load_extensions(lab: Lab) -> None:
    """Load every command module from the commands directory"""
    commands_dir = os.path.join(os.path.dirname(__file__), "commands")
    if not os.path.exists(commands_dir):
        logger.warning(f"Commands directory not found: {commands_dir}")
        return

    for filename in sorted(os.listdir(commands_dir)):
        if filename.endswith(".py") and not filename.startswith("_"):
            extension_name = f"lab.commands.{filename[:-3]}"
            try:
                module = importlib.import_module(extension_name)
                await module.setup(lab)
                logger.debug(f"Loaded extension: {extension_name}")
            except Exception as e:
                logger.error(f"Failed to load extension {extension_name}: {e}")


async def main(argv: Optional[List[str]] = None, lab: Optional[Lab] = None) -> int:
    """Parse arguments and run the selected command; returns the exit code"""
    lab = lab or Lab()
    await load_extensions(lab)
    args = lab.parser.parse_args(argv)
    command = lab.commands[args.command]
    logger.info(f"scalelab {__version__}: running '{args.command}'")
    try:
        return await command.run(args)
    except Exception as e:
        if lab.error_handler is None:
            logger.critical(f"Unhandled error in '{args.command}': {str(e)}")
            logger.exception("Exception details:")
            return EXIT_FAILURE
        return lab.error_handler.handle(e, args.command)


def run_lab() -> None:
    """Run the command line and exit with its code"""
    try:
        code = asyncio.run(main())
    except KeyboardInterrupt:
        logger.info("Stopped by keyboard interrupt")
        code = EXIT_FAILURE
    sys.exit(code)


if __name__ == "__main__":
    run_lab()
