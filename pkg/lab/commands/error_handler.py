"""
Error handling for scalelab commands
Maps failures to exit codes and prints messages with guidance
"""

import difflib
import logging
import re
import sys
from typing import List, Optional

from lab.commands._base import EXIT_CONFIG, EXIT_FAILURE
from utils.errors import ConfigError, IncompleteRunError, ScaleLabError, SolverError, WalkerError
from utils.scenario_config import FIELD_TYPES, SCENARIOS

logger = logging.getLogger("scalelab.error_handler")


class ErrorHandler:
    """Turns exceptions into exit codes and helpful messages"""

    def __init__(self, lab):
        self.lab = lab
        self.error_count = 0
        self.common_typos = {
            "harmonic-oscillator": "sho",
            "oscillator": "sho",
            "doubleslit": "double-slit",
            "two-slit": "double-slit",
            "twoslit": "double-slit",
            "born": "born-emergence",
            "fractal": "fractal-scan",
            "verify": "verify-all",
            "planewave": "plane-wave",
            "packet": "free-packet",
            "hbar": "D",
            "mass": "m",
            "timestep": "dt",
            "time_step": "dt",
            "walker": "walkers",
            "n_walkers": "walkers",
            "points": "n",
            "random_seed": "seed",
        }

    def suggestions(self, word: str, vocabulary: List[str]) -> List[str]:
        """Likely intended names for a misspelled key or scenario"""
        word = word.lower()
        if word in self.common_typos and self.common_typos[word] in vocabulary:
            return [self.common_typos[word]]
        return difflib.get_close_matches(word, vocabulary, n=3, cutoff=0.6)

    def _config_guidance(self, error: ConfigError) -> List[str]:
        lines = []
        for problem in error.problems:
            lines.append(f"  - {problem}")
            unknown = re.match(r"unknown key '([^']+)'", problem)
            if unknown:
                similar = self.suggestions(unknown.group(1), list(FIELD_TYPES))
                if similar:
                    lines.append(f"    did you mean: {', '.join(similar)}?")
            scenario = re.match(r"scenario must be one of", problem)
            if scenario:
                lines.append(f"    valid scenarios: {', '.join(SCENARIOS)}")
        return lines

    def handle(self, error: Exception, command: Optional[str] = None) -> int:
        """
        Log and print an error

        Args:
            error: The exception raised by a command
            command: Name of the command that failed

        Returns:
            Exit code: 2 for configuration errors, 1 otherwise
        """
        self.error_count += 1
        where = f" in '{command}'" if command else ""

        if isinstance(error, ConfigError):
            logger.error(f"Configuration error{where}: {len(error.problems)} problem(s)")
            message = ["Invalid configuration:"] + self._config_guidance(error)
            if error.hint:
                message.append(f"Hint: {error.hint}")
            self._print(message)
            return EXIT_CONFIG

        if isinstance(error, ScaleLabError):
            logger.error(f"{type(error).__name__}{where}: {str(error)}")
            message = [f"{type(error).__name__}: {str(error)}"]
            if isinstance(error, SolverError) and error.step is not None:
                message.append(f"Failed at solver step {error.step}.")
            elif isinstance(error, WalkerError) and error.walker is not None:
                message.append(f"Walker {error.walker} left the finite domain.")
            elif isinstance(error, IncompleteRunError) and error.files:
                message.append("Files: " + ", ".join(error.files))
            if error.hint:
                message.append(f"Hint: {error.hint}")
            self._print(message)
            return EXIT_FAILURE

        logger.critical(f"Unexpected error{where}: {str(error)}")
        logger.exception("Exception details:", exc_info=error)
        self._print([f"Unexpected error: {str(error)}", "See the log file for the traceback."])
        return EXIT_FAILURE

    @staticmethod
    def _print(lines: List[str]) -> None:
        print("\n".join(lines), file=sys.stderr)


async def setup(lab):
    """Install the error handler on the lab"""
    lab.error_handler = ErrorHandler(lab)
