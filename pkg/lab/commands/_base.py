"""
Shared plumbing for the scenario subcommands
"""

import argparse
import asyncio
import logging
from typing import Any, Dict, Optional, Tuple

from utils.errors import ConfigError
from utils.geodesics import NOISE_LAWS
from utils.run_manager import RunManifest
from utils.scenario_config import ScenarioConfig, load_config

logger = logging.getLogger("scalelab.commands")

EXIT_PASS = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def seed_value(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


class ScenarioCommand:
    """
    A subcommand that loads a config and runs one scenario from `scenarios`

    Without --config the command runs `default_scenario` with its defaults.
    """

    name = ""
    help = ""
    scenarios: Tuple[str, ...] = ()
    default_scenario = ""

    def __init__(self, lab):
        self.lab = lab

    def configure(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--config", metavar="PATH", help="key=value scenario file")
        parser.add_argument("--seed", type=seed_value, metavar="U64", help="random seed (mandatory without config)")
        parser.add_argument("--out", metavar="DIR", help="output directory for run folders")
        parser.add_argument("--walkers", type=int, metavar="N", help="walker ensemble size")
        parser.add_argument("--noise", choices=NOISE_LAWS, help="noise law for the walkers")
        parser.add_argument("--threads", type=int, metavar="N", help="worker threads")
        if len(self.scenarios) > 1:
            parser.add_argument("--scenario", choices=self.scenarios, help=f"default: {self.default_scenario}")

    def overrides(self, args: argparse.Namespace) -> Dict[str, Any]:
        values: Dict[str, Any] = {
            "seed": args.seed,
            "out_dir": args.out,
            "walkers": args.walkers,
            "noise": (args.noise,) if args.noise else None,
            "threads": args.threads,
        }
        scenario = getattr(args, "scenario", None)
        if scenario or not args.config:
            values["scenario"] = scenario or self.default_scenario
        return values

    def load(self, args: argparse.Namespace) -> ScenarioConfig:
        config = load_config(args.config, self.overrides(args))
        if config.scenario not in self.scenarios:
            raise ConfigError([f"'{self.name}' runs {', '.join(self.scenarios)}, not '{config.scenario}'"])
        return config

    async def run(self, args: argparse.Namespace) -> int:
        config = self.load(args)
        manifest = await asyncio.to_thread(self.lab.runner.run, config)
        self.report(manifest)
        return EXIT_PASS if manifest.passed else EXIT_FAILURE

    @staticmethod
    def report(manifest: RunManifest) -> None:
        status = "PASS" if manifest.passed else "FAIL"
        print(f"{status} {manifest.scenario} seed={manifest.seed} -> {manifest.run_dir}")
        for key, value in manifest.summary.items():
            if not isinstance(value, (dict, list)):
                print(f"  {key}: {value}")
        logger.info(f"{manifest.scenario} finished with {status} in {manifest.duration_s:.1f}s")


def parse_region(text: Optional[str]) -> Optional[Tuple[Tuple[float, ...], Tuple[float, ...]]]:
    """'LOWER:UPPER' with comma-separated components, e.g. '0:inf' or '0.2,0:inf,inf'"""
    if not text:
        return None
    try:
        lower, upper = text.split(":")
        return (tuple(float(v) for v in lower.split(",")), tuple(float(v) for v in upper.split(",")))
    except ValueError:
        raise argparse.ArgumentTypeError(f"region '{text}' is not of the form LOWER:UPPER")
