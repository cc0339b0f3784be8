"""
Plot bundle command
"""

import argparse
import asyncio
import logging

from lab.commands._base import EXIT_PASS
from utils.scenarios import emit_plots

logger = logging.getLogger("scalelab.commands.plots")


class PlotsCommand:
    """Write gnuplot scripts for a completed run directory"""

    name = "plots"
    help = "Emit gnuplot scripts for a completed run"

    def __init__(self, lab):
        self.lab = lab

    def configure(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("run_dir", help="run directory holding manifest.json")

    async def run(self, args: argparse.Namespace) -> int:
        scripts = await asyncio.to_thread(emit_plots, args.run_dir)
        for script in scripts:
            print(script)
        if not scripts:
            logger.warning(f"No plottable data found in {args.run_dir}")
        return EXIT_PASS


async def setup(lab):
    """Add the command to the lab"""
    lab.add_command(PlotsCommand(lab))
