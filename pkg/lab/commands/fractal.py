"""
Fractal path command
"""

from lab.commands._base import ScenarioCommand


class FractalCommand(ScenarioCommand):
    name = "fractal"
    help = "Scale scans of fractal paths: dimension, mean-square velocity, velocity decomposition"
    scenarios = ("fractal-scan",)
    default_scenario = "fractal-scan"


async def setup(lab):
    """Add the command to the lab"""
    lab.add_command(FractalCommand(lab))
