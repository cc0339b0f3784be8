"""scalelab: numerical laboratory for fractal-geodesic quantum mechanics"""

__version__ = "0.1.0"
