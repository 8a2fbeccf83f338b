"""Training volumetric delineation networks from maximum-intensity-projection annotations."""

__version__ = "0.1.0"
