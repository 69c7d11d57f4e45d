"""Figure rendering for bbgky-bose run directories."""

__version__ = "0.1.0"
