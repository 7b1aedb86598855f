"""Full-frame-aware camera algebra, losses and fitting for monocular body recovery."""

__version__ = "0.1.0"
