"""
Localisation robustness metrics (valid prior threshold, probability of absence of
updates) over a simulated 2D feature-map localisation pipeline.
"""

__version__ = "0.1.0"
