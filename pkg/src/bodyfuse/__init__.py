"""Probabilistic human body tracking: a diagonal Gaussian over body-model
parameters, propagated to joints and vertices, fused with a motion prior
from recent history, and evaluated for accuracy and calibration."""

__version__ = "0.1.0"
