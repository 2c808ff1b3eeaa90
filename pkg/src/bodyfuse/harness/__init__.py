"""Synthetic sequences, pseudo-detector, tracker pipeline and evaluation."""

from .scenario import OcclusionWindow, ScenarioConfig, SequenceFrame, generate, pseudo_detect
from .tracker import Tracker, TrackerConfig, TrackOutput, run, track_step

__all__ = [
    "OcclusionWindow", "ScenarioConfig", "SequenceFrame", "generate", "pseudo_detect",
    "Tracker", "TrackerConfig", "TrackOutput", "run", "track_step",
]
