"""Deterministic spiking-substrate associative mind.

A leaky integrate-and-fire network with reward-modulated STDP forms
person-topic associations from conversation; idle-time lateral propagation
is detected as impulses that gate a pluggable reasoning engine's autonomous
actions. Includes population-code text encoding, three memory stores with
replay consolidation, and a scripted-protocol harness.
"""

from .config import MindConfig
from .cognition import Mind, MockEngine
from .harness import SyntheticEmbedder, default_script, run_protocol

__version__ = "0.1.0"

__all__ = ["MindConfig", "Mind", "MockEngine", "SyntheticEmbedder",
           "default_script", "run_protocol", "__version__"]
