"""Flex-sensor sign recognition: synthetic data, stream capture, cleaning,
classifiers and evaluation."""
from __future__ import annotations

__version__ = "0.1.0"
