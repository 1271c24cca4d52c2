"""Latency-matched data collection and deployment tools for handheld-gripper demonstrations."""

__version__ = "0.1.0"
