"""Overhead-camera visual servoing testbed."""

__version__ = "0.1.0"
