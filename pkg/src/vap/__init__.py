"""Contextual object recognition with top-down correction, object-files and idle-time refinement."""

__version__ = "0.1.0"
