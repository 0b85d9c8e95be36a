"""Two-step support recovery for precision matrices across related tasks."""

__version__ = "0.1.0"
