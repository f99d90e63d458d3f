"""Sparse identification of governing equations by exact subset selection."""
__version__ = "0.1.0"
