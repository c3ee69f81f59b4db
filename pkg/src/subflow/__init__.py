"""Subelliptic harmonic maps with potential on discretised sub-Riemannian tori."""

__version__ = "0.1.0"
