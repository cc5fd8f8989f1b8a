"""Belief-spread simulation of retraction and matched-control retraction analysis."""

__version__ = "0.1.0"
