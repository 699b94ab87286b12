"""Pinball-loss twin support vector machine classifier and experiment tools."""

__version__ = "0.1.0"
