"""Radar-vibrometry audio toolkit: FMCW IF simulation, phase-based
audio extraction, synthetic radar-audio corpus generation, a low-rank
adaptation reference, and transcription accuracy metrics."""

__version__ = "0.1.0"
