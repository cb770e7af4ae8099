"""Parkinson's voice-telemonitoring toolkit: stage detection and progression forecasting."""
__version__ = "0.1.0"
