"""Broadband mmWave MIMO channel estimation from few-bit ADC measurements."""

__version__ = "0.1.0"
