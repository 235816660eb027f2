"""
Single oscillator module for QhoObserver.

This module provides the dynamics, spectral data and discounted second moments
of a closed quantum harmonic oscillator.
"""
