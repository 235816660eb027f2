"""
QhoObserver package for closed quantum harmonic oscillators and directly coupled
coherent quantum observers.

This package provides tools for computing discounted second moments of oscillators,
assembling plant-observer systems, bounding the observer back-action and
synthesizing observers by homotopy continuation.
"""

__version__ = '0.3.0'
