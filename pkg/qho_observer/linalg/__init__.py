"""
Dense linear algebra module for QhoObserver.

This module provides the Lyapunov equation solver, Kronecker and vectorization
helpers and spectral utilities used by the other modules.
"""
