"""
Observer synthesis module for QhoObserver.

This module evaluates the filtering cost, its gradients and optimality residuals,
and traces optimal observers of the autonomous estimation-error class.
"""
