"""
Plant-observer coupling module for QhoObserver.

This module assembles the composite system, computes its Gramians and bounds
the back-action of the observer on the plant.
"""
