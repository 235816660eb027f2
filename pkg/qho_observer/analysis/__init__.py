"""
Invariant checking module for QhoObserver.
"""
