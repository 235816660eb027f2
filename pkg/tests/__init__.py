"""
Test package for QhoObserver.
"""
