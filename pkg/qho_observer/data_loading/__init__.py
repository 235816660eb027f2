"""
Problem loading module for QhoObserver.

This module reads problem configurations and resolves the bundled fixtures.
"""
