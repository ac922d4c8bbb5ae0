"""
Tests package for vascular_mrc.
"""
