"""
Test suite for fedsim
"""
