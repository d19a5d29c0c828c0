"""
test suite for continual depth-limited resolving
"""
