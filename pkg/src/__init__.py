"""
continual depth-limited resolving against opponent models


"""

__version__ = "1.0.0"
__author__ = "CDLR Team"
