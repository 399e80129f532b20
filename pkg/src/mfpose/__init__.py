"""Multi-frame human pose estimation on a from-scratch numpy autograd core."""

__version__ = "0.1.0"
