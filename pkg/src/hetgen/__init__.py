"""Heterogeneous graph generation toolkit.

Two-phase generation (diffusion skeletons, then adversarial pool-based
feature assignment) with an exact-EMD/MMD evaluation suite.
"""

__version__ = "0.1.0"
