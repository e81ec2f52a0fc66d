"""Bijective area-preserving disk parameterization of triangle meshes.

Minimizes the normalized authalic energy with a preconditioned nonlinear
conjugate-gradient method, with a fixed-point stretch-energy baseline,
distortion metrics, and landmark-driven surface registration.
"""

__version__ = "0.1.0"
