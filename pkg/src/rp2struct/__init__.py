"""Convex real-projective structures on closed surfaces from cubic differentials.

Numerical toolkit: Wang-equation solver, flat connections on TM + L,
holonomy and developing maps, Monge-Ampere normalizations and tensor
identity checkers.
"""

__version__ = "0.1.0"
