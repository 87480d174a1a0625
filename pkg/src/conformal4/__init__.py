"""Conformal curvature invariants of explicit 4-manifold metrics."""

__version__ = "0.1.0"
