"""Geodesic equivalence toolkit for Riemannian and corank-one sub-Riemannian metrics."""

__version__ = "0.1.0"
