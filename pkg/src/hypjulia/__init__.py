"""Certified approximation of hyperbolic Julia sets."""
