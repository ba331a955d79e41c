"""Fiducial and confidence distributions: exact constructions, asymptotic
expansions, p*-based conditional versions, multivariate NEF asymptotics and
coverage simulation."""

__version__ = "0.1.0"
