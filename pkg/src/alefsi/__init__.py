"""ALE finite element solver for a rigid disk falling through a viscous fluid."""

__version__ = "0.1.0"
