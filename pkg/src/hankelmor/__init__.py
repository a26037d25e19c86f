"""Snapshot-based model reduction for stable discrete-time LTI systems:
ERA, balanced POD, ERA with pseudo-adjoint modes and POD/Galerkin, with an
exact balanced-truncation oracle."""

__version__ = "0.1.0"
