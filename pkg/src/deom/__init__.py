"""Dissipaton equation of motion for a charged particle in a non-inertial frame."""

__version__ = "0.1.0"
