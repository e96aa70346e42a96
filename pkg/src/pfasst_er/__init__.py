"""PFASST-ER - parallel-in-time integrators across the steps and across the method."""

__version__ = "0.1.0"
__author__ = "PFASST-ER Team"
