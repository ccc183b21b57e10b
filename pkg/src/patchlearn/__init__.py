"""Equation-free patch dynamics for heterogeneous diffusion and data-driven
discovery of the effective (homogenized) PDE."""

__version__ = "0.1.0"
