"""Desk-scale one-step diffusion deblurring toolkit."""

__version__ = "0.1.0"
