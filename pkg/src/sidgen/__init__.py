"""Desk-scale generative episode retrieval over residual-quantized semantic IDs."""

__version__ = "0.1.0"
