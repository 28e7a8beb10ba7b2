"""Contrastive disentanglement of learnable and memorizable data for semantic transmission."""

__version__ = "0.1.0"
