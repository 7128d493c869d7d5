"""Relation extraction with graph convolutions over pruned dependency trees."""

__version__ = "0.1.0"
