"""End-to-end aspect-based sentiment tagging on a from-scratch numpy stack."""

__version__ = "0.1.0"
