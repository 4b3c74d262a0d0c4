"""Graph-grounded SFT data synthesis pipeline and pairwise judge harness."""

__version__ = "0.1.0"
