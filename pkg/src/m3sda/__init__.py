"""Multi-source domain adaptation by moment matching, at desk scale."""

__version__ = "0.1.0"
