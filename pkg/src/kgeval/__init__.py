"""Extrinsic knowledge graph evaluation through downstream tasks."""

__version__ = "0.1.0"
