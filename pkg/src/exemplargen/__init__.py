"""Exemplar-based code comment generation: BM25 retrieval plus a refine model."""

__version__ = "0.1.0"
