"""icepose: view-invariant pose embeddings and jump-procedure segmentation tools."""

__version__ = "0.1.0"
