"""Transformer-internals extractor producing ACTV activation dumps."""

from .extract import ExtractionManifest, extract, run_extraction

__all__ = ["ExtractionManifest", "extract", "run_extraction"]
