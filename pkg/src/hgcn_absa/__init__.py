"""Aspect-level sentiment analysis with hybrid constituency/dependency GCNs.

The package bundles a small reverse-mode autodiff engine, readers for
bracketed constituency trees and CoNLL-U dependency graphs, a minimal-
constituent scope selector, the hybrid graph-convolutional sentiment model
with a CRF scope tagger, a training/evaluation harness, a CLI, and an HTTP
service for semi-automated scope annotation.
"""

__version__ = "0.1.0"
