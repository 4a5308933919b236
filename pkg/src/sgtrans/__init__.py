"""Structure-guided Transformer for source code summarization."""

__version__ = "0.1.0"
