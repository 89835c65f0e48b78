"""loobench: grounded QA benchmark construction and out-of-knowledge-base
robustness measurement via leave-one-out experiments."""

__version__ = "0.1.0"
