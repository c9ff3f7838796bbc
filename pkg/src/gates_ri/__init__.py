"""Cross-fitting randomization inference and split-sample robust inference for sorted-group treatment effects."""

__version__ = "0.1.0"
