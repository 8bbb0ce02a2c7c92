"""Market-attraction vs. expert-judgment factor weight concordance."""

__version__ = "0.1.0"
