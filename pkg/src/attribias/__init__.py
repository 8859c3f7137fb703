"""Counterfactual evaluation of authorship sensitivity and bias in
retrieval-augmented answer attribution."""

__version__ = "0.1.0"
