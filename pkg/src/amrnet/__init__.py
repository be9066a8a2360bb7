"""SNP-based antimicrobial resistance prediction: a 1D CNN, boosted trees,
a random forest, soft voting, metrics and TreeSHAP explanations."""

__version__ = "0.1.0"
