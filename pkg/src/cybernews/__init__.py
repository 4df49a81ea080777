"""Cyber news alerting pipeline.

Ingests news-alert feeds, discovers emerging cyber terminology with human
review, bootstraps training labels with a high-confidence random forest,
classifies headlines into five cyber categories under several fine-tuning
regimes, scores entity relevance, and benchmarks external generative models.
"""

__version__ = "0.1.0"
