"""Knowledge-graph quality monitoring over streaming text batches.

Builds a deterministic rule-based graph per batch, ingests candidate
graphs from external models, compares the two with structural metrics and
a hallucination score, and flags anomalies against a rolling dynamic
threshold.
"""

__version__ = "0.1.0"
