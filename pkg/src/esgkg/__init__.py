"""ESG knowledge graphs from sustainability reports.

Stages: sentence ingestion, semantic search for ESG-relevant sentences,
LLM triple extraction, label consolidation, graph construction, network
analytics and interpretation of external ESG scores.
"""

__version__ = "0.1.0"
