"""Intent discovery, relation discovery and knowledge-graph QA for educational text."""

__version__ = "0.1.0"
