"""HTTP gateway around a sentence encoder and a POS/dependency tagger."""

__version__ = "0.1.0"
