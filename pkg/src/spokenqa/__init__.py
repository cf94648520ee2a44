"""Spoken question answering toolkit: pinyin subword embeddings, a minimal
span reader, character-level EM/F1 scoring and ASR-noise corpus tools."""

__version__ = "0.1.0"
