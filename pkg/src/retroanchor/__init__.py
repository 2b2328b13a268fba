"""Atom-anchored retrosynthesis analysis toolkit.

Labels atom-mapped reaction datasets with ground-truth disconnection
sites, renders position and transition prompts for language models,
runs them through a cached gateway, parses the mandated JSON replies,
and scores the results.
"""

from __future__ import annotations

__version__ = "0.1.0"
