"""Shared text tokenizer used by the corpus statistics and the BM25 index."""

from __future__ import annotations

import re

# One token = a maximal run of alphanumeric characters. ``\w`` minus the
# underscore is exactly str.isalnum() for Unicode text, so letters and digits
# in any script count as token characters and everything else splits.
_TOKEN = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase ``text`` and split it on every non-alphanumeric character."""
    return _TOKEN.findall(text.lower())
