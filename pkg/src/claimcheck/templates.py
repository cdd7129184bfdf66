"""Prompt templates: packaged text assets with one-pass placeholder filling.

Templates live in ``claimcheck/prompts/<stage>.txt`` and may be overridden by
pointing a config at a directory holding files with the same names.
Placeholders look like ``{claim}``; substitution is a single pass over the
template, so braces inside substituted values are never re-interpreted.
"""

from __future__ import annotations

import re
from importlib import resources
from pathlib import Path

from .errors import ConfigError

TEMPLATE_VERSION = 1

STAGES = ("refine", "verify", "calibrate", "judge")

SYSTEM_PROMPT = (
    "You are a careful assistant for evidence-based claim verification. "
    "Follow the output format instructions exactly."
)

# Only lowercase identifier-shaped names are placeholders, so JSON examples
# like {"label": ...} inside a template pass through untouched.
_PLACEHOLDER = re.compile(r"\{([a-z_]+)\}")


def load_template(stage: str, prompt_dir: str | Path | None = None) -> str:
    """Return the template text for a stage, from ``prompt_dir`` if given."""
    if stage not in STAGES:
        raise ConfigError(f"unknown prompt stage {stage!r}; expected one of {STAGES}")
    if prompt_dir is not None:
        path = Path(prompt_dir) / f"{stage}.txt"
        if not path.is_file():
            raise ConfigError(f"prompt override not found: {path}")
        return path.read_text(encoding="utf-8")
    return (
        resources.files("claimcheck").joinpath("prompts", f"{stage}.txt").read_text(encoding="utf-8")
    )


def render(template: str, **values: str) -> str:
    """Fill every ``{name}`` placeholder from ``values`` in one pass."""

    def _sub(match: re.Match) -> str:
        name = match.group(1)
        if name not in values:
            raise ConfigError(f"template placeholder {{{name}}} has no value")
        return values[name]

    return _PLACEHOLDER.sub(_sub, template)
