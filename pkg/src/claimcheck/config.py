"""Run configuration: JSON config files, dataset presets, and backend setup.

Precedence, lowest to highest: library defaults, the dataset preset, the
config file's explicit keys, command-line overrides. The fully resolved
config is echoed into every report so results are self-describing.

Config file shape (every section optional)::

    {
      "preset": "hover" | "feverous_s",
      "pipeline": { ... PipelineConfig fields ... },
      "index":    {"k1": 1.2, "b": 0.75, "stopwords": ["the", ...]},
      "backend":  {"kind": "mock", "script": "script.json"}
                | {"kind": "http", "base_url": ..., "model": ..., "api_key": ...,
                   "timeout": 60, "max_in_flight": 8},
      "retry":    {"max_attempts": 3, "base_delay": 0.5, "backoff_factor": 2.0}
    }

The HTTP backend falls back to the RRC_LLM_BASE_URL / RRC_LLM_API_KEY /
RRC_LLM_MODEL environment variables for any of its unset fields.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .index import IndexParams
from .llm import (
    ENV_API_KEY,
    ENV_BASE_URL,
    ENV_MODEL,
    Backend,
    HttpChatBackend,
    MockBackend,
    RetryPolicy,
)
from .pipeline import PipelineConfig

PRESETS: dict[str, dict] = {
    "hover": {"top_k": 10, "theta": 0.90, "max_entities": 3},
    "feverous_s": {"top_k": 5, "theta": 0.85, "max_entities": 3},
}

_TOP_LEVEL_KEYS = {"preset", "pipeline", "index", "backend", "retry"}
_PIPELINE_KEYS = {f.name for f in fields(PipelineConfig)} - {"retry"}
_INDEX_KEYS = {"k1", "b", "stopwords"}
_BACKEND_KEYS = {"kind", "script", "base_url", "model", "api_key", "timeout", "max_in_flight"}
_RETRY_KEYS = {"max_attempts", "base_delay", "backoff_factor"}


@dataclass
class RunSettings:
    """Everything a command needs to run, resolved from all config sources."""

    pipeline: PipelineConfig
    index_params: IndexParams
    backend_spec: dict
    preset: str | None
    config_dir: Path | None

    def snapshot_extras(self) -> dict:
        """Non-pipeline settings echoed into report config snapshots."""
        backend = {"kind": self.backend_spec.get("kind", "http")}
        if "model" in self.backend_spec:
            backend["model"] = self.backend_spec["model"]
        return {"preset": self.preset, "backend": backend}


def _check_keys(section: str, mapping: dict, allowed: set[str]) -> None:
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"unknown {section} config keys: {sorted(unknown)}")


def load_config_file(path: str | Path) -> dict:
    """Parse and shape-check a JSON config file."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    try:
        cfg = json.loads(path.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    _check_keys("top-level", cfg, _TOP_LEVEL_KEYS)
    for section, allowed in (
        ("pipeline", _PIPELINE_KEYS), ("index", _INDEX_KEYS),
        ("backend", _BACKEND_KEYS), ("retry", _RETRY_KEYS),
    ):
        if section in cfg:
            if not isinstance(cfg[section], dict):
                raise ConfigError(f"config section {section!r} must be an object")
            _check_keys(section, cfg[section], allowed)
    return cfg


def resolve_settings(
    config_path: str | Path | None = None,
    preset: str | None = None,
    pipeline_overrides: dict | None = None,
) -> RunSettings:
    """Merge defaults, preset, config file, and overrides into RunSettings.

    ``preset`` (usually the dataset schema name) and any override values take
    effect only for keys the higher-precedence sources do not set themselves.
    Everything is validated here, before any index or backend is touched.
    """
    cfg = load_config_file(config_path) if config_path else {}
    preset_name = preset or cfg.get("preset")
    if preset_name is not None and preset_name not in PRESETS:
        raise ConfigError(f"unknown preset {preset_name!r}; expected one of {sorted(PRESETS)}")

    pipeline_kwargs: dict = {}
    if preset_name:
        pipeline_kwargs.update(PRESETS[preset_name])
    pipeline_kwargs.update(cfg.get("pipeline", {}))
    for key, value in (pipeline_overrides or {}).items():
        if value is not None:
            if key not in _PIPELINE_KEYS:
                raise ConfigError(f"unknown pipeline override {key!r}")
            pipeline_kwargs[key] = value
    if "stage_temperatures" in pipeline_kwargs:
        st = pipeline_kwargs["stage_temperatures"]
        if not isinstance(st, dict):
            raise ConfigError("stage_temperatures must be an object")
    retry = RetryPolicy(**cfg.get("retry", {}))
    pipeline_config = PipelineConfig(retry=retry, **pipeline_kwargs)

    index_section = dict(cfg.get("index", {}))
    if "stopwords" in index_section:
        stopwords = index_section["stopwords"]
        if not isinstance(stopwords, list) or not all(isinstance(w, str) for w in stopwords):
            raise ConfigError("index stopwords must be a list of strings")
        index_section["stopwords"] = tuple(stopwords)
    index_params = IndexParams(**index_section)

    backend_spec = dict(cfg.get("backend", {"kind": "http"}))
    kind = backend_spec.setdefault("kind", "http")
    if kind not in ("mock", "http"):
        raise ConfigError(f"backend kind must be 'mock' or 'http', got {kind!r}")
    if kind == "mock" and "script" not in backend_spec:
        raise ConfigError("mock backend requires a 'script' path")

    return RunSettings(
        pipeline=pipeline_config,
        index_params=index_params,
        backend_spec=backend_spec,
        preset=preset_name,
        config_dir=Path(config_path).parent if config_path else None,
    )


def build_backend(settings: RunSettings) -> Backend:
    """Construct the backend RunSettings describes.

    Mock script paths are resolved relative to the config file's directory.
    """
    spec = settings.backend_spec
    if spec["kind"] == "mock":
        script = Path(spec["script"])
        if not script.is_absolute() and settings.config_dir is not None:
            script = settings.config_dir / script
        return MockBackend.from_script(script)
    extra = {}
    if "timeout" in spec:
        extra["timeout"] = float(spec["timeout"])
    if "max_in_flight" in spec:
        extra["max_in_flight"] = int(spec["max_in_flight"])
    base_url = spec.get("base_url") or os.environ.get(ENV_BASE_URL, "")
    model = spec.get("model") or os.environ.get(ENV_MODEL, "")
    api_key = spec.get("api_key") or os.environ.get(ENV_API_KEY) or None
    if not base_url or not model:
        raise ConfigError(
            "http backend needs base_url and model, from the config file or the "
            f"{ENV_BASE_URL} and {ENV_MODEL} environment variables"
        )
    return HttpChatBackend(base_url=base_url, model=model, api_key=api_key, **extra)
