"""Flat key=value pipeline configuration with environment overrides."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import ConfigError
from .semclass import StrategyKind

ENDPOINT_ENV = "SCHOLARPIPE_ENDPOINT"
TOKEN_ENV = "SCHOLARPIPE_TOKEN"


@dataclass
class PipelineConfig:
    corpus: Path
    output_dir: Path
    taxonomy: Optional[Path] = None
    fulltext: Optional[Path] = None
    population: Optional[Path] = None
    prompt_stage1: Optional[Path] = None
    prompt_stage2: Optional[Path] = None
    dict_ai: Optional[Path] = None
    dict_linear: Optional[Path] = None
    dict_other: Optional[Path] = None
    strategy: StrategyKind = StrategyKind.BASELINE
    seed: int = 0
    workers: int = 1
    mock_backend: bool = True
    backend_endpoint: Optional[str] = None
    backend_model: str = "configured-model"
    backend_timeout: float = 60.0
    backend_retries: int = 2
    backend_temperature: float = 0.0
    backend_max_tokens: int = 512
    backend_response_path: str = "choices.0.message.content"

    def __post_init__(self) -> None:
        endpoint = os.environ.get(ENDPOINT_ENV)
        if endpoint:
            self.backend_endpoint = endpoint
        for name in ("corpus", "taxonomy", "fulltext", "population", "prompt_stage1", "prompt_stage2", "dict_ai", "dict_linear", "dict_other"):
            path = getattr(self, name)
            if path is not None and not Path(path).exists():
                raise ConfigError(f"{name} path does not exist: {path}")
        if not self.mock_backend and not self.backend_endpoint:
            raise ConfigError(f"remote backend selected but no endpoint configured (set {ENDPOINT_ENV})")


_PATH_KEYS = (
    "corpus", "output_dir", "taxonomy", "fulltext", "population",
    "prompt_stage1", "prompt_stage2", "dict_ai", "dict_linear", "dict_other",
)
_BOOL_TRUE = ("1", "true", "yes", "on")


def parse_config_text(text: str, base_dir: Path) -> PipelineConfig:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()

    def pop_path(key: str) -> Optional[Path]:
        raw = values.pop(key, None)
        if raw is None:
            return None
        path = Path(raw)
        return path if path.is_absolute() else base_dir / path

    kwargs: dict = {}
    for key in _PATH_KEYS:
        path = pop_path(key)
        if path is not None:
            kwargs[key] = path
    try:
        if "strategy" in values:
            kwargs["strategy"] = StrategyKind(values.pop("strategy"))
        for key, cast in (
            ("seed", int), ("workers", int),
            ("backend_timeout", float), ("backend_retries", int),
            ("backend_temperature", float), ("backend_max_tokens", int),
        ):
            if key in values:
                kwargs[key] = cast(values.pop(key))
        if "mock_backend" in values:
            kwargs["mock_backend"] = values.pop("mock_backend").lower() in _BOOL_TRUE
        for key in ("backend_endpoint", "backend_model", "backend_response_path"):
            if key in values:
                kwargs[key] = values.pop(key)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if values:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(values))}")
    if "corpus" not in kwargs:
        raise ConfigError("config must set corpus")
    if "output_dir" not in kwargs:
        raise ConfigError("config must set output_dir")
    return PipelineConfig(**kwargs)


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return parse_config_text(text, path.parent.resolve())
