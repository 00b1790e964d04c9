"""Run configuration: sectioned key-value file plus environment overrides.

Credentials never live in the file; they come from GRAPHSOLVE_EMBED_API_KEY
and GRAPHSOLVE_CHAT_API_KEY.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import os
from dataclasses import dataclass, field

from .embedding import DEFAULT_DIMENSION, DEFAULT_WEIGHT

EMBED_KEY_ENV = "GRAPHSOLVE_EMBED_API_KEY"
CHAT_KEY_ENV = "GRAPHSOLVE_CHAT_API_KEY"


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    kg_path: str = ""
    # embedding provider
    embed_kind: str = "fallback"  # fallback | remote
    embed_base_url: str = ""
    embed_model: str = ""
    dimension: int = DEFAULT_DIMENSION
    weight: float = DEFAULT_WEIGHT
    # retrieval
    top_n: int = 5
    # chat model client
    model_kind: str = "mock"  # mock | remote
    model_base_url: str = ""
    model_name: str = ""
    mock_script: str = ""
    # sandbox
    sandbox_backend: str = "subprocess"  # subprocess | container
    sandbox_image: str = ""
    sandbox_interpreter: str = ""
    time_limit: float = 10.0
    memory_limit_mib: int = 512
    # run
    workers: int = 1
    output_dir: str = "runs"
    embed_api_key: str = field(default="", repr=False)
    chat_api_key: str = field(default="", repr=False)

    def __post_init__(self):
        if not 0.0 <= self.weight <= 1.0:
            raise ConfigError(f"w must lie in [0, 1], got {self.weight}")
        if self.top_n < 1:
            raise ConfigError("top_n must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @property
    def memory_limit_bytes(self) -> int:
        return self.memory_limit_mib * 1024 * 1024

    def fingerprint(self, extra: dict | None = None) -> str:
        """Content address for one run's output subdirectory."""
        payload = {
            "kg": self.kg_path,
            "embed": [self.embed_kind, self.embed_base_url, self.embed_model, self.dimension],
            "w": self.weight,
            "top_n": self.top_n,
            "model": [self.model_kind, self.model_base_url, self.model_name, self.mock_script],
            "sandbox": [self.sandbox_backend, self.sandbox_image, self.sandbox_interpreter],
            "limits": [self.time_limit, self.memory_limit_mib],
        }
        if extra:
            payload.update(extra)
        digest = hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8"))
        return digest.hexdigest()[:12]


def load_config(path: str | None) -> RunConfig:
    """Parse the INI-style config file; a missing path yields pure defaults."""
    parser = configparser.ConfigParser()
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        try:
            parser.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc

    def get(section: str, option: str, fallback):
        if not parser.has_option(section, option):
            return fallback
        raw = parser.get(section, option)
        kind = type(fallback)
        try:
            if kind is bool:
                return parser.getboolean(section, option)
            return kind(raw)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {option}: bad value {raw!r}: {exc}") from exc

    try:
        config = RunConfig(
            kg_path=get("kg", "path", ""),
            embed_kind=get("embedding", "kind", "fallback"),
            embed_base_url=get("embedding", "base_url", ""),
            embed_model=get("embedding", "model", ""),
            dimension=get("embedding", "dimension", DEFAULT_DIMENSION),
            weight=get("embedding", "w", DEFAULT_WEIGHT),
            top_n=get("retrieval", "top_n", 5),
            model_kind=get("model", "kind", "mock"),
            model_base_url=get("model", "base_url", ""),
            model_name=get("model", "name", ""),
            mock_script=get("model", "mock_script", ""),
            sandbox_backend=get("sandbox", "backend", "subprocess"),
            sandbox_image=get("sandbox", "image", ""),
            sandbox_interpreter=get("sandbox", "interpreter", ""),
            time_limit=get("sandbox", "time_limit", 10.0),
            memory_limit_mib=get("sandbox", "memory_limit_mib", 512),
            workers=get("run", "workers", 1),
            output_dir=get("run", "output_dir", "runs"),
        )
    except ConfigError:
        raise
    config.embed_api_key = os.environ.get(EMBED_KEY_ENV, "")
    config.chat_api_key = os.environ.get(CHAT_KEY_ENV, "")
    if config.embed_kind not in ("fallback", "remote"):
        raise ConfigError(f"embedding kind must be fallback or remote, got {config.embed_kind!r}")
    if config.model_kind not in ("mock", "remote"):
        raise ConfigError(f"model kind must be mock or remote, got {config.model_kind!r}")
    if config.sandbox_backend not in ("subprocess", "container"):
        raise ConfigError(
            f"sandbox backend must be subprocess or container, got {config.sandbox_backend!r}"
        )
    return config
