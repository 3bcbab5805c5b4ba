"""Effective configuration: flags over environment over config file.

Each field of GlobalConfig can come from (highest precedence first) a
command-line flag, a ``VPC_<FIELD>`` environment variable, or a JSON
config file whose keys mirror the field names. The resolved config is
what subcommands run with, and `run` records it in run.json.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping, Optional, Union

from . import textnorm
from .errors import ParseError, VpcError
from .frames import DEFAULT_EXTRACTOR
from .pipeline import MEDIA_MODES

CONFIG_ENV = "VPC_CONFIG"

MOCK_MODES = ("off", "identity", "oracle")  # plus scripted:<fixture>


class ConfigError(VpcError):
    """The resolved configuration is unusable."""


@dataclass
class GlobalConfig:
    manifest: str = ""
    prompt_dir: str = ""
    cache_dir: str = ""
    llm_endpoint: str = ""
    vlmm_endpoint: str = ""
    asr_endpoint: str = ""
    llm_model: str = "gpt-4o"
    vlmm_model: str = "videollama2"
    asr_model: str = ""
    workers: int = 4
    media_mode: str = "frames"
    frame_count: int = 8
    norm_profile: str = textnorm.DEFAULT_PROFILE.profile_id
    mock: str = "off"
    extractor: str = DEFAULT_EXTRACTOR
    temperature: float = 0.0
    max_tokens: int = 1024
    sources: dict = field(default_factory=dict, compare=False)

    @property
    def mock_kind(self) -> str:
        return "scripted" if self.mock.startswith("scripted:") else self.mock

    @property
    def mock_fixture(self) -> str:
        if self.mock.startswith("scripted:"):
            return self.mock.split(":", 1)[1]
        return ""

    @property
    def norm(self) -> textnorm.NormConfig:
        return textnorm.get_profile(self.norm_profile)

    def to_json_obj(self) -> dict:
        return {
            f.name: getattr(self, f.name) for f in fields(self) if f.name != "sources"
        }


_INT_FIELDS = {"workers", "frame_count", "max_tokens"}
_FLOAT_FIELDS = {"temperature"}
FIELD_NAMES = [f.name for f in fields(GlobalConfig) if f.name != "sources"]


def env_var_for(field_name: str) -> str:
    return "VPC_" + field_name.upper()


def _coerce(name: str, value: Any, origin: str) -> Any:
    try:
        if name in _INT_FIELDS:
            if isinstance(value, bool):
                raise ValueError("boolean is not an integer")
            return int(value)
        if name in _FLOAT_FIELDS:
            return float(value)
        if not isinstance(value, str):
            raise ValueError(f"expected string, got {type(value).__name__}")
        return value
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{origin}: bad value for {name!r}: {exc}") from exc


def read_config_file(path: Union[str, Path]) -> dict:
    try:
        obj = json.loads(Path(path).read_text("utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ParseError(f"{path}: config must be a JSON object")
    unknown = sorted(set(obj) - set(FIELD_NAMES))
    if unknown:
        raise ConfigError(f"{path}: unknown config keys: {', '.join(unknown)}")
    return {k: _coerce(k, v, str(path)) for k, v in obj.items()}


def _validate(cfg: GlobalConfig) -> None:
    if cfg.media_mode not in MEDIA_MODES:
        raise ConfigError(f"media_mode must be one of {MEDIA_MODES}, got {cfg.media_mode!r}")
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    if cfg.frame_count < 1:
        raise ConfigError("frame_count must be >= 1")
    if cfg.max_tokens < 1:
        raise ConfigError("max_tokens must be >= 1")
    try:
        textnorm.get_profile(cfg.norm_profile)
    except KeyError:
        raise ConfigError(
            f"unknown norm_profile {cfg.norm_profile!r}; "
            f"known: {', '.join(sorted(textnorm.PROFILES))}"
        ) from None
    if cfg.mock_kind not in MOCK_MODES + ("scripted",):
        raise ConfigError(
            f"mock must be off, identity, oracle, or scripted:<fixture>; got {cfg.mock!r}"
        )
    if cfg.mock_kind == "scripted" and not cfg.mock_fixture:
        raise ConfigError("scripted mock needs a fixture path: scripted:<fixture>")
    if cfg.mock != "off" and (cfg.llm_endpoint or cfg.vlmm_endpoint):
        raise ConfigError(
            "mock mode is active but a model endpoint is configured; "
            "refusing to mix mocks with live endpoints"
        )


def resolve_config(
    flag_values: Optional[Mapping[str, Any]] = None,
    config_file: Optional[Union[str, Path]] = None,
    env: Optional[Mapping[str, str]] = None,
) -> GlobalConfig:
    """Merge defaults < config file < environment < flags, then validate.

    ``flag_values`` entries that are None count as "not given". The file
    defaults to $VPC_CONFIG when not passed explicitly. ``sources`` on the
    result says where each non-default value came from, for diagnostics.
    """
    env = os.environ if env is None else env
    flag_values = flag_values or {}

    if config_file is None:
        config_file = env.get(CONFIG_ENV) or None
    file_values = read_config_file(config_file) if config_file else {}

    merged: dict[str, Any] = {}
    sources: dict[str, str] = {}
    for name in FIELD_NAMES:
        if name in file_values:
            merged[name] = file_values[name]
            sources[name] = f"config:{config_file}"
        var = env_var_for(name)
        if var in env:
            merged[name] = _coerce(name, env[var], var)
            sources[name] = f"env:{var}"
        if flag_values.get(name) is not None:
            merged[name] = _coerce(name, flag_values[name], f"--{name.replace('_', '-')}")
            sources[name] = "flag"

    cfg = GlobalConfig(**merged, sources=sources)
    _validate(cfg)
    return cfg
