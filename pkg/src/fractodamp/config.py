"""Config documents (TOML) and strict table-to-object conversion.

Unknown keys are hard errors everywhere: a typo in a config must never be
silently ignored.
"""
from __future__ import annotations

import dataclasses
import os
from pathlib import Path
from typing import Any

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .errors import ConfigError, FractodampError

THREADS_ENV = "FRACTODAMP_THREADS"


def load_document(path: str | os.PathLike) -> dict[str, Any]:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: malformed TOML: {exc}") from None


def parse_document(text: str) -> dict[str, Any]:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML: {exc}") from None


def check_keys(doc: dict[str, Any], allowed, where: str) -> None:
    extra = sorted(set(doc) - set(allowed))
    if extra:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(extra)} "
                          f"(allowed: {', '.join(sorted(allowed))})")


def table(doc: dict[str, Any], name: str, required: bool = True) -> dict[str, Any]:
    value = doc.get(name)
    if value is None:
        if required:
            raise ConfigError(f"missing table [{name}]")
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"[{name}] must be a table")
    return value


def build_dataclass(cls, doc: dict[str, Any], where: str):
    """Instantiate ``cls`` from ``doc``, rejecting unknown keys.

    Domain errors raised by the constructor are re-raised as ConfigError with
    the table name attached.
    """
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    check_keys(doc, names, where)
    try:
        return cls(**doc)
    except ConfigError as exc:
        if str(exc).startswith(f"[{where}]"):
            raise
        raise ConfigError(f"[{where}]: {exc}") from None
    except (FractodampError, TypeError, ValueError) as exc:
        raise ConfigError(f"[{where}]: {exc}") from None


def thread_budget(flag: int | None = None) -> int:
    """Resolve the thread budget: explicit flag, then the environment, then 1."""
    if flag is not None:
        if flag < 1:
            raise ConfigError("--threads must be >= 1")
        return flag
    raw = os.environ.get(THREADS_ENV)
    if raw in (None, ""):
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV}={raw!r} is not an integer") from None
    if value < 1:
        raise ConfigError(f"{THREADS_ENV} must be >= 1")
    return value
