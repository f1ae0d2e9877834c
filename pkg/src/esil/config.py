"""Plain-text run configuration files.

Format: one ``key = value`` pair per line, ``#`` starts a comment, blank
lines ignored. Keys are the TrainConfig field names; anything else is
rejected with a close-match suggestion and the offending line number.
Unspecified keys take the per-environment defaults, so the ``env`` key
is read first.

Value syntax per type: ints and floats as usual, booleans ``true`` or
``false``, ``hidden_sizes`` as a comma list (``256,256,256``), and
``beta_override`` as a float or ``none``.
"""

from __future__ import annotations

import dataclasses
import difflib
from pathlib import Path

from .trainer import TrainConfig


class ConfigError(ValueError):
    """A configuration file or override that cannot be accepted."""


_FIELDS = {f.name: f for f in dataclasses.fields(TrainConfig)}


def _parse_bool(text: str, key: str, where: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "1", "yes", "on"):
        return True
    if t in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"{where}: {key} expects true/false, got {text!r}")


def _parse_value(key: str, text: str, where: str):
    text = text.strip()
    if key in ("env", "variant"):
        return text
    if key == "hidden_sizes":
        try:
            sizes = tuple(int(p.strip()) for p in text.split(",") if p.strip())
        except ValueError:
            raise ConfigError(f"{where}: hidden_sizes expects a comma list of ints, got {text!r}")
        if not sizes:
            raise ConfigError(f"{where}: hidden_sizes must name at least one layer")
        return sizes
    if key == "beta_override":
        if text.lower() in ("none", "null"):
            return None
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"{where}: beta_override expects a float or 'none', got {text!r}")
    default = _FIELDS[key].default
    if isinstance(default, bool):
        return _parse_bool(text, key, where)
    if isinstance(default, int):
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"{where}: {key} expects an integer, got {text!r}")
    if isinstance(default, float):
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"{where}: {key} expects a number, got {text!r}")
    return text


def _reject_unknown(key: str, where: str) -> None:
    if key in _FIELDS:
        return
    hint = ""
    close = difflib.get_close_matches(key, _FIELDS, n=1)
    if close:
        hint = f" (did you mean '{close[0]}'?)"
    raise ConfigError(f"{where}: unknown key '{key}'{hint}")


def parse_config_pairs(pairs: list) -> TrainConfig:
    """Build a config from ((key, value_text, where)) triples."""
    parsed = {}
    for key, value, where in pairs:
        _reject_unknown(key, where)
        parsed[key] = _parse_value(key, value, where)
    env = parsed.pop("env", TrainConfig.env)
    config = TrainConfig.defaults_for(env)
    for key, value in parsed.items():
        setattr(config, key, value)
    return config


def iter_config_lines(text: str, source: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = line.split("=", 1)
        yield key.strip(), value.strip(), f"{source}:{lineno}"


def load_config(path, overrides: list | None = None, seed: int | None = None) -> TrainConfig:
    """Parse a config file, then apply KEY=VALUE overrides, then the seed."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}")
    pairs = list(iter_config_lines(text, str(path)))
    for i, item in enumerate(overrides or [], start=1):
        if "=" not in item:
            raise ConfigError(f"override #{i}: expected KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        pairs.append((key.strip(), value.strip(), f"--override {item!r}"))
    config = parse_config_pairs(pairs)
    if seed is not None:
        config.master_seed = int(seed)
    try:
        config.validate()
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}")
    return config


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def canonical_config_text(config: TrainConfig) -> str:
    """Every field as a parseable ``key = value`` line.

    Feeding the result back through load_config reproduces the config
    exactly, which is how finished runs stay reconstructible.
    """
    lines = [f"{name} = {_format_value(getattr(config, name))}" for name in _FIELDS]
    return "\n".join(lines) + "\n"
