"""Run configuration: line-oriented ``key = value`` sections over dataclasses.

One section per module config ([model], [train], [toy], [protocol]). Files
and ``--set section.key=value`` overrides share the same parser; unknown
sections or keys are rejected rather than ignored, and every run can echo an
``effective-config`` file that reproduces it exactly.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .evalbench import ProtocolSpec
from .model import ModelConfig
from .toyoracle import ToyOracleConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


SECTIONS = {
    "model": ModelConfig,
    "train": TrainConfig,
    "toy": ToyOracleConfig,
    "protocol": ProtocolSpec,
}


@dataclass
class RunConfig:
    model: ModelConfig
    train: TrainConfig
    toy: ToyOracleConfig
    protocol: ProtocolSpec


def _field_defaults(cls):
    out = {}
    for f in dataclasses.fields(cls):
        if f.default is not dataclasses.MISSING:
            out[f.name] = f.default
        elif f.default_factory is not dataclasses.MISSING:  # type: ignore[misc]
            out[f.name] = f.default_factory()  # type: ignore[misc]
    return out


def _parse_scalar(text, like):
    text = text.strip()
    if isinstance(like, bool):
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {text!r}")
    if isinstance(like, int):
        return int(text)
    if isinstance(like, float):
        return float(text)
    return text


def _parse_value(text, default):
    if isinstance(default, tuple):
        parts = [p for p in (x.strip() for x in text.split(",")) if p]
        like = default[0] if default else ""
        return tuple(_parse_scalar(p, like) for p in parts)
    return _parse_scalar(text, default)


def _coerce(section, raw):
    cls = SECTIONS[section]
    defaults = _field_defaults(cls)
    kwargs = {}
    for key, text in raw.items():
        if key not in defaults:
            raise ConfigError(f"unknown key {key!r} in section [{section}]")
        try:
            kwargs[key] = _parse_value(text, defaults[key])
        except (ValueError, TypeError) as err:
            raise ConfigError(f"[{section}] {key}: {err}") from None
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as err:
        raise ConfigError(f"[{section}]: {err}") from None


def parse_override(text):
    """'section.key=value' -> (section, key, value-string)."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form section.key=value")
    lhs, value = text.split("=", 1)
    if "." not in lhs:
        raise ConfigError(f"override {text!r} is not of the form section.key=value")
    section, key = lhs.split(".", 1)
    section, key = section.strip(), key.strip()
    if section not in SECTIONS:
        raise ConfigError(f"unknown config section {section!r}; valid: {sorted(SECTIONS)}")
    return section, key, value.strip()


def load_config(path=None, overrides=()):
    """Build a RunConfig from an optional file plus override strings."""
    raw = {name: {} for name in SECTIONS}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        cp = configparser.ConfigParser()
        cp.optionxform = str
        try:
            cp.read(path)
        except configparser.Error as err:
            raise ConfigError(f"{path}: {err}") from None
        for section in cp.sections():
            if section == "cli":
                continue  # provenance echo in effective-config files
            if section not in SECTIONS:
                raise ConfigError(f"{path}: unknown section [{section}]")
            raw[section].update(dict(cp[section]))
    for ov in overrides:
        section, key, value = parse_override(ov)
        raw[section][key] = value
    return RunConfig(**{name: _coerce(name, raw[name]) for name in SECTIONS})


def _fmt_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(_fmt_value(x) for x in v)
    return str(v)


def write_effective_config(path, run_cfg: RunConfig, cli_extra=None):
    """Echo the fully-resolved configuration (plus CLI context) to a file."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    if cli_extra:
        cp["cli"] = {k: str(v) for k, v in cli_extra.items()}
    for name in SECTIONS:
        obj = getattr(run_cfg, name)
        cp[name] = {
            f.name: _fmt_value(getattr(obj, f.name)) for f in dataclasses.fields(obj)
        }
    path = Path(path)
    with open(path, "w") as fh:
        cp.write(fh)
    return path
