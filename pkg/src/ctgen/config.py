"""Flat key=value run configuration.

One ``key = value`` pair per line, ``#`` starts a comment, unknown keys are
rejected with their line number. Defaults mirror the training recipe;
``noise_dim`` is derived from ``image_size`` when not given.
"""

from dataclasses import dataclass, fields

from ctgen.errors import ConfigError
from ctgen.model import GanConfig


@dataclass
class RunConfig:
    """GanConfig knobs plus the paths and intervals the CLI needs."""

    gan: GanConfig
    data_dir: str = ""
    out_dir: str = ""
    checkpoint_interval: int = 1000
    sample_interval: int = 1000
    log_interval: int = 10


_GAN_FIELDS = {f.name: f.type for f in fields(GanConfig)}
_RUN_FIELDS = {
    "data_dir": str,
    "out_dir": str,
    "checkpoint_interval": int,
    "sample_interval": int,
    "log_interval": int,
}
_TYPES = {"int": int, "float": float, "str": str}


def _coerce(key, text, typ, lineno):
    typ = _TYPES.get(typ, typ)
    try:
        if typ is int:
            return int(text)
        if typ is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"line {lineno}: key {key!r} expects {typ.__name__}, got {text!r}")


def parse_run_config(text):
    """Parse config text into a RunConfig; raises ConfigError with the
    offending line for unknown keys, bad values, or invariant violations."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if key in _GAN_FIELDS:
            raw[key] = _coerce(key, value, _GAN_FIELDS[key], lineno)
        elif key in _RUN_FIELDS:
            raw[key] = _coerce(key, value, _RUN_FIELDS[key], lineno)
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")

    gan_kwargs = {k: v for k, v in raw.items() if k in _GAN_FIELDS}
    if "noise_dim" not in gan_kwargs:
        size = gan_kwargs.get("image_size", GanConfig.image_size)
        gan_kwargs["noise_dim"] = (size // 4) ** 2
    gan = GanConfig(**gan_kwargs)  # validates invariants
    run_kwargs = {k: v for k, v in raw.items() if k in _RUN_FIELDS}
    return RunConfig(gan=gan, **run_kwargs)


def load_run_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}")
    return parse_run_config(text)
