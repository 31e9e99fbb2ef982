"""Small file helpers: atomic writes and ``key = value`` sidecar headers."""

import os
from pathlib import Path

from .errors import ConfigError

PARTIAL_SUFFIX = ".partial"


def partial_path(path):
    return Path(str(path) + PARTIAL_SUFFIX)


def atomic_write_bytes(path, data):
    tmp = partial_path(path)
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def read_header(path):
    """Parse a sidecar header of ``key = value`` lines ('#' starts a comment)."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"missing header file {path}", key=str(path))
    out = {}
    for line in path.read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"malformed header line {line!r} in {path}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def format_float(x):
    """Shortest round-tripping text for a float (deterministic)."""
    return repr(float(x))
