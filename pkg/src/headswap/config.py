"""Plain ``key = value`` config files (``#`` starts a comment)."""

from __future__ import annotations

from pathlib import Path

from .errors import InvalidArgument


def parse_key_values(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidArgument(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise InvalidArgument(f"line {lineno}: empty key")
        out[key.replace("-", "_")] = value.strip("'\"")
    return out


def load_config(path) -> dict[str, str]:
    return parse_key_values(Path(path).read_text())


def parse_floats(value: str) -> tuple[float, ...]:
    """Comma- or space-separated numbers, e.g. a per-dimension noise vector."""
    return tuple(float(v) for v in value.replace(",", " ").split())
