"""Frozen reference values for the canonical test configuration.

The manifest ``data/golden.txt`` holds one ``name value`` pair per line;
``#`` starts a comment (full-line comments carry the provenance of each
value: generating script, resolutions, date).  Regenerate with the scripts
under ``tools/``.
"""

from __future__ import annotations

from importlib import resources

__all__ = ["load", "value"]

_cache: dict | None = None


def load() -> dict:
    """Parse the manifest once and cache it."""
    global _cache
    if _cache is None:
        text = (resources.files("perfhom") / "data" / "golden.txt").read_text()
        out = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            name, val = line.split()
            out[name] = float(val)
        _cache = out
    return _cache


def value(name: str) -> float:
    return load()[name]
