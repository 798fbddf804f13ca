"""Seed derivation and key=value config parsing shared by all commands."""

from __future__ import annotations

import hashlib
from pathlib import Path


def derive_seed(*parts) -> int:
    """Stable unsigned 64-bit seed from any sequence of ints/strings."""
    payload = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def parse_kv_file(path: str | Path) -> dict[str, str]:
    """Read ``key=value`` lines; blank lines and ``#`` comments are ignored."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out
