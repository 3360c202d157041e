"""Small shared helpers."""

from __future__ import annotations

import hashlib


def mix_seed(global_seed: int, *parts) -> int:
    """Stable sub-seed from a global seed and coordinate parts.

    sha256-based so sweep cells and per-seed runs are independent yet
    reproducible across processes and platforms.
    """
    key = ":".join([str(int(global_seed))] + [str(p) for p in parts])
    digest = hashlib.sha256(key.encode()).digest()
    return int.from_bytes(digest[:4], "big")
