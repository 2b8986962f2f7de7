"""Deterministic derivation of named sub-seeds from a single master seed."""

import hashlib


def subseed(seed: int, label: str) -> int:
    """Derive a stable 63-bit sub-seed from (seed, label).

    Uses SHA-256 so the mapping is identical across platforms and Python
    versions (never hash()).
    """
    digest = hashlib.sha256(f"{int(seed)}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1
