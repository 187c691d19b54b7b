"""Deterministic seed derivation: one master seed, labeled subsystem streams."""

from __future__ import annotations

import hashlib


def derive_seed(master: int, *labels: object) -> int:
    """Map (master seed, labels) to a stable 63-bit seed.

    Pure string hashing, so the split is identical across platforms and
    process restarts. Every subsystem RNG (evaluation noise, sampling,
    predictor init, fold shuffles) is seeded through here from the run's
    single master seed.
    """
    text = "/".join([str(int(master)), *(str(label) for label in labels)])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1
