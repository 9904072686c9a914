"""Deterministic counter-based random streams.

Every source of randomness in the package is a Philox generator keyed by a
master seed plus a path of labels, e.g. ``stream(seed, "sampler", "uniform")``.
Distinct label paths give statistically independent streams, so concurrent
components never share mutable RNG state and any run is reproducible from its
master seed alone.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _key_word(label) -> int:
    if isinstance(label, (int, np.integer)) and not isinstance(label, bool):
        return int(label) & _MASK64
    digest = hashlib.sha256(repr(label).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def stream(master_seed: int, *labels) -> np.random.Generator:
    """Return a Philox generator keyed by ``(master_seed, *labels)``.

    Labels may be ints or any object with a stable ``repr`` (strings in
    practice). The same key always yields the same stream.
    """
    words = [int(master_seed) & _MASK64] + [_key_word(lab) for lab in labels]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))


def child_seed(master_seed: int, *labels) -> int:
    """Derive a 63-bit sub-seed, for components that want an int seed."""
    words = [int(master_seed) & _MASK64] + [_key_word(lab) for lab in labels]
    return int(np.random.SeedSequence(words).generate_state(1, np.uint64)[0] >> 1)
