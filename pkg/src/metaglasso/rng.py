"""Keyed random substreams on top of numpy's counter-based Philox generator.

A stream is identified by a 64-bit seed plus a key path such as
``("task", 3)``. Strings in the key are mapped to integers by CRC32, so
the mapping is stable across processes and platforms. Adding a new
substream never shifts the draws of an existing one.
"""
import zlib
from typing import Union

import numpy as np

KeyPart = Union[int, str, float]

MASK64 = (1 << 64) - 1


def _key_word(part: KeyPart) -> int:
    if isinstance(part, (bool, np.bool_)):
        return int(part)
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("integer key parts must be non-negative")
        return int(part)
    text = part if isinstance(part, str) else repr(float(part))
    return zlib.crc32(text.encode())


def stream(seed: int, *key: KeyPart) -> np.random.Generator:
    """Independent generator for ``(seed, *key)``."""
    ss = np.random.SeedSequence(entropy=int(seed) & MASK64, spawn_key=tuple(_key_word(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *key: KeyPart) -> int:
    """A 64-bit child seed, for handing to functions that take a plain seed."""
    ss = np.random.SeedSequence(entropy=int(seed) & MASK64, spawn_key=tuple(_key_word(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
