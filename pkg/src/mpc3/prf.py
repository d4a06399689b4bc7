"""AES-128-CTR pseudorandom word streams with purpose separation.

A stream is addressed by (key, purpose, index): the 16-byte initial counter
block is purpose tag (2 bytes LE) || stream counter (6 bytes LE) || 8 zero
bytes. CTR's per-block increment runs over the big-endian tail of the block
and never carries into the 6-byte stream counter for fewer than 2^64 blocks,
so distinct (purpose, index) pairs can never produce overlapping keystreams.
"""

from __future__ import annotations

import hashlib

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .errors import ConfigError, RangeError

KEY_BYTES = 16
MAX_PURPOSE = 1 << 16
MAX_STREAM_INDEX = 1 << 48

# purpose tags, one per protocol use of correlated randomness
PURPOSE_ARITH_ZERO = 0x0001
PURPOSE_XOR_ZERO = 0x0002
PURPOSE_TRUNC_RHO = 0x0003
PURPOSE_TRUNC_R = 0x0004
PURPOSE_BIN_INPUT = 0x0005


class PrfKey:
    """A 128-bit PRF key producing deterministic uint64 word streams."""

    def __init__(self, key: bytes):
        if len(key) != KEY_BYTES:
            raise ConfigError(f"PRF key must be {KEY_BYTES} bytes, got {len(key)}")
        self.key = bytes(key)
        self._algo = algorithms.AES(self.key)

    def words(self, purpose: int, index: int, count: int) -> np.ndarray:
        """Return `count` pseudorandom uint64 words for (purpose, index)."""
        if not 0 <= purpose < MAX_PURPOSE:
            raise RangeError(f"purpose tag {purpose} outside 16 bits")
        if not 0 <= index < MAX_STREAM_INDEX:
            raise RangeError(f"stream counter {index} outside 48 bits")
        block = purpose.to_bytes(2, "little") + index.to_bytes(6, "little") + bytes(8)
        enc = Cipher(self._algo, modes.CTR(block)).encryptor()
        stream = enc.update(bytes(int(count) * 8))
        return np.frombuffer(stream, dtype="<u8").astype(np.uint64, copy=False)

    def __eq__(self, other) -> bool:
        return isinstance(other, PrfKey) and self.key == other.key

    def __repr__(self) -> str:  # never print key material
        return "PrfKey(<128 bits>)"


def derive_key(seed: bytes, session_id: bytes, label: str) -> PrfKey:
    """Deterministic key derivation, bound to a session id."""
    digest = hashlib.sha256(b"mpc3-key|" + seed + b"|" + session_id + b"|" + label.encode()).digest()
    return PrfKey(digest[:KEY_BYTES])
