"""Stable seed derivation for nested pipeline stages.

Every randomized stage (per-client fits, per-class sampling, head
training) draws its seed from the master seed plus a context tuple, so
runs are reproducible regardless of execution order or thread count.
"""

import hashlib
import struct

_MASK63 = (1 << 63) - 1


def derive_seed(*keys: int | str) -> int:
    """Hash a tuple of ints and strings into a stable 63-bit seed."""
    h = hashlib.blake2b(digest_size=8)
    for key in keys:
        if isinstance(key, str):
            h.update(b"s")
            h.update(key.encode("utf-8"))
        else:
            h.update(b"i")
            h.update(struct.pack("<q", int(key)))
        h.update(b"\x00")
    return int.from_bytes(h.digest(), "little") & _MASK63
