"""Stable 64-bit hashing of key bytes (reproducible across runs and processes)."""

from hashlib import blake2b


def stable_hash(key, salt=0):
    """64-bit BLAKE2b digest of ``key``; ``salt`` selects an independent hash."""
    if salt:
        h = blake2b(key, digest_size=8, salt=salt.to_bytes(8, "little"))
    else:
        h = blake2b(key, digest_size=8)
    return int.from_bytes(h.digest(), "little")


def partition_of(key, partitions, salt=0):
    return stable_hash(key, salt) % partitions
