"""Shared plumbing: deterministic RNG streams, canonical JSON, stable hashing."""

import json
import hashlib
import zlib

import numpy as np


def rng_stream(seed: int, *subkeys: int) -> np.random.Generator:
    """Deterministic, platform-independent RNG substream.

    Built on the Philox 4x64 counter-based generator; (seed, subkeys) select
    a substream, so per-subject / per-fold work can run in any order and
    still reproduce bit-for-bit.
    """
    mixed = seed & 0xFFFFFFFFFFFFFFFF
    sub = 0
    for k in subkeys:
        sub = (sub * 0x9E3779B97F4A7C15 + k + 1) & 0xFFFFFFFFFFFFFFFF
    key = np.array([mixed, sub], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def canonical_json(obj) -> str:
    """Key-sorted, compact JSON; byte-deterministic for identical input."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def stable_text_index(text: str, vocab_size: int) -> int:
    """Platform- and process-stable hash bucket for a text response.

    Never use builtin hash() here: it is salted per process and would break
    run-to-run determinism.
    """
    return zlib.crc32(text.encode("utf-8")) % vocab_size
