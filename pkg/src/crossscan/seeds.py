"""Deterministic seed derivation.

Every random decision in the package draws from a Generator seeded through
``derive``.  A master seed plus a sequence of string/int tags is hashed with
SHA-256 and the first eight bytes become the child seed, so any component's
randomness can be reproduced in isolation and no two roles ever share a
stream by accident.

Tag conventions used by the experiment harness:

    ("subj", role, index)              phantom subject seeds per role
    ("noise", role, index, protocol)   scan noise seeds
    ("patch", role, index, repeat)     patch sampling seeds
    ("pairs", arm, repeat)             pair building / subsampling
    ("train", model, arm, repeat)      network init + dropout + shuffling
    ("cv", purpose, arm, repeat)       cross-validation fold seeds

Roles are short strings such as "source", "target-train", "test-target".
"""

import hashlib

import numpy as np


def derive(master_seed, *parts):
    """Derive a 64-bit child seed from a master seed and a tag sequence."""
    text = ":".join([str(int(master_seed))] + [str(p) for p in parts])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(master_seed, *parts):
    """A numpy Generator seeded from ``derive(master_seed, *parts)``."""
    return np.random.default_rng(derive(master_seed, *parts))
