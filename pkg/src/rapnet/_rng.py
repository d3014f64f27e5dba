"""Seed derivation.

Every random stream in the package comes from ``numpy.random.default_rng``
(PCG64) seeded through a ``SeedSequence`` whose entropy is the root seed and
whose spawn key names the purpose, e.g. ``("couplings",)`` or
``("sweep", lambda_index, sample)``.  String keys are folded to 32-bit ints
with CRC32 so the mapping is stable across processes and Python versions.
"""

import zlib

import numpy as np


def _key(part):
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part)


def derive_seed(root, *keys):
    """Return a ``SeedSequence`` for the stream named by ``keys``."""
    return np.random.SeedSequence(entropy=int(root), spawn_key=tuple(_key(k) for k in keys))


def derive_rng(root, *keys):
    """Return an independent generator for the stream named by ``keys``."""
    return np.random.default_rng(derive_seed(root, *keys))


def derive_int(root, *keys):
    """Return a 63-bit integer seed, for handing to code that wants a plain int."""
    return int(derive_seed(root, *keys).generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
