"""Named sub-streams derived from one root seed.

Every source of randomness in the pipeline (fold split, shuffle, weight init,
pair sampling, ...) draws from its own stream so that stages can be re-run or
reordered without perturbing each other.
"""

from __future__ import annotations

import hashlib

import numpy as np


def substream_seed(root_seed: int, name: str) -> int:
    """Stable 64-bit seed for the sub-stream `name` under `root_seed`."""
    digest = hashlib.blake2b(
        f"{root_seed}:{name}".encode("utf-8"), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little")


def substream(root_seed: int, name: str) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(substream_seed(root_seed, name)))
