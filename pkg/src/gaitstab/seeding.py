"""Named sub-seeds derived from a single global seed."""
import zlib

import numpy as np


def _name_key(name):
    if isinstance(name, (int, np.integer)):
        return int(name)
    return zlib.crc32(str(name).encode("utf8"))


def sub_seed(seed, *names):
    """Return a SeedSequence for ``seed`` specialised by ``names``.

    The same (seed, names) pair always maps to the same stream, and
    different names give statistically independent streams.
    """
    return np.random.SeedSequence([int(seed)] + [_name_key(n) for n in names])


def sub_rng(seed, *names):
    return np.random.default_rng(sub_seed(seed, *names))
