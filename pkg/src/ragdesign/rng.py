"""Seed fan-out: one master seed feeds every random stream in the pipeline.

A stream is identified by a component name (``"tree"``, ``"chain"``,
``"split"``, ...) and an integer index. The component name is hashed with
BLAKE2b and combined with the master seed and the index through
``numpy.random.SeedSequence``, so stream ``("tree", 7)`` is the same no
matter how many other streams were drawn before it, or on which thread.
"""

import hashlib

import numpy as np


def _component_tag(component):
    digest = hashlib.blake2b(component.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_seed_sequence(seed, component, index=0):
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    return np.random.SeedSequence([int(seed), _component_tag(component), int(index)])


def derive_rng(seed, component, index=0):
    """Independent ``Generator`` for stream ``(component, index)`` of ``seed``."""
    return np.random.Generator(np.random.PCG64(derive_seed_sequence(seed, component, index)))
