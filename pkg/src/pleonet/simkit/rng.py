"""Deterministic labelled random substreams."""

import hashlib

import numpy as np


def stream_seed(master_seed: int, label: str) -> int:
    digest = hashlib.sha256(f"{int(master_seed)}\x1f{label}".encode()).digest()
    return int.from_bytes(digest[:16], "little")


def rng_stream(master_seed: int, label: str) -> np.random.Generator:
    """Independent generator for ``label`` under ``master_seed``.

    The (seed, label) pair is hashed with SHA-256, so streams are stable across
    processes and platforms and unrelated labels do not share state.
    """
    return np.random.Generator(np.random.PCG64(stream_seed(master_seed, label)))
