"""Hierarchical, label-keyed random streams.

Every stochastic component derives its generator from (root seed, component
labels), so substreams are independent of each other and of execution order.
Labels are hashed with SHA-256 to fixed 32-bit words, which keeps streams
stable across platforms and Python versions.
"""

import hashlib

import numpy as np


def _label_words(label) -> list[int]:
    digest = hashlib.sha256(repr(label).encode("utf-8")).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]


def seed_sequence(root_seed: int, *labels) -> np.random.SeedSequence:
    entropy = [int(root_seed) & 0xFFFFFFFF]
    for label in labels:
        entropy.extend(_label_words(label))
    return np.random.SeedSequence(entropy)


def substream(root_seed: int, *labels) -> np.random.Generator:
    """Generator for the component identified by ``labels`` under ``root_seed``."""
    return np.random.default_rng(seed_sequence(root_seed, *labels))


def derive_seed(root_seed: int, *labels) -> int:
    """32-bit integer seed for the component identified by ``labels``."""
    return int(seed_sequence(root_seed, *labels).generate_state(1, dtype=np.uint32)[0])


def state_keyed_seed(state: np.ndarray, salt: int = 0) -> int:
    """Deterministic 32-bit seed derived from the bytes of a state vector.

    Lets a sampling-based controller behave as a pure function of state.
    """
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(state, dtype=np.float64).tobytes())
    h.update(int(salt).to_bytes(8, "little", signed=True))
    return int.from_bytes(h.digest()[:4], "little")
