"""Per-scenario random streams.

Each scenario gets its own Philox stream: the key comes from the run seed and
the counter starts at ``scenario_id`` blocks of 2**128 draws, which is the
stream ``Philox(seed).jumped(scenario_id)``. Streams depend only on
(seed, scenario_id), never on how work is scheduled.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

__all__ = ["scenario_generator", "MAX_SEED"]

MAX_SEED = 2**64 - 1


@lru_cache(maxsize=8)
def _key(seed: int) -> np.ndarray:
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return np.random.Philox(np.random.SeedSequence(seed)).state["state"]["key"]


def scenario_generator(seed: int, scenario_id: int) -> np.random.Generator:
    if not 0 <= scenario_id <= MAX_SEED:
        raise ValueError("scenario ids are unsigned 64-bit integers")
    # word 2 of the 256-bit counter counts blocks of 2**128 draws
    counter = np.array([0, 0, scenario_id, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=_key(int(seed)), counter=counter))


@lru_cache(maxsize=8)
def _shared(seed: int) -> tuple:
    bg = np.random.Philox(key=_key(seed))
    return bg, bg.state


def _transient_generator(seed: int, scenario_id: int) -> np.random.Generator:
    """Same stream as :func:`scenario_generator`, without building a new bit generator.

    The bit generator is shared per seed, so the result is only valid until
    the next call. Callers must finish with it before asking for another.
    """
    if not 0 <= scenario_id <= MAX_SEED:
        raise ValueError("scenario ids are unsigned 64-bit integers")
    bg, state = _shared(int(seed))
    state["state"]["counter"] = np.array([0, 0, scenario_id, 0], dtype=np.uint64)
    bg.state = state
    return np.random.Generator(bg)
