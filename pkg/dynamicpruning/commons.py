"""
Shared defaults and seed handling.
"""
import numpy as np

DEFAULT_ALPHA = 0.8
DEFAULT_EPSILON = 0.1
DEFAULT_C = 1.0
DEFAULT_HI = 0.9
DEFAULT_LO = 0.1
DEFAULT_EL2N_MODELS = 5
DEFAULT_EL2N_EPOCHS = 5

_consumers = {
    "init": 0,
    "shuffle": 1,
    "policy": 2,
    "data": 3,
    "split": 4,
    "static": 5,
    "el2n": 6,
    "forget": 7,
}

def derive_seed(root : int, consumer : str, *salt : int) -> int:
    """
    Derive a child seed for one consumer of randomness from the root seed of a run.
    The same (root, consumer, salt) always gives the same seed.
    """
    try:
        consumer_id = _consumers[consumer]
    except KeyError:
        raise ValueError(f"Unknown randomness consumer {consumer!r}") from None
    sequence = np.random.SeedSequence(entropy=int(root), spawn_key=(consumer_id, *map(int, salt)))
    return int(sequence.generate_state(1, dtype=np.uint32)[0])

def derive_rng(root : int, consumer : str, *salt : int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, consumer, *salt))
