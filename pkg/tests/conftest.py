import random

import numpy as np
import pytest

from dnabwt import WordCollection


def random_words(rng: random.Random, max_m: int = 12, max_len: int = 30) -> list[str]:
    return [
        "".join(rng.choice("ACGT") for _ in range(rng.randint(1, max_len)))
        for _ in range(rng.randint(1, max_m))
    ]


def random_collection(rng: random.Random, max_m: int = 12, max_len: int = 30) -> WordCollection:
    return WordCollection.from_words(random_words(rng, max_m, max_len))


def synthetic_reads(seed: int, n_reads: int, read_len: int = 150) -> WordCollection:
    rng = np.random.default_rng(seed)
    codes = rng.integers(0, 4, size=n_reads * read_len, dtype=np.uint8)
    offsets = np.arange(n_reads + 1, dtype=np.int64) * read_len
    return WordCollection(codes, offsets)


@pytest.fixture(autouse=True)
def _quiet_kappa_warnings():
    # tiny fixtures routinely use kappa above the input-size guideline
    import warnings

    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="kappa=", category=RuntimeWarning)
        yield
