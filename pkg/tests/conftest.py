import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from corpus_forge.phonemize import Lexicon  # noqa: E402

TOY_WORDS = {
    "cat": ["K", "AE1", "T"],
    "hat": ["HH", "AE1", "T"],
    "the": ["DH", "AH0"],
    "sat": ["S", "AE1", "T"],
    "on": ["AA1", "N"],
    "mat": ["M", "AE1", "T"],
    "a": ["AH0"],
    "dog": ["D", "AO1", "G"],
    "ran": ["R", "AE1", "N"],
    "to": ["T", "UW1"],
    "tin": ["T", "IH1", "N"],
    "note": ["N", "OW1", "T"],
}


@pytest.fixture
def toy_lexicon():
    return Lexicon.from_mapping(TOY_WORDS)


def random_sentences(rng, n, min_words=1, max_words=6):
    words = sorted(TOY_WORDS)
    return [
        " ".join(rng.choice(words, size=int(rng.integers(min_words, max_words + 1))))
        for _ in range(n)
    ]


def random_phoneme_corpus(rng, n, n_phones=12, min_len=2, max_len=9, skew=1.0):
    """Sequences over a Zipf-like phoneme inventory."""
    phones = [f"P{i}" for i in range(n_phones)]
    w = 1.0 / np.arange(1, n_phones + 1) ** skew
    w /= w.sum()
    return [
        [phones[i] for i in rng.choice(n_phones, size=int(rng.integers(min_len, max_len + 1)), p=w)]
        for _ in range(n)
    ]
