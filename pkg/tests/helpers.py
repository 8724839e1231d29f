"""Shared builders for randomized test instances."""

from __future__ import annotations

import numpy as np

from toralclt.exact_linalg import Alphabet, IntMatrix, Word, standard_alphabet
from toralclt.test_functions import TrigPoly

L = IntMatrix([[2, 1], [1, 1]])
R = IntMatrix([[1, 1], [1, 2]])

# small mixed-sign unimodular letters (products of elementary shears)
SHEAR_ALPHABET = Alphabet(
    ["U", "D", "V"],
    [
        IntMatrix([[1, 1], [0, 1]]),
        IntMatrix([[1, 0], [1, 1]]),
        IntMatrix([[1, -1], [0, 1]]),
    ],
)

DIM3_ALPHABET = Alphabet(
    ["a", "b"],
    [
        IntMatrix([[1, 1, 0], [0, 1, 0], [0, 0, 1]]),
        IntMatrix([[1, 0, 0], [0, 1, 1], [1, 0, 1]]),
    ],
)


def random_word(rng: np.random.Generator, alphabet: Alphabet, n: int) -> Word:
    return Word(alphabet, tuple(int(i) for i in rng.integers(0, len(alphabet), n)))


def standard_word(rng: np.random.Generator, n: int) -> Word:
    return random_word(rng, standard_alphabet(), n)


def random_trig_poly(
    rng: np.random.Generator,
    dim: int,
    max_terms: int,
    max_freq: int = 3,
    allow_const: bool = True,
) -> TrigPoly:
    """Random trig polynomial with at most max_terms frequency pairs."""
    terms = {}
    n_terms = int(rng.integers(1, max_terms + 1))
    while len(terms) < n_terms:
        p = tuple(int(x) for x in rng.integers(-max_freq, max_freq + 1, dim))
        if all(x == 0 for x in p):
            continue
        # canonicalize so a pair never gets two conflicting coefficients
        for x in p:
            if x > 0:
                break
            if x < 0:
                p = tuple(-y for y in p)
                break
        c = complex(rng.normal(), rng.normal())
        terms[p] = c
    const = float(rng.normal()) if (allow_const and rng.random() < 0.3) else 0.0
    return TrigPoly(dim, terms, const=const)


def as_plain_letters(word: Word):
    """The word's letters as tuples of tuple rows, for the oracles."""
    return [tuple(tuple(row) for row in word.letter(k).rows) for k in range(1, len(word) + 1)]


def signed_terms(g: TrigPoly):
    return list(g.signed_items())
