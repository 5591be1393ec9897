"""Random exact syllables and words shared by the test modules."""
from __future__ import annotations

import math
import random
from fractions import Fraction

from hypothesis import strategies as st

from randhenon.polyalg import GaussianRational
from randhenon.wordgroup import AffineSyllable, AmalgamWord, ElementarySyllable, reduce_word


def small_rational(rng: random.Random, bound: int = 10) -> Fraction:
    return Fraction(rng.randint(-bound, bound), rng.randint(1, 3))


def nonzero_rational(rng: random.Random, bound: int = 10) -> Fraction:
    while True:
        q = small_rational(rng, bound)
        if q:
            return q


def random_affine_outside_s(rng: random.Random) -> AffineSyllable:
    """An affine syllable with nonzero lower-left entry (so not in S)."""
    while True:
        a, b, d = (small_rational(rng) for _ in range(3))
        c = nonzero_rational(rng)
        if a * d - b * c:
            return AffineSyllable.from_entries(a, b, c, d, small_rational(rng), small_rational(rng))


def random_elementary(rng: random.Random, degree: int) -> ElementarySyllable:
    coeffs = [small_rational(rng) for _ in range(degree)] + [nonzero_rational(rng)]
    return ElementarySyllable.from_coefficients(nonzero_rational(rng), nonzero_rational(rng), small_rational(rng), coeffs)


def random_reduced_word(rng: random.Random, max_degree: int = 64, *, lead_affine=None, tail_affine=None) -> AmalgamWord:
    """Alternating word with elementary degrees multiplying to at most max_degree."""
    degrees = []
    budget = max_degree
    while budget >= 2 and (not degrees or rng.random() < 0.7):
        d = rng.randint(2, min(budget, 4))
        degrees.append(d)
        budget //= d
    syl = []
    if lead_affine if lead_affine is not None else rng.random() < 0.5:
        syl.append(random_affine_outside_s(rng))
    for i, d in enumerate(degrees):
        if i:
            syl.append(random_affine_outside_s(rng))
        syl.append(random_elementary(rng, d))
    if tail_affine if tail_affine is not None else rng.random() < 0.5:
        syl.append(random_affine_outside_s(rng))
    return AmalgamWord(tuple(syl))


@st.composite
def reduced_words(draw, max_degree: int = 16):
    seed = draw(st.integers(0, 2**32 - 1))
    return reduce_word(random_reduced_word(random.Random(seed), max_degree))


def gaussian(re, im=0) -> GaussianRational:
    return GaussianRational(Fraction(re), Fraction(im))


def close(a: float, b: float, rel: float = 1e-12, abs_tol: float = 0.0) -> bool:
    return math.isclose(a, b, rel_tol=rel, abs_tol=abs_tol)
