"""Standard maps and measures: Hénon maps, ping-pong pairs, translated conjugates."""
from __future__ import annotations

from fractions import Fraction
from typing import Sequence

from .polyalg import GaussianRational
from .randwalk import MeasureSpec
from .wordgroup import SWAP, AffineSyllable, AmalgamWord, ElementarySyllable, invert_word, word_of


def henon_word(p_coefficients: Sequence, jac: object = 1) -> AmalgamWord:
    """h(x, y) = (y, p(y) - jac*x) written as swap o (p(y) - jac*x, y)."""
    e = ElementarySyllable.from_coefficients(-GaussianRational.of(jac), 1, 0, p_coefficients)
    return word_of(SWAP, e)


def rotation(c, s) -> AffineSyllable:
    """The linear map with matrix [[c, -s], [s, c]]."""
    return AffineSyllable.from_entries(c, -Fraction(s), s, c)


def translation(t1, t2) -> AffineSyllable:
    return AffineSyllable.from_entries(1, 0, 0, 1, t1, t2)


def conjugate(a: AffineSyllable, w: AmalgamWord) -> AmalgamWord:
    """a o w o a^-1."""
    return word_of(a) @ w @ word_of(a.inverse())


def symmetric_measure(words: Sequence[AmalgamWord], labels: Sequence[str] | None = None) -> MeasureSpec:
    """Uniform measure on the words and their inverses."""
    atoms, names = [], []
    share = Fraction(1, 2 * len(words))
    for idx, w in enumerate(words):
        name = labels[idx] if labels else f"g{idx}"
        atoms += [(w, share), (invert_word(w), share)]
        names += [name, name + "^-1"]
    return MeasureSpec(atoms, symmetric=True, labels=names)


def ping_pong_pair(h: AmalgamWord | None = None, a: AffineSyllable | None = None) -> tuple[AmalgamWord, AmalgamWord]:
    """A Hénon map f and its conjugate g = a f a^-1 by a rotation moving both
    indeterminacy points [1:0:0], [0:1:0] off that set."""
    f = h if h is not None else henon_word([0, 0, 1])
    a = a if a is not None else rotation(Fraction(3, 5), Fraction(4, 5))
    return f, conjugate(a, f)


def ping_pong_measure(h: AmalgamWord | None = None, a: AffineSyllable | None = None) -> MeasureSpec:
    f, g = ping_pong_pair(h, a)
    mu = symmetric_measure([f, g], labels=["f", "g"])
    mu.purely_loxodromic_checked = True
    return mu


def disjoint_k_measure(shift=(Fraction(40), Fraction(0)), h: AmalgamWord | None = None,
                       a: AffineSyllable | None = None) -> MeasureSpec:
    """f and tau g tau^-1 for the ping-pong pair (f, g) and a large translation tau."""
    f, g = ping_pong_pair(h, a)
    g_far = conjugate(translation(*shift), g)
    mu = symmetric_measure([f, g_far], labels=["f", "g'"])
    mu.purely_loxodromic_checked = True
    return mu


def dirac_measure(w: AmalgamWord) -> MeasureSpec:
    return MeasureSpec([(w, 1)], labels=["h"])
