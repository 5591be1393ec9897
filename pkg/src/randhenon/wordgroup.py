"""Normal forms in the amalgamated product G = A *_S E.

A word is a tuple of syllables applied right to left: ``[s1, s2, s3]``
stands for ``s1 o s2 o s3``.  Affine syllables are q -> M q + t and
elementary syllables are (x, y) -> (alpha*x + p(y), beta*y + delta).
S = A n E is the set of affine maps whose lower-left matrix entry is zero.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import prod
from typing import Iterable, Sequence, Union

from .errors import BudgetExceeded, NotAnAutomorphism, WordNotReduced
from .polyalg import (
    ONE,
    ZERO,
    GaussianRational,
    PlaneAutomorphism,
    PlanePolynomial,
    compose_univariate,
    power_cache,
)

_X = PlanePolynomial.x()
_Y = PlanePolynomial.y()


def _gr(value) -> GaussianRational:
    return GaussianRational.of(value)


@dataclass(frozen=True, eq=True)
class AffineSyllable:
    """q -> matrix @ q + translation."""

    matrix: tuple[tuple[GaussianRational, GaussianRational], tuple[GaussianRational, GaussianRational]]
    translation: tuple[GaussianRational, GaussianRational] = (ZERO, ZERO)

    def __post_init__(self):
        (a, b), (c, d) = self.matrix
        m = ((_gr(a), _gr(b)), (_gr(c), _gr(d)))
        t = (_gr(self.translation[0]), _gr(self.translation[1]))
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "translation", t)
        if not self.determinant:
            raise ValueError("affine syllable with singular matrix")

    @classmethod
    def from_entries(cls, a, b, c, d, t1=0, t2=0) -> "AffineSyllable":
        return cls(((a, b), (c, d)), (t1, t2))

    @property
    def determinant(self) -> GaussianRational:
        (a, b), (c, d) = self.matrix
        return a * d - b * c

    @property
    def degree(self) -> int:
        return 1

    def in_S(self) -> bool:
        return self._in_s

    @cached_property
    def _in_s(self) -> bool:
        return not self.matrix[1][0]

    def is_identity(self) -> bool:
        return self._is_identity

    @cached_property
    def _is_identity(self) -> bool:
        return self.matrix == ((ONE, ZERO), (ZERO, ONE)) and self.translation == (ZERO, ZERO)

    def __hash__(self):
        return self._hash

    @cached_property
    def _hash(self) -> int:
        return hash((self.matrix, self.translation))

    def inverse(self) -> "AffineSyllable":
        (a, b), (c, d) = self.matrix
        det = self.determinant
        ia, ib, ic, id_ = d / det, -b / det, -c / det, a / det
        t1, t2 = self.translation
        return AffineSyllable(((ia, ib), (ic, id_)), (-(ia * t1 + ib * t2), -(ic * t1 + id_ * t2)))

    def after(self, other: "AffineSyllable") -> "AffineSyllable":
        """self o other."""
        (a, b), (c, d) = self.matrix
        (e, f), (g, h) = other.matrix
        t1, t2 = self.translation
        u1, u2 = other.translation
        return AffineSyllable(
            ((a * e + b * g, a * f + b * h), (c * e + d * g, c * f + d * h)),
            (a * u1 + b * u2 + t1, c * u1 + d * u2 + t2),
        )

    def as_elementary(self) -> "ElementarySyllable":
        if not self.in_S():
            raise ValueError("affine syllable outside S is not elementary")
        (a, b), (_, d) = self.matrix
        t1, t2 = self.translation
        return ElementarySyllable(a, d, t2, PlanePolynomial.univariate_y([t1, b]))

    def apply_to(self, P: PlanePolynomial, Q: PlanePolynomial) -> tuple[PlanePolynomial, PlanePolynomial]:
        (a, b), (c, d) = self.matrix
        t1, t2 = self.translation
        return P.scale(a) + Q.scale(b) + t1, P.scale(c) + Q.scale(d) + t2

    def act_projective(self, point: Sequence[GaussianRational]) -> tuple[GaussianRational, ...]:
        """Image of a homogeneous point [X:Y:Z] (not normalized)."""
        (a, b), (c, d) = self.matrix
        t1, t2 = self.translation
        X, Y, Z = point
        return (a * X + b * Y + t1 * Z, c * X + d * Y + t2 * Z, Z)

    @cached_property
    def automorphism(self) -> PlaneAutomorphism:
        P, Q = self.apply_to(_X, _Y)
        return PlaneAutomorphism(P, Q, jacobian=self.determinant)

    def to_json(self) -> dict:
        return {
            "type": "affine",
            "matrix": [[list(v.to_strings()) for v in row] for row in self.matrix],
            "translation": [list(v.to_strings()) for v in self.translation],
        }


@dataclass(frozen=True, eq=True)
class ElementarySyllable:
    """(x, y) -> (alpha*x + p(y), beta*y + delta)."""

    alpha: GaussianRational
    beta: GaussianRational
    delta: GaussianRational
    p: PlanePolynomial = field(default_factory=PlanePolynomial)

    def __post_init__(self):
        object.__setattr__(self, "alpha", _gr(self.alpha))
        object.__setattr__(self, "beta", _gr(self.beta))
        object.__setattr__(self, "delta", _gr(self.delta))
        if not self.alpha or not self.beta:
            raise ValueError("elementary syllable needs alpha*beta != 0")
        if not self.p.in_y_only():
            raise ValueError("elementary syllable polynomial must depend on y only")

    @classmethod
    def from_coefficients(cls, alpha, beta, delta, p_coefficients: Iterable) -> "ElementarySyllable":
        return cls(alpha, beta, delta, PlanePolynomial.univariate_y(p_coefficients))

    @property
    def degree(self) -> int:
        return max(1, int(self.p.degree)) if not self.p.is_zero() else 1

    @property
    def determinant(self) -> GaussianRational:
        return self.alpha * self.beta

    def in_S(self) -> bool:
        return self._in_s

    @cached_property
    def _in_s(self) -> bool:
        return self.p.is_zero() or self.p.degree <= 1

    def is_identity(self) -> bool:
        return self._is_identity

    @cached_property
    def _is_identity(self) -> bool:
        return self.alpha == ONE and self.beta == ONE and not self.delta and self.p.is_zero()

    def __hash__(self):
        return self._hash

    @cached_property
    def _hash(self) -> int:
        return hash((self.alpha, self.beta, self.delta, self.p))

    def inverse(self) -> "ElementarySyllable":
        ia = ONE / self.alpha
        ib = ONE / self.beta
        shifted = compose_univariate(self.p, _Y.scale(ib) - self.delta * ib)
        return ElementarySyllable(ia, ib, -self.delta * ib, shifted.scale(-ia))

    def after(self, other: "ElementarySyllable") -> "ElementarySyllable":
        """self o other."""
        inner = compose_univariate(self.p, _Y.scale(other.beta) + other.delta)
        return ElementarySyllable(
            self.alpha * other.alpha,
            self.beta * other.beta,
            self.beta * other.delta + self.delta,
            other.p.scale(self.alpha) + inner,
        )

    def as_affine(self) -> AffineSyllable:
        if not self.in_S():
            raise ValueError("elementary syllable of degree >= 2 is not affine")
        return AffineSyllable(
            ((self.alpha, self.p.coefficient(0, 1)), (ZERO, self.beta)),
            (self.p.coefficient(0, 0), self.delta),
        )

    def apply_to(self, P: PlanePolynomial, Q: PlanePolynomial, q_powers=None) -> tuple[PlanePolynomial, PlanePolynomial]:
        return P.scale(self.alpha) + compose_univariate(self.p, Q, q_powers), Q.scale(self.beta) + self.delta

    @cached_property
    def automorphism(self) -> PlaneAutomorphism:
        P, Q = self.apply_to(_X, _Y)
        return PlaneAutomorphism(P, Q, jacobian=self.determinant)

    def to_json(self) -> dict:
        return {
            "type": "elementary",
            "alpha": list(self.alpha.to_strings()),
            "beta": list(self.beta.to_strings()),
            "delta": list(self.delta.to_strings()),
            "p": self.p.to_json(),
        }


Syllable = Union[AffineSyllable, ElementarySyllable]

SWAP = AffineSyllable.from_entries(0, 1, 1, 0)


def syllable_from_json(data: dict) -> Syllable:
    kind = data.get("type")
    if kind == "affine":
        m = [[GaussianRational.parse(*v) for v in row] for row in data["matrix"]]
        t = [GaussianRational.parse(*v) for v in data["translation"]]
        return AffineSyllable(((m[0][0], m[0][1]), (m[1][0], m[1][1])), (t[0], t[1]))
    if kind == "elementary":
        return ElementarySyllable(
            GaussianRational.parse(*data["alpha"]),
            GaussianRational.parse(*data["beta"]),
            GaussianRational.parse(*data["delta"]),
            PlanePolynomial.from_json(data["p"]),
        )
    raise ValueError(f"unknown syllable type {kind!r}")


def is_affine(s: Syllable) -> bool:
    return isinstance(s, AffineSyllable)


# Random walks multiply the same few syllable objects over and over, so
# merges are memoized on object identity (values are kept alive in the entry).
_MERGE_CACHE: dict[tuple[int, int], tuple] = {}
_MERGE_CACHE_LIMIT = 1 << 16


def merge_syllables(left: Syllable, right: Syllable) -> Syllable | None:
    """left o right as one syllable when both lie in a common factor, else None."""
    key = (id(left), id(right))
    hit = _MERGE_CACHE.get(key)
    if hit is not None and hit[0] is left and hit[1] is right:
        return hit[2]
    result = _merge_uncached(left, right)
    if len(_MERGE_CACHE) >= _MERGE_CACHE_LIMIT:
        _MERGE_CACHE.clear()
    _MERGE_CACHE[key] = (left, right, result)
    return result


def _merge_uncached(left: Syllable, right: Syllable) -> Syllable | None:
    left_aff, right_aff = is_affine(left), is_affine(right)
    if left_aff != right_aff:
        if left.in_S():
            left = left.as_elementary() if left_aff else left.as_affine()
        elif right.in_S():
            right = right.as_elementary() if right_aff else right.as_affine()
        else:
            return None
    return left.after(right)


def _canonical_single(s: Syllable) -> Syllable:
    # A lone element of S is stored in affine form.
    if not is_affine(s) and s.in_S():
        return s.as_affine()
    return s


class WordStack:
    """A reduced word under construction, growing at either end.

    Syllables are stored right-to-left: ``items[0]`` is applied first.
    ``push_left`` multiplies on the left (the prefix-product update) and
    records how deep reduction reached in ``low_water``.
    """

    __slots__ = ("items", "low_water")

    def __init__(self, syllables: Sequence[Syllable] = ()):
        self.items: list[Syllable] = []
        self.low_water = 0
        for s in reversed(syllables):
            self.push_left(s)

    def push_left(self, s: Syllable) -> None:
        items = self.items
        if s.is_identity():
            return
        while items:
            merged = merge_syllables(s, items[-1])
            if merged is None:
                break
            items.pop()
            if len(items) < self.low_water:
                self.low_water = len(items)
            s = merged
            if s.is_identity():
                return
        items.append(s)

    def push_word_left(self, syllables: Sequence[Syllable]) -> int:
        """Left-multiply by a whole word; returns the lowest untouched depth."""
        self.low_water = len(self.items)
        for s in reversed(syllables):
            self.push_left(s)
        # A trailing S syllable on top of a longer stack cannot occur: merges
        # absorb it unless the stack was empty.
        return self.low_water

    def syllables(self) -> tuple[Syllable, ...]:
        out = tuple(reversed(self.items))
        if len(out) == 1:
            return (_canonical_single(out[0]),)
        return out

    def __len__(self):
        return len(self.items)


def _reduce(syllables: Sequence[Syllable]) -> tuple[Syllable, ...]:
    return WordStack(syllables).syllables()


@dataclass(frozen=True)
class AmalgamWord:
    syllables: tuple[Syllable, ...] = ()
    reduced: bool = False

    def __post_init__(self):
        object.__setattr__(self, "syllables", tuple(self.syllables))

    def __len__(self):
        return len(self.syllables)

    @property
    def length(self) -> int:
        """Tree length: 0 for words representing elements of S."""
        if len(self.syllables) == 1 and self.syllables[0].in_S():
            return 0
        return len(self.syllables)

    def elementary_degrees(self) -> list[int]:
        return [s.degree for s in self.syllables if not is_affine(s) and not s.in_S()]

    def degree_product(self) -> int:
        return prod(self.elementary_degrees())

    def __matmul__(self, other: "AmalgamWord") -> "AmalgamWord":
        """Reduced product self o other."""
        return reduce_word(AmalgamWord(self.syllables + other.syllables))

    def to_json(self) -> list:
        return [s.to_json() for s in self.syllables]

    @classmethod
    def from_json(cls, data: list, reduced: bool = False) -> "AmalgamWord":
        return cls(tuple(syllable_from_json(d) for d in data), reduced)


@dataclass(frozen=True)
class WordClass:
    kind: str  # "Elliptic" or "Loxodromic"
    dynamical_degree: int
    translation_length: int
    conjugator: AmalgamWord


def reduce_word(w: AmalgamWord) -> AmalgamWord:
    if w.reduced:
        return w
    return AmalgamWord(_reduce(w.syllables), True)


def is_reduced_sequence(syllables: Sequence[Syllable]) -> bool:
    if len(syllables) <= 1:
        return True
    for i, s in enumerate(syllables):
        if s.in_S():
            return False
        if i and is_affine(s) == is_affine(syllables[i - 1]):
            return False
    return True


def compose_word(w: AmalgamWord, *, bit_budget: int | None = None) -> PlaneAutomorphism:
    """The automorphism represented by the word, expanded exactly."""
    P, Q = _X, _Y
    jac = ONE
    for s in reversed(w.syllables):
        P, Q = s.apply_to(P, Q)
        jac = jac * s.determinant
        if bit_budget is not None:
            bits = max(P.coefficient_bits(), Q.coefficient_bits())
            if bits > bit_budget:
                raise BudgetExceeded(f"word expansion needs {bits} > {bit_budget} coefficient bits")
    return PlaneAutomorphism(P, Q, jacobian=jac)


def invert_word(w: AmalgamWord) -> AmalgamWord:
    return AmalgamWord(tuple(s.inverse() for s in reversed(w.syllables)), w.reduced)


def word_of(*syllables: Syllable) -> AmalgamWord:
    return reduce_word(AmalgamWord(syllables))


def _affine_from_linear(P: PlanePolynomial, Q: PlanePolynomial) -> AffineSyllable:
    try:
        return AffineSyllable(
            ((P.coefficient(1, 0), P.coefficient(0, 1)), (Q.coefficient(1, 0), Q.coefficient(0, 1))),
            (P.constant_term(), Q.constant_term()),
        )
    except ValueError as exc:
        raise NotAnAutomorphism("degree reduction ended at a singular affine map") from exc


def jung_decompose(f: PlaneAutomorphism) -> AmalgamWord:
    """Factor f into affine and elementary syllables by degree reduction."""
    P, Q = f.first, f.second
    factors: list[Syllable] = []
    q_powers = power_cache(Q)
    while max(P.degree, Q.degree) > 1:
        dP, dQ = P.degree, Q.degree
        if dP < dQ:
            factors.append(SWAP)
            P, Q = Q, P
            q_powers = power_cache(Q)
            continue
        if dQ < 1 or dP % dQ:
            raise NotAnAutomorphism(f"top forms of degrees {dP} and {dQ} cannot cancel")
        k = dP // dQ
        top_p = P.top_form()
        top_qk = Q.top_form() ** k
        monomial = next(iter(top_qk.terms()))
        c = top_p.coefficient(*monomial) / top_qk.coefficient(*monomial)
        if not c or top_p != top_qk.scale(c):
            raise NotAnAutomorphism(f"top form of degree {dP} is not a multiple of a power of the other")
        # f = (x + c*y^k, y) o (P - c*Q^k, Q)
        factors.append(ElementarySyllable(ONE, ONE, ZERO, PlanePolynomial.from_terms({(0, k): c})))
        P = P - q_powers.get(k).scale(c)
    factors.append(_affine_from_linear(P, Q))
    return reduce_word(AmalgamWord(tuple(factors)))


def cyclic_reduce_classify(w: AmalgamWord) -> WordClass:
    if not w.reduced and not is_reduced_sequence(w.syllables):
        raise WordNotReduced("cyclic reduction needs a reduced word")
    current = list(w.syllables)
    conjugator: list[Syllable] = []
    while len(current) >= 2 and is_affine(current[0]) == is_affine(current[-1]):
        # conjugate by the first syllable: s1^-1 (s1 ... sn) s1
        head = current[0]
        conjugator.append(head)
        current = list(_reduce(current[1:] + [head]))
    cyc = AmalgamWord(tuple(current), True)
    conj = reduce_word(AmalgamWord(tuple(conjugator)))
    if cyc.length <= 1:
        return WordClass("Elliptic", 1, 0, conj)
    return WordClass("Loxodromic", cyc.degree_product(), len(cyc), conj)


def tree_metrics(g: AmalgamWord, h: AmalgamWord) -> int:
    """Distance between the edges gS and hS of the Bass-Serre tree."""
    for w in (g, h):
        if not w.reduced and not is_reduced_sequence(w.syllables):
            raise WordNotReduced("tree distance needs reduced words")
    return (invert_word(g) @ h).length
