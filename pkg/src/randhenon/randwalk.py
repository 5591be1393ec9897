"""Random left products f^n = f_{n-1} ... f_0 and their normal-form prefixes."""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .errors import BudgetExceeded, NotStabilized
from .polyalg import GaussianRational, PlaneAutomorphism, equals
from .wordgroup import (
    AffineSyllable,
    AmalgamWord,
    ElementarySyllable,
    Syllable,
    WordStack,
    compose_word,
    invert_word,
    is_affine,
    reduce_word,
)

_TWO64 = 1 << 64


@dataclass(frozen=True)
class Atom:
    word: AmalgamWord
    weight: Fraction
    label: str = ""


class MeasureSpec:
    """A finitely supported probability measure on G with exact weights."""

    def __init__(self, atoms: Sequence[tuple[AmalgamWord, object]], *, symmetric: bool = False,
                 purely_loxodromic_checked: bool = False, labels: Sequence[str] | None = None):
        if not atoms:
            raise ValueError("a measure needs at least one atom")
        built = []
        for idx, (word, weight) in enumerate(atoms):
            weight = Fraction(weight)
            if weight <= 0:
                raise ValueError(f"atom {idx} has non-positive weight {weight}")
            label = labels[idx] if labels else f"f{idx}"
            built.append(Atom(reduce_word(word), weight, label))
        total = sum(a.weight for a in built)
        if total != 1:
            raise ValueError(f"weights sum to {total}, not 1")
        self.atoms: tuple[Atom, ...] = tuple(built)
        self.symmetric = symmetric
        self.purely_loxodromic_checked = purely_loxodromic_checked
        self._maps = None
        cumulative = Fraction(0)
        self._thresholds = []
        for a in self.atoms:
            cumulative += a.weight
            # atom i is drawn when u / 2^64 < cumulative weight
            self._thresholds.append(cumulative)
        if symmetric:
            self._check_symmetric()

    def __len__(self):
        return len(self.atoms)

    @property
    def maps(self) -> list[PlaneAutomorphism]:
        if self._maps is None:
            self._maps = [compose_word(a.word) for a in self.atoms]
        return self._maps

    def inverse_index(self) -> list[int | None]:
        """For each atom, the index of an atom equal to its inverse (or None)."""
        inverses = [compose_word(invert_word(a.word)) for a in self.atoms]
        out = []
        for inv in inverses:
            match = None
            for j, m in enumerate(self.maps):
                if equals(inv, m):
                    match = j
                    break
            out.append(match)
        return out

    def _check_symmetric(self):
        for i, j in enumerate(self.inverse_index()):
            if j is None or self.atoms[j].weight != self.atoms[i].weight:
                raise ValueError(f"measure declared symmetric but atom {i} has no inverse of equal weight")

    def draw(self, u: int) -> int:
        """Inverse-CDF lookup of a 64-bit uniform integer, exact."""
        for i, c in enumerate(self._thresholds):
            if u * c.denominator < c.numerator * _TWO64:
                return i
        return len(self.atoms) - 1

    def reflected(self) -> "MeasureSpec":
        """The law of g^-1 for g drawn from this measure."""
        return MeasureSpec([(invert_word(a.word), a.weight) for a in self.atoms],
                           symmetric=self.symmetric, labels=[a.label + "^-1" for a in self.atoms])


def counter_uniform(seed: int, counter: int) -> int:
    """64-bit uniform integer at position `counter` of the stream `seed`."""
    if not 0 <= seed < _TWO64:
        raise ValueError("seeds are unsigned 64-bit integers")
    digest = hashlib.blake2b(counter.to_bytes(8, "little"), digest_size=8,
                             key=seed.to_bytes(8, "little")).digest()
    return int.from_bytes(digest, "little")


class WalkPath:
    """omega = (f_0, f_1, ...): atom indices drawn lazily from a counter-based stream."""

    def __init__(self, mu: MeasureSpec, seed: int):
        self.mu = mu
        self.seed = int(seed)
        self._steps: list[int] = []

    def step(self, n: int) -> int:
        self._fill(n + 1)
        return self._steps[n]

    def extend(self, n: int) -> list[int]:
        self._fill(n)
        return self._steps[:n]

    def _fill(self, n: int):
        while len(self._steps) < n:
            self._steps.append(self.mu.draw(counter_uniform(self.seed, len(self._steps))))

    def __getitem__(self, n: int) -> int:
        return self.step(n)


def sample_path(mu: MeasureSpec, seed: int) -> WalkPath:
    return WalkPath(mu, seed)


class ScriptedPath(WalkPath):
    """A fixed itinerary of atom indices, repeated periodically past its end."""

    def __init__(self, mu: MeasureSpec, steps: Sequence[int], seed: int = 0):
        super().__init__(mu, seed)
        if not steps or not all(0 <= s < len(mu) for s in steps):
            raise ValueError("steps must be a nonempty list of atom indices")
        self._script = list(steps)

    def _fill(self, n: int):
        while len(self._steps) < n:
            self._steps.append(self._script[len(self._steps) % len(self._script)])


class LeftProducts:
    """Incrementally reduced words of f^n, one left multiplication per step."""

    def __init__(self, path: WalkPath):
        self.path = path
        self.n = 0
        self.stack = WordStack()

    def advance(self) -> int:
        """Apply the next atom on the left; returns the untouched right-end depth."""
        atom = self.path.mu.atoms[self.path.step(self.n)]
        low = self.stack.push_word_left(atom.word.syllables)
        self.n += 1
        return low

    def word(self) -> AmalgamWord:
        return AmalgamWord(self.stack.syllables(), True)


def prefix_products(path: WalkPath, n: int) -> AmalgamWord:
    if n < 0:
        raise ValueError("n must be non-negative")
    walker = LeftProducts(path)
    for _ in range(n):
        walker.advance()
    return walker.word()


@dataclass
class PrefixTable:
    """Right-end pairs of f^n that no longer change up to the horizon."""

    seed: int
    horizon: int
    trailing_affine: AffineSyllable | None
    stable_syllables: list[tuple[AffineSyllable, ElementarySyllable]]
    t: list[int]
    observed_t: list[int]
    l: list[float]
    lengths: list[int]
    final_word: AmalgamWord = field(repr=False)

    @property
    def depth(self) -> int:
        return len(self.stable_syllables)

    @property
    def t_k_at_horizon(self) -> list[int]:
        return list(self.t)

    def block_length(self, k: int) -> int:
        """Number of right-end syllables covered by k stable pairs."""
        return 2 * k + (1 if self.trailing_affine is not None else 0)

    def stable_word(self, k: int | None = None) -> AmalgamWord:
        """Right-end block a_k e_k ... a_1 e_1 (then the trailing affine)."""
        k = self.depth if k is None else k
        syl: list[Syllable] = []
        for a, e in reversed(self.stable_syllables[:k]):
            syl.extend((a, e))
        if self.trailing_affine is not None:
            syl.append(self.trailing_affine)
        return AmalgamWord(tuple(syl), True)

    def hfactors(self, k: int | None = None) -> list[tuple[AffineSyllable, ElementarySyllable]]:
        k = self.depth if k is None else k
        return self.stable_syllables[:k]


def stabilization_times(path: WalkPath, K: int, N_max: int, *, persistence: int | None = None,
                        strict: bool = True) -> PrefixTable:
    """Scan f^1 ... f^N_max and record when each right-end block of k pairs settles.

    A block counts as observed only when it stays unchanged for at least
    `persistence` steps before the horizon (default: a tenth of N_max).
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    if persistence is None:
        persistence = N_max // 10
    walker = LeftProducts(path)
    lows: list[int] = []
    lengths: list[int] = []
    # every write or erase of a stack position, as (time, position, syllable or None)
    events: list[tuple[int, int, Syllable | None]] = []
    prev_len = 0
    for n in range(1, N_max + 1):
        low = walker.advance()
        items = walker.stack.items
        size = len(items)
        lows.append(low)
        lengths.append(size)
        for i in range(low, size):
            events.append((n, i, items[i]))
        for i in range(size, prev_len):
            events.append((n, i, None))
        prev_len = size
    final_items = walker.stack.items
    trailing = final_items[0] if final_items and is_affine(final_items[0]) else None
    offset = 1 if trailing is not None else 0

    # last time each position differed from its final value (time 0: empty stack)
    size_final = len(final_items)
    last_bad = [0] * size_final
    current: list[Syllable | None] = [None] * size_final

    def differs(i, syl):
        return syl is None or (syl is not final_items[i] and syl != final_items[i])

    for n, i, syl in events:
        if i >= size_final:
            continue
        if differs(i, current[i]):
            last_bad[i] = n - 1
        current[i] = syl
        if differs(i, syl):
            last_bad[i] = n
    observed: list[int] = []
    worst = 0
    for k in range(1, K + 1):
        size = 2 * k + offset
        if len(final_items) < size:
            break
        for i in range(size - 2 if k > 1 else 0, size):
            worst = max(worst, last_bad[i])
        settle = worst + 1
        if N_max - settle < persistence:
            break
        observed.append(settle)
    if strict and len(observed) < K:
        raise NotStabilized(len(observed) + 1, N_max)

    times: list[int] = []
    for t in observed:
        times.append(max(t, times[-1] + 1) if times else t)

    pairs = []
    for k in range(1, len(observed) + 1):
        e = final_items[offset + 2 * k - 2]
        a = final_items[offset + 2 * k - 1]
        pairs.append((a, e))

    # l(n): half the part of f^n above the right end that survives to the horizon.
    l_values = [0.0] * N_max
    suffix_min = len(final_items)
    for idx in range(N_max - 1, -1, -1):
        stable_here = min(lengths[idx], suffix_min)
        l_values[idx] = (lengths[idx] - stable_here) / 2
        suffix_min = min(suffix_min, lows[idx])
    return PrefixTable(path.seed, N_max, trailing, pairs, times, observed, l_values, lengths,
                       AmalgamWord(walker.stack.syllables(), True))


# --- entropy by exact convolution -------------------------------------------

_P = (1 << 64) - 59  # prime, congruent to 1 mod 4


def _sqrt_minus_one(p: int) -> int:
    for g in range(2, 200):
        r = pow(g, (p - 1) // 4, p)
        if r * r % p == p - 1:
            return r
    raise ArithmeticError("no square root of -1 found")


_I_MOD = _sqrt_minus_one(_P)
# Two fixed evaluation points for fingerprints.
_PROBES = ((0x9E3779B97F4A7C15 % _P, 0xC2B2AE3D27D4EB4F % _P), (0x165667B19E3779F9 % _P, 0x27D4EB2F165667C5 % _P))


def _mod(c: GaussianRational) -> int:
    re = c.re.numerator * pow(c.re.denominator, -1, _P)
    im = c.im.numerator * pow(c.im.denominator, -1, _P)
    return (re + _I_MOD * im) % _P


class _ModMap:
    def __init__(self, f: PlaneAutomorphism):
        self.first = [(i, j, _mod(c)) for (i, j), c in f.first.terms().items()]
        self.second = [(i, j, _mod(c)) for (i, j), c in f.second.terms().items()]

    def __call__(self, pt):
        x, y = pt
        return (sum(c * pow(x, i, _P) * pow(y, j, _P) for i, j, c in self.first) % _P,
                sum(c * pow(x, i, _P) * pow(y, j, _P) for i, j, c in self.second) % _P)


def element_fingerprint(maps: Sequence[_ModMap], indices: Sequence[int]) -> tuple:
    """Key of the product maps[indices[0]] o ... o maps[indices[-1]]."""
    pts = list(_PROBES)
    for idx in reversed(indices):
        pts = [maps[idx](p) for p in pts]
    return tuple(pts)


def convolution_power(mu: MeasureSpec, n: int, element_budget: int = 10**6) -> dict[tuple, Fraction]:
    """Exact law of a product of n independent draws, keyed by fingerprint.

    Group elements are identified by their values at two fixed points of
    F_p^2 (p = 2^64 - 59); distinct automorphisms of the degrees involved
    collide with probability below deg/p.
    """
    maps = [_ModMap(m) for m in mu.maps]
    law: dict[tuple, Fraction] = {tuple(_PROBES): Fraction(1)}
    for _ in range(n):
        nxt: dict[tuple, Fraction] = {}
        for key, prob in law.items():
            for i, atom in enumerate(mu.atoms):
                k = tuple(maps[i](p) for p in key)
                nxt[k] = nxt.get(k, Fraction(0)) + prob * atom.weight
            if len(nxt) > element_budget:
                raise BudgetExceeded(f"support of the convolution exceeds {element_budget} elements")
        law = nxt
    return law


@dataclass
class WalkStatistics:
    drift: float
    drift_stderr: float
    entropy_estimate: float | None
    entropy_n: int
    tracking: list[float]


def walk_statistics(mu: MeasureSpec, seeds: Iterable[int], N: int, *, n_conv: int = 6,
                    element_budget: int = 10**6) -> WalkStatistics:
    seeds = list(seeds)
    if N < 1 or not seeds:
        raise ValueError("need N >= 1 and at least one seed")
    drifts, tracking = [], []
    paths = []
    for seed in seeds:
        path = sample_path(mu, seed)
        paths.append(path)
        walker = LeftProducts(path)
        lows, lengths = [], []
        for _ in range(N):
            lows.append(walker.advance())
            lengths.append(len(walker.stack))
        drifts.append(walker.word().length / N)
        suffix_min = lengths[-1]
        best = 0.0
        for idx in range(N - 1, -1, -1):
            n = idx + 1
            if n >= 10:
                l_n = (lengths[idx] - min(lengths[idx], suffix_min)) / 2
                best = max(best, l_n / math.log(n))
            suffix_min = min(suffix_min, lows[idx])
        tracking.append(best)
    mean = sum(drifts) / len(drifts)
    var = sum((d - mean) ** 2 for d in drifts) / max(1, len(drifts) - 1)
    stderr = math.sqrt(var / len(drifts))

    entropy = None
    try:
        law = convolution_power(mu, n_conv, element_budget)
    except BudgetExceeded:
        law = None
    if law is not None:
        maps = [_ModMap(m) for m in mu.maps]
        logs = []
        for path in paths:
            # the right product f_0 o ... o f_{n-1}
            key = element_fingerprint(maps, path.extend(n_conv))
            logs.append(math.log(law[key]))
        entropy = -sum(logs) / (len(logs) * n_conv)
    return WalkStatistics(mean, stderr, entropy, n_conv, tracking)
