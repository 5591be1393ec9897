"""Base points of polynomial automorphisms by exact chart-wise blow-ups.

A degree-D automorphism f = (P, Q) extends to P^2 as the net of curves
[Z^D P(X/Z, Y/Z) : Z^D Q(X/Z, Y/Z) : Z^D].  Its base points form a chain: the
first lies on the line at infinity and each later one on the exceptional curve
of the previous blow-up.

Local conventions.  At every stage the current point is the origin of local
coordinates (u, v).  Chart 1 blows up by (u, v) = (u, u v) and chart 2 by
(u, v) = (u v, v) followed by renaming so that the new exceptional curve is
always u = 0; chart 2 is used only for the single direction v' = infinity.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

from .errors import ChartDegeneracy, DepthExceeded, NoIndeterminacy, NotStabilized
from .polyalg import ONE, ZERO, GaussianRational, PlaneAutomorphism, PlanePolynomial, ProjectivePoint, compose
from .randwalk import MeasureSpec, PrefixTable, prefix_products, sample_path, stabilization_times
from .wordgroup import compose_word

_U = PlanePolynomial.x()
_V = PlanePolynomial.y()


# --- univariate arithmetic over Q(i) -------------------------------------------

def _trim(p: list[GaussianRational]) -> list[GaussianRational]:
    while p and not p[-1]:
        p.pop()
    return p


def _poly_mod(a: list[GaussianRational], b: list[GaussianRational]) -> list[GaussianRational]:
    a = list(a)
    inv = ONE / b[-1]
    while len(a) >= len(b):
        q = a[-1] * inv
        shift = len(a) - len(b)
        for i, c in enumerate(b):
            a[shift + i] = a[shift + i] - q * c
        a.pop()
        _trim(a)
    return a


def univariate_gcd(a: Sequence[GaussianRational], b: Sequence[GaussianRational]) -> list[GaussianRational]:
    """Monic gcd of coefficient lists (constant term first); gcd(0, 0) = 0."""
    a, b = _trim(list(a)), _trim(list(b))
    while b:
        a, b = b, _poly_mod(a, b)
    if not a:
        return []
    inv = ONE / a[-1]
    return [c * inv for c in a]


def _single_root(g: list[GaussianRational]) -> GaussianRational:
    """The root c when the monic g equals (t - c)^r; ChartDegeneracy otherwise."""
    r = len(g) - 1
    c = -g[r - 1] / r
    expected = [GaussianRational(math.comb(r, k)) * (-c) ** (r - k) for k in range(r + 1)]
    if expected != g:
        raise ChartDegeneracy("several base points on one exceptional curve; the chain branches")
    return c


def _restrict_to_line(poly: PlanePolynomial, m: int) -> tuple[list[GaussianRational], bool]:
    """Degree-m part of poly as T(1, t) coefficients, plus whether T vanishes at t = infinity."""
    coeffs = [ZERO] * (m + 1)
    for (i, j), c in poly.terms().items():
        if i + j == m:
            coeffs[j] = c
    coeffs = _trim(coeffs)
    return coeffs, len(coeffs) <= m


def _common_direction(cones: list[tuple[list[GaussianRational], bool]]):
    """Common zero of tangent cones on the exceptional line: ('finite', c), ('infinite', None) or None."""
    g = None
    at_infinity = True
    for coeffs, inf in cones:
        g = list(coeffs) if g is None else univariate_gcd(g, coeffs)
        at_infinity = at_infinity and inf
    g = univariate_gcd(g or [], [])
    finite = len(g) > 1
    if finite and at_infinity:
        raise ChartDegeneracy("base points both at v' = infinity and at a finite v'")
    if at_infinity:
        return ("infinite", None)
    if finite:
        return ("finite", _single_root(g))
    return None


# --- projective data ------------------------------------------------------------

def _binary_common_zero(forms: list[PlanePolynomial], D: int) -> ProjectivePoint:
    """The unique common zero [X:Y:0] of binary forms of degree D (given as polynomials in x, y)."""
    cones = [_restrict_to_line(f, D) for f in forms if not f.is_zero()]
    found = _common_direction(cones)
    if found is None:
        raise ChartDegeneracy("top forms have no common zero")
    kind, c = found
    if kind == "infinite":
        return ProjectivePoint.of(0, 1, 0)
    return ProjectivePoint.of(1, c, 0)


def indeterminacy_point(f: PlaneAutomorphism) -> ProjectivePoint:
    """The point of the line at infinity where the extension of f is undefined."""
    D = f.degree
    if D < 2:
        raise NoIndeterminacy("affine maps extend to P^2 without indeterminacy")
    return _binary_common_zero([f.first.homogeneous_part(D), f.second.homogeneous_part(D)], D)


def _initial_generators(f: PlaneAutomorphism, p1: ProjectivePoint) -> list[PlanePolynomial]:
    """The net in local coordinates (u, v) centred at p1, with u = Z the line at infinity."""
    D = f.degree
    X, Y, _ = p1.coords
    if X:
        # chart X = 1: (u, v) = (Z, Y - eta)
        fn = lambda i, j: (D - i - j, j)  # noqa: E731
        shift = Y
    else:
        # chart Y = 1: (u, v) = (Z, X)
        fn = lambda i, j: (D - i - j, i)  # noqa: E731
        shift = ZERO
    gens = [f.first.map_exponents(fn), f.second.map_exponents(fn), PlanePolynomial.from_terms({(D, 0): 1})]
    if shift:
        gens = [g.substitute(_U, _V + PlanePolynomial.constant(shift)) for g in gens]
    return gens


# --- chains -----------------------------------------------------------------------

@dataclass(frozen=True)
class ChainPoint:
    """One infinitely near point: chart 0 is the first point on L_inf, then 1 or 2."""

    chart: int
    coordinate: ProjectivePoint | GaussianRational | None

    def to_json(self):
        if self.chart == 0:
            return {"chart": 0, "point": self.coordinate.to_json()}
        if self.chart == 1:
            return {"chart": 1, "substitution": ["u", "u*(v + c)"], "c": list(self.coordinate.to_strings())}
        return {"chart": 2, "substitution": ["u*v", "v"], "c": None}


@dataclass
class BasePointChain:
    degree: int
    points: list[ChainPoint]
    multiplicities: list[int]
    complete: bool

    def __len__(self):
        return len(self.points)

    @property
    def count(self) -> int:
        return len(self.points)

    @property
    def weighted_count(self) -> int:
        return sum(self.multiplicities)

    def noether_ok(self) -> bool:
        """sum m = 3(D - 1) and sum m^2 = D^2 - 1 (only meaningful for complete chains)."""
        D = self.degree
        return (self.complete and sum(self.multiplicities) == 3 * (D - 1)
                and sum(m * m for m in self.multiplicities) == D * D - 1)

    def prefix(self, depth: int) -> tuple[ChainPoint, ...]:
        return tuple(self.points[:depth])

    def begins_with(self, other: "BasePointChain") -> bool:
        return self.points[:len(other.points)] == other.points

    def to_json(self) -> dict:
        return {"degree": self.degree, "complete": self.complete,
                "tower": [dict(p.to_json(), multiplicity=m) for p, m in zip(self.points, self.multiplicities)]}


def _blow_up(gens: list[PlanePolynomial], m: int, chart: int) -> list[PlanePolynomial]:
    if chart == 1:
        fn = lambda i, j: (i + j - m, j)  # noqa: E731
    else:
        fn = lambda i, j: (i + j - m, i)  # noqa: E731
    return [g.map_exponents(fn) for g in gens]


def base_point_chain(f: PlaneAutomorphism, depth_limit: int = 64, *, strict: bool = True) -> BasePointChain:
    """Blow up base points one at a time until the net has none left.

    With strict=False an unfinished chain is returned (complete=False) at the
    depth limit instead of raising DepthExceeded.
    """
    D = f.degree
    if D < 2:
        return BasePointChain(D, [], [], True)
    p1 = indeterminacy_point(f)
    gens = _initial_generators(f, p1)
    points = [ChainPoint(0, p1)]
    mults: list[int] = []
    while True:
        m = min(g.order for g in gens)
        mults.append(m)
        if len(points) >= depth_limit:
            # is there a further point?
            nxt = _common_direction([_restrict_to_line(g, m) for g in gens if g.order == m])
            if nxt is None:
                return BasePointChain(D, points, mults, True)
            if strict:
                raise DepthExceeded(depth_limit)
            return BasePointChain(D, points, mults, False)
        nxt = _common_direction([_restrict_to_line(g, m) for g in gens if g.order == m])
        if nxt is None:
            return BasePointChain(D, points, mults, True)
        kind, c = nxt
        if kind == "finite":
            gens = _blow_up(gens, m, 1)
            if c:
                shift = _V + PlanePolynomial.constant(c)
                gens = [g.substitute(_U, shift) for g in gens]
            points.append(ChainPoint(1, c))
        else:
            gens = _blow_up(gens, m, 2)
            points.append(ChainPoint(2, None))


def base_additivity_check(f: PlaneAutomorphism, g: PlaneAutomorphism, depth_limit: int = 256) -> bool:
    """|base(g o f)| = |base f| + |base g| and the chain of g o f starts with that of f."""
    cf = base_point_chain(f, depth_limit)
    cg = base_point_chain(g, depth_limit)
    gf = compose(g, f)
    cgf = base_point_chain(gf, depth_limit)
    return cgf.count == cf.count + cg.count and cgf.begins_with(cf)


# --- experiments along random itineraries ------------------------------------------

def stable_chain(table: PrefixTable, depth: int, *, max_degree: int = 1 << 12) -> BasePointChain:
    """Chain to `depth` of the stable right end h_k ... h_1 b, growing k until it is long enough."""
    k = 1
    while True:
        if k > table.depth:
            raise NotStabilized(k, table.horizon)
        w = table.stable_word(k)
        f = compose_word(w)
        chain = base_point_chain(f, depth, strict=False)
        if chain.count >= depth:
            return chain
        if f.degree > max_degree:
            raise DepthExceeded(depth)
        k += 1


@dataclass
class DivergenceReport:
    depth: int
    pairs: list[tuple[int, int]]
    first_difference: list[int | None]

    @property
    def fraction_diverged(self) -> float:
        if not self.pairs:
            return 0.0
        return sum(d is not None for d in self.first_difference) / len(self.pairs)

    def to_json(self) -> dict:
        return {"depth": self.depth, "pairs": [list(p) for p in self.pairs],
                "first_difference": self.first_difference, "fraction_diverged": self.fraction_diverged}


def chain_divergence_experiment(mu: MeasureSpec, seeds: Sequence[int], L: int = 6, N_max: int = 2000) -> DivergenceReport:
    """Pair consecutive seeds and report the first depth at which stable chains differ."""
    seeds = list(seeds)
    chains = {}
    for s in seeds:
        if s in chains:
            continue
        K = L + 2
        table = stabilization_times(sample_path(mu, s), K, N_max, strict=False)
        chains[s] = stable_chain(table, L).prefix(L)
    pairs = list(zip(seeds[0::2], seeds[1::2]))
    firsts = []
    for a, b in pairs:
        ca, cb = chains[a], chains[b]
        first = next((i + 1 for i, (x, y) in enumerate(zip(ca, cb)) if x != y), None)
        firsts.append(first)
    return DivergenceReport(L, pairs, firsts)


def prefix_chain_consistency(mu: MeasureSpec, seed: int, depth: int, N_max: int = 400,
                             max_degree: int = 32) -> list[tuple[int, bool]]:
    """For each n past the settling time of the first `depth` base points with
    deg f^n <= max_degree, whether the chain of f^n starts with the stable chain."""
    path = sample_path(mu, seed)
    table = stabilization_times(path, depth + 2, N_max, strict=False)
    target = stable_chain(table, depth)
    # smallest k whose stable word already carries `depth` base points
    k_needed = next(k for k in range(1, table.depth + 1)
                    if base_point_chain(compose_word(table.stable_word(k)), depth, strict=False).count >= depth)
    tau = table.t[k_needed - 1]
    results = []
    for n in itertools.count(tau):
        word = prefix_products(path, n)
        if word.degree_product() > max_degree:
            break
        chain = base_point_chain(compose_word(word), depth, strict=False)
        results.append((n, chain.prefix(depth) == target.prefix(depth)))
    return results
