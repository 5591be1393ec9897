"""Exact plane polynomials over Q(i) and overflow-safe floating evaluation.

Polynomials are stored as a pair (real part, imaginary part) of FLINT
rational multivariate polynomials in x, y.  All group-theoretic work uses
these exact objects; doubles appear only in :class:`ScaledPoint`.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping

import flint

from .errors import BudgetExceeded, NonConstantJacobian, PrecisionLoss

_CTX = flint.fmpq_mpoly_ctx.get(("x", "y"), "lex")
_ZERO = _CTX.from_dict({})

NEG_INF = float("-inf")

# A double is representable up to about e^709; stay well clear of it.
LOG_REPRESENTABLE = 700.0
# Scaled evaluation refuses results that lost more than half the mantissa
# to cancellation at inputs too large to represent as doubles.
_CANCEL_LOG = 26 * math.log(2.0)
# Representable inputs losing more than 8 bits are re-evaluated exactly.
_EXACT_LOG = 8 * math.log(2.0)


def _frac(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, flint.fmpq):
        return Fraction(int(value.p), int(value.q))
    if isinstance(value, str):
        return Fraction(value.strip())
    if isinstance(value, float):
        raise TypeError("floats are not exact; pass a Fraction or a 'num/den' string")
    return Fraction(value)


def _fmpq(value: Fraction) -> flint.fmpq:
    return flint.fmpq(value.numerator, value.denominator)


def format_rational(value: Fraction) -> str:
    return f"{value.numerator}/{value.denominator}"


@dataclass(frozen=True, slots=True)
class GaussianRational:
    """Exact complex number re + i*im with rational parts."""

    re: Fraction
    im: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "re", _frac(self.re))
        object.__setattr__(self, "im", _frac(self.im))

    @classmethod
    def of(cls, value) -> "GaussianRational":
        if isinstance(value, GaussianRational):
            return value
        if isinstance(value, complex):
            raise TypeError("complex floats are not exact")
        return cls(_frac(value), Fraction(0))

    @classmethod
    def parse(cls, re: str, im: str = "0") -> "GaussianRational":
        return cls(Fraction(re), Fraction(im))

    def to_strings(self) -> tuple[str, str]:
        return format_rational(self.re), format_rational(self.im)

    def __add__(self, other):
        other = GaussianRational.of(other)
        return GaussianRational(self.re + other.re, self.im + other.im)

    __radd__ = __add__

    def __sub__(self, other):
        other = GaussianRational.of(other)
        return GaussianRational(self.re - other.re, self.im - other.im)

    def __rsub__(self, other):
        return GaussianRational.of(other) - self

    def __mul__(self, other):
        other = GaussianRational.of(other)
        return GaussianRational(
            self.re * other.re - self.im * other.im,
            self.re * other.im + self.im * other.re,
        )

    __rmul__ = __mul__

    def __neg__(self):
        return GaussianRational(-self.re, -self.im)

    def __truediv__(self, other):
        other = GaussianRational.of(other)
        n = other.norm2()
        if n == 0:
            raise ZeroDivisionError("division by zero Gaussian rational")
        return self * GaussianRational(other.re / n, -other.im / n)

    def __rtruediv__(self, other):
        return GaussianRational.of(other) / self

    def __pow__(self, k: int):
        if k < 0:
            return (GaussianRational(1) / self) ** (-k)
        result = GaussianRational(1)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def __eq__(self, other):
        if isinstance(other, GaussianRational):
            return self.re == other.re and self.im == other.im
        if isinstance(other, (int, Fraction)):
            return self.im == 0 and self.re == other
        return NotImplemented

    def __hash__(self):
        return hash((self.re, self.im))

    def __bool__(self):
        return bool(self.re) or bool(self.im)

    def conjugate(self) -> "GaussianRational":
        return GaussianRational(self.re, -self.im)

    def norm2(self) -> Fraction:
        """|z|^2, exact."""
        return self.re * self.re + self.im * self.im

    def __complex__(self):
        return complex(float(self.re), float(self.im))

    def __repr__(self):
        if self.im == 0:
            return f"GaussianRational({self.re})"
        return f"GaussianRational({self.re}, {self.im})"

    def __str__(self):
        if self.im == 0:
            return str(self.re)
        if self.re == 0:
            return f"{self.im}i"
        sign = "+" if self.im > 0 else "-"
        return f"{self.re}{sign}{abs(self.im)}i"


ZERO = GaussianRational(0)
ONE = GaussianRational(1)


def _cmul(ar, ai, br, bi):
    """Complex product of polynomial pairs, skipping zero parts."""
    a_real = ai.is_zero()
    b_real = bi.is_zero()
    if a_real and b_real:
        return ar * br, _ZERO
    if a_real:
        return ar * br, ar * bi
    if b_real:
        return ar * br, ai * br
    # Gauss's three-multiplication trick.
    k1 = br * (ar + ai)
    k2 = ar * (bi - br)
    k3 = ai * (br + bi)
    return k1 - k3, k1 + k2


class PlanePolynomial:
    """Sparse bivariate polynomial with Gaussian-rational coefficients; immutable."""

    __slots__ = ("_re", "_im", "_hash")

    def __init__(self, re=None, im=None):
        self._re = _ZERO if re is None else re
        self._im = _ZERO if im is None else im
        self._hash = None

    @classmethod
    def from_terms(cls, terms: Mapping[tuple[int, int], object]) -> "PlanePolynomial":
        re_part, im_part = {}, {}
        for (i, j), c in terms.items():
            if i < 0 or j < 0:
                raise ValueError(f"negative exponent {(i, j)}")
            c = GaussianRational.of(c)
            if c.re:
                re_part[(i, j)] = re_part.get((i, j), 0) + _fmpq(c.re)
            if c.im:
                im_part[(i, j)] = im_part.get((i, j), 0) + _fmpq(c.im)
        return cls(_CTX.from_dict(re_part), _CTX.from_dict(im_part))

    @classmethod
    def constant(cls, c) -> "PlanePolynomial":
        return cls.from_terms({(0, 0): c})

    @classmethod
    def x(cls) -> "PlanePolynomial":
        return cls(_CTX.gens()[0])

    @classmethod
    def y(cls) -> "PlanePolynomial":
        return cls(_CTX.gens()[1])

    @classmethod
    def univariate_y(cls, coefficients: Iterable) -> "PlanePolynomial":
        """Polynomial sum c_j y^j from the list [c_0, c_1, ...]."""
        return cls.from_terms({(0, j): c for j, c in enumerate(coefficients) if GaussianRational.of(c)})

    @property
    def real_part(self):
        return self._re

    @property
    def imag_part(self):
        return self._im

    def terms(self) -> dict[tuple[int, int], GaussianRational]:
        out: dict[tuple[int, int], list] = {}
        for m, c in zip(self._re.monoms(), self._re.coeffs()):
            out[(int(m[0]), int(m[1]))] = [_frac(c), Fraction(0)]
        for m, c in zip(self._im.monoms(), self._im.coeffs()):
            out.setdefault((int(m[0]), int(m[1])), [Fraction(0), Fraction(0)])[1] = _frac(c)
        return {m: GaussianRational(*out[m]) for m in sorted(out)}

    def coefficient(self, i: int, j: int) -> GaussianRational:
        return GaussianRational(self._coeff(self._re, i, j), self._coeff(self._im, i, j))

    @staticmethod
    def _coeff(p, i, j) -> Fraction:
        for m, c in zip(p.monoms(), p.coeffs()):
            if m == (i, j):
                return _frac(c)
        return Fraction(0)

    @property
    def degree(self):
        """Total degree; the zero polynomial has degree -inf."""
        d = max(self._re.total_degree(), self._im.total_degree())
        return NEG_INF if d < 0 else int(d)

    def degree_in(self, var: int) -> int:
        """Degree in x (var=0) or y (var=1); -1 for the zero polynomial."""
        d = -1
        for p in (self._re, self._im):
            if not p.is_zero():
                d = max(d, int(p.degrees()[var]))
        return d

    def is_zero(self) -> bool:
        return self._re.is_zero() and self._im.is_zero()

    def is_constant(self) -> bool:
        return self._re.is_constant() and self._im.is_constant()

    def constant_term(self) -> GaussianRational:
        return GaussianRational(self._coeff(self._re, 0, 0), self._coeff(self._im, 0, 0))

    def in_y_only(self) -> bool:
        return self.degree_in(0) <= 0

    def homogeneous_part(self, d: int) -> "PlanePolynomial":
        return PlanePolynomial.from_terms({m: c for m, c in self.terms().items() if m[0] + m[1] == d})

    def top_form(self) -> "PlanePolynomial":
        if self.is_zero():
            return self
        return self.homogeneous_part(self.degree)

    def __add__(self, other):
        other = _as_poly(other)
        return PlanePolynomial(self._re + other._re, self._im + other._im)

    __radd__ = __add__

    def __sub__(self, other):
        other = _as_poly(other)
        return PlanePolynomial(self._re - other._re, self._im - other._im)

    def __rsub__(self, other):
        return _as_poly(other) - self

    def __neg__(self):
        return PlanePolynomial(-self._re, -self._im)

    def __mul__(self, other):
        if isinstance(other, PlanePolynomial):
            return PlanePolynomial(*_cmul(self._re, self._im, other._re, other._im))
        return self.scale(other)

    __rmul__ = __mul__

    def scale(self, c) -> "PlanePolynomial":
        c = GaussianRational.of(c)
        cr, ci = _fmpq(c.re), _fmpq(c.im)
        if not ci:
            return PlanePolynomial(self._re * cr, self._im * cr)
        return PlanePolynomial(self._re * cr - self._im * ci, self._re * ci + self._im * cr)

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative power of a polynomial")
        result = PlanePolynomial.constant(1)
        base = self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    @property
    def order(self):
        """Lowest total degree of a nonzero term (the multiplicity at the origin)."""
        if self.is_zero():
            return math.inf
        return min(int(i + j) for p in (self._re, self._im) for i, j in p.monoms())

    def map_exponents(self, fn) -> "PlanePolynomial":
        """Send each monomial x^i y^j to x^i' y^j' with (i', j') = fn(i, j); fn must be injective."""
        parts = []
        for p in (self._re, self._im):
            out = {}
            for (i, j), c in p.to_dict().items():
                out[fn(int(i), int(j))] = c
            parts.append(_CTX.from_dict(out))
        return PlanePolynomial(*parts)

    def derivative(self, var: int) -> "PlanePolynomial":
        name = ("x", "y")[var]
        return PlanePolynomial(self._re.derivative(name), self._im.derivative(name))

    def substitute(self, P: "PlanePolynomial", Q: "PlanePolynomial") -> "PlanePolynomial":
        """The polynomial self(P, Q)."""
        if P._im.is_zero() and Q._im.is_zero():
            return PlanePolynomial(self._re.compose(P._re, Q._re), self._im.compose(P._re, Q._re))
        # Horner in x over coefficients that are polynomials in y.
        by_x: dict[int, dict[int, GaussianRational]] = {}
        for (i, j), c in self.terms().items():
            by_x.setdefault(i, {})[j] = c
        q_powers = _PowerCache(Q)
        result = PlanePolynomial()
        for i in range(self.degree_in(0), -1, -1):
            result = result * P
            for j, c in by_x.get(i, {}).items():
                result = result + q_powers.get(j).scale(c)
        return result

    def evaluate(self, x, y) -> GaussianRational:
        """Exact value at a Gaussian-rational point."""
        x = GaussianRational.of(x)
        y = GaussianRational.of(y)
        total = ZERO
        for (i, j), c in self.terms().items():
            total = total + c * x**i * y**j
        return total

    def float_terms(self) -> list[tuple[int, int, complex]]:
        return [(i, j, complex(c)) for (i, j), c in self.terms().items()]

    def coefficient_bits(self) -> int:
        """Largest bit length over all numerators and denominators."""
        bits = 0
        for p in (self._re, self._im):
            for c in p.coeffs():
                bits = max(bits, int(c.p).bit_length(), int(c.q).bit_length())
        return bits

    def __eq__(self, other):
        if not isinstance(other, PlanePolynomial):
            try:
                other = _as_poly(other)
            except TypeError:
                return NotImplemented
        return self._re == other._re and self._im == other._im

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(tuple(self.terms().items()))
        return self._hash

    def __repr__(self):
        if self.is_zero():
            return "PlanePolynomial(0)"
        if self._im.is_zero():
            return f"PlanePolynomial({self._re})"
        return f"PlanePolynomial(({self._re}) + I*({self._im}))"

    def to_json(self) -> list:
        return [[i, j, *c.to_strings()] for (i, j), c in self.terms().items()]

    @classmethod
    def from_json(cls, data) -> "PlanePolynomial":
        terms = {}
        for entry in data:
            i, j, re, im = entry
            key = (int(i), int(j))
            if key in terms:
                raise ValueError(f"duplicate monomial {key}")
            terms[key] = GaussianRational.parse(re, im)
        return cls.from_terms(terms)


def _as_poly(value) -> PlanePolynomial:
    if isinstance(value, PlanePolynomial):
        return value
    if isinstance(value, (int, Fraction, GaussianRational)):
        return PlanePolynomial.constant(value)
    raise TypeError(f"cannot use {type(value).__name__} as a polynomial")


class _PowerCache:
    """Lazily computed powers Q^0, Q^1, ... of one polynomial."""

    def __init__(self, base: PlanePolynomial):
        self._powers = [PlanePolynomial.constant(1), base]

    def get(self, k: int) -> PlanePolynomial:
        while len(self._powers) <= k:
            self._powers.append(self._powers[-1] * self._powers[1])
        return self._powers[k]


def power_cache(base: PlanePolynomial) -> _PowerCache:
    return _PowerCache(base)


def compose_univariate(p: PlanePolynomial, Q: PlanePolynomial, powers: _PowerCache | None = None) -> PlanePolynomial:
    """p(Q) for p a polynomial in y alone."""
    powers = powers or _PowerCache(Q)
    result = PlanePolynomial()
    for (_, j), c in p.terms().items():
        result = result + powers.get(j).scale(c)
    return result


def jacobian_determinant(first: PlanePolynomial, second: PlanePolynomial) -> PlanePolynomial:
    return first.derivative(0) * second.derivative(1) - first.derivative(1) * second.derivative(0)


class PlaneAutomorphism:
    """A polynomial map q -> (first(q), second(q)) with constant nonzero Jacobian."""

    __slots__ = ("first", "second", "jacobian", "_plan", "_diff", "_floats", "_integer_plan")

    def __init__(self, first: PlanePolynomial, second: PlanePolynomial, *, jacobian=None):
        self.first = first
        self.second = second
        if jacobian is None:
            det = jacobian_determinant(first, second)
            if not det.is_constant():
                raise NonConstantJacobian(f"Jacobian {det} is not constant")
            jacobian = det.constant_term()
        jacobian = GaussianRational.of(jacobian)
        if not jacobian:
            raise NonConstantJacobian("Jacobian vanishes identically")
        self.jacobian = jacobian
        self._plan = None
        self._integer_plan = None
        self._diff = None
        self._floats = None

    @classmethod
    def identity(cls) -> "PlaneAutomorphism":
        return cls(PlanePolynomial.x(), PlanePolynomial.y(), jacobian=ONE)

    @classmethod
    def from_terms(cls, first: Mapping, second: Mapping) -> "PlaneAutomorphism":
        return cls(PlanePolynomial.from_terms(first), PlanePolynomial.from_terms(second))

    @property
    def degree(self) -> int:
        return int(max(self.first.degree, self.second.degree))

    def is_affine(self) -> bool:
        return self.degree <= 1

    def __call__(self, x, y) -> tuple[GaussianRational, GaussianRational]:
        return self.first.evaluate(x, y), self.second.evaluate(x, y)

    def evaluate_complex(self, x: complex, y: complex) -> tuple[complex, complex]:
        if self._floats is None:
            self._floats = (self.first.float_terms(), self.second.float_terms())
        first, second = self._floats
        return (sum(c * x**i * y**j for i, j, c in first),
                sum(c * x**i * y**j for i, j, c in second))

    def differential(self, x: complex, y: complex) -> tuple[tuple[complex, complex], tuple[complex, complex]]:
        """The 2x2 matrix of partial derivatives at a complex point."""
        if self._diff is None:
            self._diff = [
                [self.first.derivative(0).float_terms(), self.first.derivative(1).float_terms()],
                [self.second.derivative(0).float_terms(), self.second.derivative(1).float_terms()],
            ]
        rows = []
        for row in self._diff:
            rows.append(tuple(sum(c * x**i * y**j for i, j, c in t) for t in row))
        return rows[0], rows[1]

    def coefficient_bits(self) -> int:
        return max(self.first.coefficient_bits(), self.second.coefficient_bits())

    def scaled_plan(self):
        """Per-component coefficients as (phase, log modulus), grouped by total degree."""
        if self._plan is None:
            plan = []
            for poly in (self.first, self.second):
                groups: dict[int, list[tuple[int, int, complex]]] = {}
                for (i, j), c in poly.terms().items():
                    z = complex(c)
                    groups.setdefault(i + j, []).append((i, j, (z / abs(z), math.log(abs(z)))))
                plan.append(sorted(groups.items()))
            self._plan = plan
        return self._plan

    def integer_plan(self):
        """Per component: common denominator D and terms (i, j, D*re, D*im) as ints."""
        if self._integer_plan is None:
            plan = []
            for poly in (self.first, self.second):
                terms = poly.terms()
                D = math.lcm(1, *(c.re.denominator for c in terms.values()), *(c.im.denominator for c in terms.values()))
                plan.append((D, [(i, j, int(c.re * D), int(c.im * D)) for (i, j), c in terms.items()]))
            self._integer_plan = plan
        return self._integer_plan

    def __eq__(self, other):
        if not isinstance(other, PlaneAutomorphism):
            return NotImplemented
        return equals(self, other)

    def __hash__(self):
        return hash((self.first, self.second))

    def __repr__(self):
        return f"PlaneAutomorphism({self.first!r}, {self.second!r})"


def compose(f: PlaneAutomorphism, g: PlaneAutomorphism, *, bit_budget: int | None = None) -> PlaneAutomorphism:
    """The automorphism q -> f(g(q))."""
    first = f.first.substitute(g.first, g.second)
    second = f.second.substitute(g.first, g.second)
    result = PlaneAutomorphism(first, second, jacobian=f.jacobian * g.jacobian)
    if bit_budget is not None and result.coefficient_bits() > bit_budget:
        raise BudgetExceeded(f"coefficients exceed {bit_budget} bits")
    return result


def degree_and_jacobian(f: PlaneAutomorphism) -> tuple[int, GaussianRational]:
    """Degree and Jacobian recomputed from the symbolic determinant."""
    det = jacobian_determinant(f.first, f.second)
    if not det.is_constant() or det.is_zero():
        raise NonConstantJacobian(f"Jacobian determinant {det} is not a nonzero constant")
    return f.degree, det.constant_term()


def equals(f: PlaneAutomorphism, g: PlaneAutomorphism) -> bool:
    return f.first == g.first and f.second == g.second


def automorphism_to_json(f: PlaneAutomorphism) -> dict:
    return {"first": f.first.to_json(), "second": f.second.to_json()}


def automorphism_from_json(data: Mapping) -> PlaneAutomorphism:
    return PlaneAutomorphism(PlanePolynomial.from_json(data["first"]), PlanePolynomial.from_json(data["second"]))


@dataclass(frozen=True, slots=True)
class ScaledPoint:
    """A point of C^2 stored as e^log_norm * direction with max-norm(direction) = 1."""

    direction: tuple[complex, complex]
    log_norm: float
    bounded: bool

    @classmethod
    def from_coords(cls, x: complex, y: complex) -> "ScaledPoint":
        x, y = complex(x), complex(y)
        m = max(abs(x), abs(y))
        if m == 0.0:
            return cls((0j, 0j), NEG_INF, True)
        if math.isinf(m):
            raise OverflowError("coordinates are not finite; use from_log")
        return cls((x / m, y / m), math.log(m), True)

    @classmethod
    def from_log(cls, direction: tuple[complex, complex], log_norm: float) -> "ScaledPoint":
        u, v = complex(direction[0]), complex(direction[1])
        m = max(abs(u), abs(v))
        if m == 0.0:
            return cls((0j, 0j), NEG_INF, True)
        log_norm = log_norm + math.log(m)
        return cls((u / m, v / m), log_norm, log_norm < LOG_REPRESENTABLE)

    def coords(self) -> tuple[complex, complex]:
        if self.log_norm == NEG_INF:
            return 0j, 0j
        if not self.bounded:
            raise OverflowError(f"log_norm {self.log_norm} is not representable")
        r = math.exp(self.log_norm)
        return self.direction[0] * r, self.direction[1] * r

    @property
    def log_plus(self) -> float:
        return max(0.0, self.log_norm)


def _scaled_component(groups, u: complex, v: complex, L: float, pu, pv):
    """Evaluate one coordinate; returns (log|value|, phase, log of absolute term sum).

    Term magnitudes are combined in log space, so tiny direction components
    raised to high powers never underflow before meeting e^(d*L).
    """
    lu, lv = pu, pv
    if L == NEG_INF:
        # the origin: only the constant term survives
        for d, terms in groups:
            if d == 0:
                (_, _, (phase, log_mod)), = terms
                return log_mod, phase, log_mod
        return NEG_INF, 0j, NEG_INF
    logs, phases = [], []
    for d, terms in groups:
        for i, j, c in terms:
            if (i and lu[0] == NEG_INF) or (j and lv[0] == NEG_INF):
                continue
            lt = c[1] + d * L
            if i:
                lt += i * lu[0]
            if j:
                lt += j * lv[0]
            logs.append(lt)
            phases.append(c[0] * lu[1][i] * lv[1][j])
    if not logs:
        return NEG_INF, 0j, NEG_INF
    shift = max(logs)
    total = 0j
    absolute = 0.0
    for lt, ph in zip(logs, phases):
        w = math.exp(lt - shift)
        total += ph * w
        absolute += w
    if total == 0:
        return NEG_INF, 0j, shift + math.log(absolute)
    return shift + math.log(abs(total)), total / abs(total), shift + math.log(absolute)


def _polar_powers(z: complex, top: int):
    """(log|z|, [phase^k for k <= top])."""
    r = abs(z)
    if r == 0.0:
        return NEG_INF, [1 + 0j] + [0j] * top
    ph = z / r
    out = [1 + 0j]
    for _ in range(top):
        out.append(out[-1] * ph)
    return math.log(r), out


def _gauss_mul(a, b):
    return a[0] * b[0] - a[1] * b[1], a[0] * b[1] + a[1] * b[0]


def _dyadic(z: complex, s: int) -> tuple[int, int]:
    """The Gaussian integer z * 2^s (exact for s at least the binary exponent of z's parts)."""
    out = []
    for part in (z.real, z.imag):
        n, d = part.as_integer_ratio()
        out.append(n << (s - d.bit_length() + 1))
    return out[0], out[1]


def _exact_eval(f: PlaneAutomorphism, x: complex, y: complex) -> tuple[complex, complex] | None:
    """f at a point with double coordinates, exactly, then rounded once."""
    parts = (x.real, x.imag, y.real, y.imag)
    s = max(p.as_integer_ratio()[1].bit_length() - 1 for p in parts)
    X, Y = _dyadic(x, s), _dyadic(y, s)
    top = f.degree
    px, py = [(1, 0)], [(1, 0)]
    for _ in range(top):
        px.append(_gauss_mul(px[-1], X))
        py.append(_gauss_mul(py[-1], Y))
    out = []
    for D, terms in f.integer_plan():
        re = im = 0
        for i, j, cr, ci in terms:
            # scale every term to the common power 2^(s * top)
            m = _gauss_mul(_gauss_mul(px[i], py[j]), (cr, ci))
            shift = s * (top - i - j)
            re += m[0] << shift
            im += m[1] << shift
        den = D << (s * top)
        try:
            out.append(complex(Fraction(re, den), Fraction(im, den)) if (re or im) else 0j)
        except OverflowError:
            return None
    return out[0], out[1]


def eval_scaled(f: PlaneAutomorphism, q: ScaledPoint) -> ScaledPoint:
    """f(q) computed by max-magnitude factoring of each homogeneous part.

    When the terms of a representable input cancel by more than 8 bits the
    value is recomputed exactly from the double coordinates.
    """
    plan = f.scaled_plan()
    u, v = q.direction
    top = f.degree
    pu = _polar_powers(u, top)
    pv = _polar_powers(v, top)
    L = q.log_norm
    m1, ph1, abs1 = _scaled_component(plan[0], u, v, L, pu, pv)
    m2, ph2, abs2 = _scaled_component(plan[1], u, v, L, pu, pv)
    log_norm = max(m1, m2)
    absolute = max(abs1, abs2)
    if absolute - log_norm > _EXACT_LOG and q.bounded and L != NEG_INF:
        exact = _exact_eval(f, *q.coords())
        if exact is not None and all(map(cmath.isfinite, exact)):
            return ScaledPoint.from_coords(*exact)
    if absolute - log_norm > _CANCEL_LOG:
        raise PrecisionLoss(f"cancellation of {absolute - log_norm:.1f} nats at input log-norm {L:.1f}")
    if log_norm == NEG_INF:
        return ScaledPoint((0j, 0j), NEG_INF, True)
    d1 = ph1 * math.exp(m1 - log_norm) if m1 != NEG_INF else 0j
    d2 = ph2 * math.exp(m2 - log_norm) if m2 != NEG_INF else 0j
    return ScaledPoint.from_log((d1, d2), log_norm)


@dataclass(frozen=True, slots=True)
class ProjectivePoint:
    """[X:Y:Z] normalized so that the first nonzero coordinate is 1."""

    coords: tuple[GaussianRational, GaussianRational, GaussianRational]

    def __post_init__(self):
        c = tuple(GaussianRational.of(v) for v in self.coords)
        if len(c) != 3:
            raise ValueError("projective points of P^2 need three coordinates")
        lead = next((v for v in c if v), None)
        if lead is None:
            raise ValueError("[0:0:0] is not a projective point")
        inv = ONE / lead
        object.__setattr__(self, "coords", tuple(v * inv for v in c))

    @classmethod
    def of(cls, X, Y, Z) -> "ProjectivePoint":
        return cls((X, Y, Z))

    @property
    def at_infinity(self) -> bool:
        return not self.coords[2]

    def to_json(self) -> list:
        return [list(v.to_strings()) for v in self.coords]

    @classmethod
    def from_json(cls, data) -> "ProjectivePoint":
        return cls(tuple(GaussianRational.parse(*v) for v in data))

    def __str__(self):
        return "[" + ":".join(str(v) for v in self.coords) + "]"


INDETERMINACY_I = ProjectivePoint.of(1, 0, 0)
