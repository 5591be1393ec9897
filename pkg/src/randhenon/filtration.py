"""The filtration at infinity V+ / V- and certified constants for a finite family H = A E.

    V+ = {||q|| >= R, |y| >= eps |x|}      V- = {||q|| >= R, |x| > |y| / eps}

with the sup norm.  Constants come from explicit inequalities on rational
bounds of coefficient moduli, so they are sound but far from optimal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from math import isqrt
from typing import Iterable, Sequence

import numpy as np

from .errors import CertificationFailure, ConeObstruction
from .polyalg import INDETERMINACY_I, GaussianRational, PlaneAutomorphism, ProjectivePoint, ScaledPoint, compose, eval_scaled, format_rational
from .randwalk import MeasureSpec
from .wordgroup import AffineSyllable, ElementarySyllable, WordStack, is_affine

VPLUS = "VPlus"
VMINUS = "VMinus"
BALL = "Ball"

_SQRT_BITS = 40


def modulus_bounds(c: GaussianRational) -> tuple[Fraction, Fraction]:
    """Rational lower and upper bounds on |c|, equal when |c| is rational."""
    n2 = c.norm2()
    if n2 == 0:
        return Fraction(0), Fraction(0)
    rn, rd = isqrt(n2.numerator), isqrt(n2.denominator)
    if rn * rn == n2.numerator and rd * rd == n2.denominator:
        return Fraction(rn, rd), Fraction(rn, rd)
    scale = 1 << (2 * _SQRT_BITS)
    lo_int = n2.numerator * scale // n2.denominator
    hi_int = -(-n2.numerator * scale // n2.denominator)
    lo = Fraction(isqrt(lo_int), 1 << _SQRT_BITS)
    hi = Fraction(isqrt(hi_int) + 1, 1 << _SQRT_BITS)
    return lo, hi


def _upper(c: GaussianRational) -> Fraction:
    return modulus_bounds(c)[1]


def _lower(c: GaussianRational) -> Fraction:
    return modulus_bounds(c)[0]


def _ceil_fraction(x: Fraction) -> Fraction:
    return Fraction(-(-x.numerator // x.denominator))


def _log_upper(x: Fraction) -> Fraction:
    """A rational number >= |log x|, rounded up to 2^-30."""
    v = abs(math.log(x.numerator) - math.log(x.denominator))
    return Fraction(math.ceil(v * (1 << 30)) + 1, 1 << 30)


@dataclass(frozen=True)
class HMember:
    a: AffineSyllable
    e: ElementarySyllable
    h: PlaneAutomorphism = field(repr=False, compare=False)
    degree: int

    @classmethod
    def build(cls, a: AffineSyllable, e: ElementarySyllable) -> "HMember":
        if a.in_S():
            raise ConeObstruction("affine factor fixes I = [1:0:0], so it lies in E", witness=a.to_json())
        if e.in_S():
            raise ValueError("elementary factor of an H member must have degree >= 2")
        return cls(a, e, compose(a.automorphism, e.automorphism), e.degree)

    @property
    def inverse(self) -> PlaneAutomorphism:
        return compose(self.e.inverse().automorphism, self.a.inverse().automorphism)


class HFamily:
    """All products h = a e for a in A and e in E."""

    def __init__(self, members: Sequence[HMember]):
        if not members:
            raise ValueError("an H family needs at least one member")
        self.members = list(members)
        self._index = {(m.a, m.e): i for i, m in enumerate(self.members)}

    @classmethod
    def from_syllables(cls, affines: Iterable[AffineSyllable], elementaries: Iterable[ElementarySyllable]) -> "HFamily":
        affines = _unique(affines)
        elementaries = _unique(elementaries)
        return cls([HMember.build(a, e) for a in affines for e in elementaries])

    @classmethod
    def derive_from_measure(cls, mu: MeasureSpec, max_length: int = 3) -> "HFamily":
        """Collect every syllable outside S appearing in reduced products of up to
        `max_length` atoms (and the inverses, so the families are symmetric)."""
        affines, elementaries = _collect_syllables(mu, max_length)
        affines += [a.inverse() for a in affines]
        elementaries += [e.inverse() for e in elementaries]
        return cls.from_syllables(affines, elementaries)

    def affines(self) -> list[AffineSyllable]:
        return _unique(m.a for m in self.members)

    def elementaries(self) -> list[ElementarySyllable]:
        return _unique(m.e for m in self.members)

    def escape_directions(self) -> set[ProjectivePoint]:
        """The finite set {a(I) : a in A} together with I itself."""
        out = {INDETERMINACY_I}
        for a in self.affines():
            out.add(ProjectivePoint(a.act_projective(INDETERMINACY_I.coords)))
        return out

    def find(self, a: AffineSyllable, e: ElementarySyllable) -> HMember | None:
        i = self._index.get((a, e))
        return None if i is None else self.members[i]

    def require(self, a: AffineSyllable, e: ElementarySyllable) -> HMember:
        m = self.find(a, e)
        if m is None:
            raise CertificationFailure("normal-form pair outside the certified family; refusing to extrapolate",
                                       witness={"a": a.to_json(), "e": e.to_json()})
        return m

    def __len__(self):
        return len(self.members)


def _unique(items):
    out, seen = [], set()
    for it in items:
        if it not in seen:
            seen.add(it)
            out.append(it)
    return out


def _collect_syllables(mu: MeasureSpec, max_length: int):
    affines, elementaries = [], []
    frontier = [WordStack()]
    for _ in range(max_length):
        nxt = []
        for stack in frontier:
            for atom in mu.atoms:
                s = WordStack()
                s.items = list(stack.items)
                s.push_word_left(atom.word.syllables)
                nxt.append(s)
                for syl in s.items:
                    if syl.in_S():
                        continue
                    (affines if is_affine(syl) else elementaries).append(syl)
        frontier = nxt
    return _unique(affines), _unique(elementaries)


@dataclass(frozen=True)
class FiltrationParams:
    epsilon: Fraction
    R: Fraction
    C_eps: Fraction
    M_eps: Fraction

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.R < 1 or self.C_eps <= 0 or self.M_eps <= 0:
            raise ValueError("need R >= 1 and positive C_eps, M_eps")

    @property
    def log_R(self) -> float:
        return math.log(self.R.numerator) - math.log(self.R.denominator)

    @property
    def log_C(self) -> float:
        return math.log(self.C_eps.numerator) - math.log(self.C_eps.denominator)

    def to_json(self) -> dict:
        return {k: format_rational(getattr(self, k)) for k in ("epsilon", "R", "C_eps", "M_eps")}

    @classmethod
    def from_json(cls, data: dict) -> "FiltrationParams":
        return cls(*(Fraction(data[k]) for k in ("epsilon", "R", "C_eps", "M_eps")))


def _cone_threshold(a: AffineSyllable) -> Fraction:
    """Largest eps (lower bound) for which a sends deep V- points into V+."""
    (a11, a12), (a21, _) = a.matrix
    t1 = a.translation[0]
    return _lower(a21) / (2 * (_upper(a11) + _upper(a12) + _upper(t1)))


def _member_constraints(m: HMember, eps: Fraction):
    """Per-member thresholds on R and the growth constants of the forward proof."""
    e, a = m.e, m.a
    d = e.degree
    coeffs = [m_c for m_c in e.p.terms().items()]
    top = _lower(e.p.coefficient(0, d))
    lower_sum = sum((_upper(c) for (_, j), c in coeffs if j < d), Fraction(0))
    alpha_up, beta_up, delta_up = _upper(e.alpha), _upper(e.beta), _upper(e.delta)
    (a11, a12), (a21, a22) = a.matrix
    t1, t2 = a.translation
    a21_lo = _lower(a21)
    # |alpha x + p(y)| >= C_e |y|^d on V+ once |y| >= y0
    C_e = top / 2
    y0 = 2 * (lower_sum + alpha_up / eps) / top
    # e(q) must sit in the cone |Y'| <= eta |X'| with |X'| >= X0
    a22_up = _upper(a22)
    eta = min(Fraction(1), a21_lo / (4 * a22_up)) if a22_up else Fraction(1)
    y1 = (beta_up + delta_up) / (C_e * eta)
    X0 = max(Fraction(1), 4 * _upper(t2) / a21_lo)
    y2 = X0 / C_e
    C_h = (a21_lo / 2) * C_e * eps**d
    y_needed = max(Fraction(1), y0, y1, y2)
    R_forward = max(y_needed / eps, 1 / C_h)
    # upper growth for the two-sided bound
    p_up = sum((_upper(c) for _, c in coeffs), Fraction(0))
    E_up = max(p_up + alpha_up, beta_up + delta_up, Fraction(1))
    A_up = max(_upper(a11) + _upper(a12) + _upper(t1), _upper(a21) + a22_up + _upper(t2))
    C_upper = A_up * E_up
    return d, C_h, C_upper, R_forward


def _inverse_constraints(m: HMember, eps: Fraction) -> tuple[Fraction, Fraction]:
    """(max eps, min R) for h^-1 = e^-1 a^-1 to keep V- invariant."""
    e = m.e
    b = m.a.inverse()
    d = e.degree
    (b11, b12), (b21, b22) = b.matrix
    s1, s2 = b.translation
    b21_lo = _lower(b21)
    b22_up = _upper(b22)
    eps_max = b21_lo / (4 * b22_up) if b22_up else Fraction(1)
    top = _lower(e.p.coefficient(0, d))
    lower_sum = sum((_upper(c) for (_, j), c in e.p.terms().items() if j < d), Fraction(0))
    alpha_up, beta_up, delta_up = _upper(e.alpha), _upper(e.beta), _upper(e.delta)
    C_e = top / 2
    u0 = max(Fraction(1), 2 * lower_sum / top)
    B1 = _upper(b11) + _upper(b12) + _upper(s1)
    K1 = 2 * B1 * (beta_up + delta_up) / b21_lo
    kappa = b21_lo / (4 * beta_up)
    thresholds = [
        u0,
        2 * K1 / C_e,  # |u|^(d-1) >= 2 K1 / C_e
        4 * alpha_up / (C_e * eps),  # first coordinate beats |u| / eps with margin 2
    ]
    R_inv = max(max(thresholds) / kappa, 4 * _upper(s2) / b21_lo, 4 * delta_up / b21_lo,
                2 * alpha_up / (C_e * kappa**d), Fraction(1))
    return eps_max, R_inv


def compute_constants(H: HFamily, epsilon: Fraction | None = None, *, min_R: Fraction = Fraction(10)) -> FiltrationParams:
    """Sound (eps, R, C_eps, M_eps) for every member of H."""
    eps0 = Fraction(1, 2)
    for a in H.affines():
        if not a.matrix[1][0]:
            raise ConeObstruction("affine factor fixes I = [1:0:0]", witness=a.to_json())
        eps0 = min(eps0, _cone_threshold(a))
    for m in H.members:
        eps0 = min(eps0, _inverse_constraints(m, Fraction(1, 2))[0])
    if epsilon is None:
        epsilon = Fraction(math.floor(eps0 * (1 << 20)), 1 << 20)
    else:
        epsilon = Fraction(epsilon)
        if not 0 < epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if epsilon > eps0:
            raise ConeObstruction(f"epsilon {epsilon} exceeds the certified cone threshold {eps0}")
    R = Fraction(min_R)
    C_min = None
    M = Fraction(1)
    for m in H.members:
        d, C_h, C_upper, R_forward = _member_constraints(m, epsilon)
        _, R_inv = _inverse_constraints(m, epsilon)
        R = max(R, R_forward, R_inv)
        C_min = C_h if C_min is None else min(C_min, C_h)
        M = max(M, _log_upper(C_h) / d, _log_upper(C_upper) / d)
    R = _ceil_fraction(R)
    return FiltrationParams(epsilon, R, C_min, M)


def classify_point(q: ScaledPoint, params: FiltrationParams) -> str:
    if q.log_norm < params.log_R:
        return BALL
    u, v = q.direction
    eps = float(params.epsilon)
    return VPLUS if abs(v) >= eps * abs(u) else VMINUS


def certify_step(member: HMember, q: ScaledPoint, params: FiltrationParams) -> tuple[ScaledPoint, bool]:
    """One application of h on a V+ point together with the three certified bounds."""
    q2 = eval_scaled(member.h, q)
    d = member.degree
    in_plus = classify_point(q2, params) == VPLUS
    grows = q2.log_norm >= d * q.log_norm + params.log_C - 1e-12 * abs(q2.log_norm)
    bounded = abs(q2.log_norm / d - q.log_norm) <= float(params.M_eps)
    return q2, (in_plus and grows and bounded)


def certify_step_strict(member: HMember, q: ScaledPoint, params: FiltrationParams) -> ScaledPoint:
    q2, ok = certify_step(member, q, params)
    if not ok:
        raise CertificationFailure("filtration bound violated", witness=_witness(member, q, q2))
    return q2


def _witness(member, q, q2) -> dict:
    return {
        "a": member.a.to_json(),
        "e": member.e.to_json(),
        "direction": [[z.real, z.imag] for z in q.direction],
        "log_norm": q.log_norm,
        "image_direction": [[z.real, z.imag] for z in q2.direction],
        "image_log_norm": q2.log_norm,
    }


def sample_vplus(params: FiltrationParams, rng: np.random.Generator, log_low: float, log_high: float) -> ScaledPoint:
    """A random V+ point with log-norm uniform in [log_low, log_high]."""
    eps = float(params.epsilon)
    L = rng.uniform(log_low, log_high)
    ph = np.exp(2j * np.pi * rng.random(2))
    if rng.random() < 0.5:
        # |y| = 1 dominates
        return ScaledPoint.from_log((complex(rng.random() * ph[0]), complex(ph[1])), L)
    r = eps + (1 - eps) * rng.random()
    return ScaledPoint.from_log((complex(ph[0]), complex(r * ph[1])), L)


def sample_vminus(params: FiltrationParams, rng: np.random.Generator, log_low: float, log_high: float) -> ScaledPoint:
    eps = float(params.epsilon)
    L = rng.uniform(log_low, log_high)
    ph = np.exp(2j * np.pi * rng.random(2))
    r = eps * rng.random() * (1 - 1e-12)
    return ScaledPoint.from_log((complex(ph[0]), complex(r * ph[1])), L)


def certification_report(H: HFamily, params: FiltrationParams, samples: int, seed: int,
                         log_high: float = 700.0) -> dict:
    """Monte Carlo check of the forward clauses on V+ and the inverse clause on V-."""
    rng = np.random.default_rng(seed)
    failures = 0
    inverse_failures = 0
    witness = None
    inverses = [m.inverse for m in H.members]
    for k in range(samples):
        idx = int(rng.integers(len(H.members)))
        m = H.members[idx]
        q = sample_vplus(params, rng, params.log_R, log_high)
        q2, ok = certify_step(m, q, params)
        if not ok:
            failures += 1
            witness = witness or _witness(m, q, q2)
        w = sample_vminus(params, rng, params.log_R, log_high)
        w2 = eval_scaled(inverses[idx], w)
        if classify_point(w2, params) != VMINUS:
            inverse_failures += 1
            witness = witness or {"inverse_member": idx, "log_norm": w.log_norm}
    report = {"samples": samples, "failures": failures, "inverse_failures": inverse_failures,
              "params": params.to_json(), "members": len(H)}
    if witness is not None:
        report["witness"] = witness
    return report
