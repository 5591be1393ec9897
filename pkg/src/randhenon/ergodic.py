"""Orbit diagnostics: empirical measures, Lyapunov exponents, Jacobian drift and escape."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import OrbitEscaped
from .filtration import FiltrationParams, HFamily
from .green import RandomGreen
from .polyalg import ScaledPoint, eval_scaled
from .randwalk import MeasureSpec, WalkPath, sample_path

DISSIPATIVE = "Dissipative"
CONSERVATIVE = "Conservative"
EXPANDING = "Expanding"

# orbits are "bounded" while their sup norm stays below this
DEFAULT_ORBIT_RADIUS = 1e8

@dataclass
class EmpiricalMeasure:
    support_points: list[tuple[tuple[complex, complex], Fraction]]
    escaped_mass: Fraction
    N: int
    escape_time: int | None = None

    @property
    def total_mass(self) -> Fraction:
        return sum((w for _, w in self.support_points), Fraction(0)) + self.escaped_mass


def empirical_measure(path: WalkPath, p, N: int, escape: tuple[HFamily, FiltrationParams] | None = None,
                      *, radius: float | None = None) -> EmpiricalMeasure:
    """(1/N) sum_{n<N} delta_{f^n p}.

    With `escape` given, the Green certificate along the path decides whether the
    orbit tends to infinity; if so, every orbit point from the first one outside
    the certified ball R on counts as escaped mass and is no longer tracked.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    certified = False
    log_R = math.inf
    if escape is not None:
        family, params = escape
        certified = RandomGreen(path, family, params).evaluate(tuple(complex(c) for c in p)).escaped
        log_R = params.log_R
    if radius is not None:
        log_R = min(log_R, math.log(radius))
    maps = path.mu.maps
    q = ScaledPoint.from_coords(*p)
    weight = Fraction(1, N)
    support = []
    for n in range(N):
        if certified and q.log_norm >= log_R:
            return EmpiricalMeasure(support, weight * (N - n), N, n)
        support.append((q.coords(), weight))
        q = eval_scaled(maps[path.step(n)], q)
    return EmpiricalMeasure(support, Fraction(0), N, None)


@dataclass(frozen=True)
class LyapunovReport:
    lambda_plus: float
    lambda_minus: float
    n_used: int
    renormalizations: int
    log_jacobian_mean: float

    @property
    def identity_residual(self) -> float:
        return abs(self.lambda_plus + self.lambda_minus - self.log_jacobian_mean)


def _matmul(A, B):
    (a, b), (c, d) = A
    (e, f), (g, h) = B
    return ((a * e + b * g, a * f + b * h), (c * e + d * g, c * f + d * h))


def _renormalize(P) -> tuple[tuple, float]:
    """P / ||P||_F and log ||P||_F."""
    s = math.sqrt(sum(abs(z) ** 2 for row in P for z in row))
    return tuple(tuple(z / s for z in row) for row in P), math.log(s)


def _log_top_singular(P) -> float:
    (a, b), (c, d) = P
    f2 = abs(a) ** 2 + abs(b) ** 2 + abs(c) ** 2 + abs(d) ** 2
    det2 = abs(a * d - b * c) ** 2
    return 0.5 * math.log(0.5 * (f2 + math.sqrt(max(f2 * f2 - 4 * det2, 0.0))))


def lyapunov(path: WalkPath, p, N: int, *, radius: float = DEFAULT_ORBIT_RADIUS) -> LyapunovReport:
    """Both exponents of the differential cocycle along a bounded orbit segment.

    lambda+ is the growth of ||D_N ... D_1|| and lambda- that of the co-norm
    1 / ||(D_N ... D_1)^-1||, read off the product of inverse transposes.  Both
    products are renormalized at every step with the log scale accumulated.
    """
    maps = path.mu.maps
    x, y = complex(p[0]), complex(p[1])
    ident = ((1 + 0j, 0j), (0j, 1 + 0j))
    P, Q = ident, ident
    log_p = log_q = jac = 0.0
    for n in range(N):
        f = maps[path.step(n)]
        (a, b), (c, d) = M = f.differential(x, y)
        det = a * d - b * c
        P, s = _renormalize(_matmul(M, P))
        Q, t = _renormalize(_matmul(((d / det, -c / det), (-b / det, a / det)), Q))
        log_p += s
        log_q += t
        jac += 0.5 * math.log(float(f.jacobian.norm2()))
        x, y = f.evaluate_complex(x, y)
        if not (max(abs(x), abs(y)) < radius):
            raise OrbitEscaped(n + 1)
    top = (log_p + _log_top_singular(P)) / N
    bottom = -(log_q + _log_top_singular(Q)) / N
    return LyapunovReport(top, bottom, N, N, jac / N)


def jacobian_drift(mu: MeasureSpec) -> tuple[float, str]:
    """sum_f mu(f) log |Jac f| and its sign, decided exactly.

    With L the common denominator of the weights, prod |Jac f|^(2 L w_f) is a
    rational number whose comparison with 1 gives the sign without rounding.
    """
    norms = [m.jacobian.norm2() for m in mu.maps]
    weights = [a.weight for a in mu.atoms]
    L = math.lcm(*(w.denominator for w in weights))
    num = den = 1
    for n2, w in zip(norms, weights):
        e = int(w * L)
        num *= n2.numerator ** e
        den *= n2.denominator ** e
    if num == den:
        return 0.0, CONSERVATIVE
    drift = sum(float(w) * 0.5 * (math.log(n2.numerator) - math.log(n2.denominator)) for n2, w in zip(norms, weights))
    return drift, (EXPANDING if num > den else DISSIPATIVE)


@dataclass
class DichotomyRecord:
    seed: int
    point: tuple[complex, complex]
    escaped: bool
    hit_time: int | None
    bound_radius: float | None
    lambda_plus: float | None = None
    lambda_minus: float | None = None

    def to_row(self) -> dict:
        def fmt(v):
            return "" if v is None else repr(v)
        return {"seed": self.seed, "point": f"{self.point[0]!r};{self.point[1]!r}",
                "status": "Escaped" if self.escaped else "BoundedAtBudget",
                "hit_time": fmt(self.hit_time), "bound_radius": fmt(self.bound_radius),
                "lambda_plus": fmt(self.lambda_plus), "lambda_minus": fmt(self.lambda_minus)}


@dataclass
class DichotomyReport:
    records: list[DichotomyRecord]

    @property
    def escaped_fraction(self) -> float:
        return sum(r.escaped for r in self.records) / len(self.records) if self.records else 0.0

    @property
    def bound_radius(self) -> float:
        """Radius of the smallest centred ball holding every non-escaped orbit segment."""
        radii = [r.bound_radius for r in self.records if not r.escaped and r.bound_radius is not None]
        return max(radii, default=0.0)


def escape_dichotomy_experiment(mu: MeasureSpec, seeds: Sequence[int], sample_points: Sequence, N: int,
                                family: HFamily, params: FiltrationParams, *, with_lyapunov: bool = False
                                ) -> DichotomyReport:
    """Certified escape (within N prefix factors) or a bounded orbit segment of length N."""
    records = []
    maps = mu.maps
    for seed in seeds:
        path = sample_path(mu, seed)
        green = RandomGreen(path, family, params, budget=N)
        for p in sample_points:
            p = (complex(p[0]), complex(p[1]))
            gv = green.evaluate(p)
            if gv.escaped:
                records.append(DichotomyRecord(seed, p, True, gv.status.hit_time, None))
                continue
            q = ScaledPoint.from_coords(*p)
            radius = q.log_norm
            for n in range(N):
                q = eval_scaled(maps[path.step(n)], q)
                radius = max(radius, q.log_norm)
            rec = DichotomyRecord(seed, p, False, None, math.exp(radius) if radius < 700 else math.inf)
            if with_lyapunov:
                try:
                    rep = lyapunov(path, p, N)
                    rec.lambda_plus, rec.lambda_minus = rep.lambda_plus, rep.lambda_minus
                except OrbitEscaped:
                    pass
            records.append(rec)
    return DichotomyReport(records)
