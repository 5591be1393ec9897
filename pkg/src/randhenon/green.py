"""Random Green functions from stable prefixes, with rigorous tail bounds.

Along the stable right end b, h_1, h_2, ... of f^n (b the trailing affine, if
any), G(q) = lim log+ ||h_k ... h_1 b q|| / (d_1 ... d_k).  Once the orbit is in
V+ every further step moves u_k by at most M/d^k, so the tail is 2M/d^k.
"""
from __future__ import annotations

import json
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CertificationFailure, NotStabilized
from .filtration import VPLUS, FiltrationParams, HFamily, HMember, classify_point, certify_step, sample_vplus
from .polyalg import INDETERMINACY_I, PlaneAutomorphism, ProjectivePoint, ScaledPoint, eval_scaled
from .randwalk import PrefixTable, WalkPath, prefix_products, stabilization_times

DEFAULT_TOL = 1e-9
DEFAULT_BUDGET = 10_000


@dataclass(frozen=True)
class Escaped:
    hit_time: int
    k_used: int


@dataclass(frozen=True)
class BoundedAtBudget:
    budget: int


@dataclass(frozen=True)
class GreenValue:
    value: float
    error_bound: float
    status: Escaped | BoundedAtBudget
    point: tuple[complex, complex]

    @property
    def escaped(self) -> bool:
        return isinstance(self.status, Escaped)

    def to_row(self) -> dict:
        st = self.status
        return {
            "x": repr(self.point[0]), "y": repr(self.point[1]),
            "status": "Escaped" if self.escaped else "BoundedAtBudget",
            "value": repr(self.value), "error_bound": repr(self.error_bound),
            "hit_time": st.hit_time if self.escaped else "",
            "k_used": st.k_used if self.escaped else "",
        }


@dataclass(frozen=True)
class USequence:
    u: float
    k: int
    err: float
    hit_time: int | None
    trace: tuple[tuple[float, float], ...] = ()


def _as_scaled(q) -> ScaledPoint:
    if isinstance(q, ScaledPoint):
        return q
    return ScaledPoint.from_coords(*q)


def _scaled_ratio(value: float, log_denominator: float) -> float:
    """value / e^log_denominator without overflowing the denominator."""
    if value <= 0.0:
        return 0.0
    return math.exp(math.log(value) - log_denominator)


def u_sequence(members: Sequence[HMember], q, params: FiltrationParams, tol: float = DEFAULT_TOL,
               *, keep_trace: bool = False) -> USequence:
    """u_k = log+ ||h_k ... h_1 q|| / (d_1 ... d_k), stopped once 2M/d^k < tol.

    If the orbit never reaches V+ the result is u = 0, err = 0 and hit_time None.
    """
    q = _as_scaled(q)
    M = float(params.M_eps)
    trace = []
    hit = 0 if classify_point(q, params) == VPLUS else None
    log_D = 0.0
    u = err = 0.0
    if hit is not None:
        u, err = q.log_plus, 2 * M
        trace.append((u, err))
        if err < tol:
            return USequence(u, 0, err, 0, tuple(trace))
    k = 0
    for k, m in enumerate(members, 1):
        if hit is None:
            q = eval_scaled(m.h, q)
            if classify_point(q, params) == VPLUS:
                hit = k
        else:
            q2, ok = certify_step(m, q, params)
            if not ok:
                raise CertificationFailure("filtration bound violated along the prefix",
                                           witness={"step": k, "log_norm": q.log_norm,
                                                    "direction": [[z.real, z.imag] for z in q.direction]})
            q = q2
        log_D += math.log(m.degree)
        if hit is not None:
            u = _scaled_ratio(q.log_plus, log_D)
            err = _scaled_ratio(2 * M, log_D)
            if keep_trace:
                trace.append((u, err))
            if err < tol:
                return USequence(u, k, err, hit, tuple(trace))
    if hit is None:
        return USequence(0.0, k, 0.0, None, tuple(trace))
    return USequence(u, k, err, hit, tuple(trace))


class RandomGreen:
    """G along one itinerary, extending the stable prefix on demand."""

    def __init__(self, path: WalkPath, family: HFamily, params: FiltrationParams,
                 table: PrefixTable | None = None, *, tol: float = DEFAULT_TOL, budget: int = DEFAULT_BUDGET):
        self.path = path
        self.family = family
        self.params = params
        self.tol = tol
        self.budget = budget
        if table is None:
            table = self._scan(self._depth_for_tol())
        self.table = table
        self._members: list[HMember] = []
        self._extend_lock = threading.Lock()
        self._sync_members()

    def _depth_for_tol(self) -> int:
        # d >= 2, plus slack for the hitting time
        return min(self.budget, math.ceil(math.log2(2 * float(self.params.M_eps) / self.tol)) + 8)

    def _scan(self, depth: int) -> PrefixTable:
        N = max(64, 4 * depth)
        while True:
            table = stabilization_times(self.path, depth, N, strict=False)
            if table.depth >= depth or N > 64 * depth + 10_000:
                if table.depth == 0:
                    raise NotStabilized(1, N)
                return table
            N *= 2

    def _sync_members(self):
        self._members = [self.family.require(a, e) for a, e in self.table.hfactors()]

    @property
    def trailing_affine(self):
        return self.table.trailing_affine

    def members(self, k: int) -> list[HMember]:
        k = min(k, self.budget)
        if k > len(self._members):
            # render threads share one instance; only one of them extends the table
            with self._extend_lock:
                if k > len(self._members):
                    table = self._scan(k)
                    if table.depth <= self.table.depth:
                        raise NotStabilized(self.table.depth + 1, table.horizon)
                    self.table = table
                    self._sync_members()
        return self._members[:k]

    def start(self, q) -> ScaledPoint:
        q = _as_scaled(q)
        if self.table.trailing_affine is not None:
            q = eval_scaled(self.table.trailing_affine.automorphism, q)
        return q

    def evaluate(self, q) -> GreenValue:
        point = tuple(complex(c) for c in q)
        res = u_sequence(self._lazy_members(), self.start(point), self.params, self.tol)
        if res.hit_time is None:
            return GreenValue(0.0, 0.0, BoundedAtBudget(res.k), point)
        return GreenValue(res.u, res.err, Escaped(res.hit_time, res.k), point)

    def _lazy_members(self):
        """The stable factors in order, extending the prefix table by doubling up to the budget."""
        k = 0
        while k < self.budget:
            batch = self.members(max(2 * k, len(self._members), 1))
            yield from batch[k:]
            k = len(batch)

    def u_at(self, q, k: int) -> USequence:
        """u_k exactly at depth k (no early stop)."""
        return u_sequence(self.members(k), self.start(q), self.params, tol=0.0)


def green_evaluate(path: WalkPath, table: PrefixTable | None, q, params: FiltrationParams, family: HFamily,
                   tol: float = DEFAULT_TOL, budget: int = DEFAULT_BUDGET) -> GreenValue:
    return RandomGreen(path, family, params, table, tol=tol, budget=budget).evaluate(q)


def direct_green(path: WalkPath, n: int, q) -> float:
    """G_n(q) = log+ ||f^n q|| / deg f^n, iterating the reduced word of f^n."""
    word = prefix_products(path, n)
    p = _as_scaled(q)
    for s in reversed(word.syllables):
        p = eval_scaled(s.automorphism, p)
    log_degree = sum(math.log(d) for d in word.elementary_degrees())
    return _scaled_ratio(p.log_plus, log_degree)


@dataclass(frozen=True)
class EscapeDirection:
    point_at_infinity: ProjectivePoint

    def to_json(self) -> list:
        return self.point_at_infinity.to_json()


def escape_direction(table: PrefixTable) -> EscapeDirection:
    """b^-1(I) for the trailing affine b of the stable form; I when it starts elementary."""
    if table.depth < 1:
        raise NotStabilized(1, table.horizon)
    b = table.trailing_affine
    if b is None:
        return EscapeDirection(INDETERMINACY_I)
    return EscapeDirection(ProjectivePoint(b.inverse().act_projective(INDETERMINACY_I.coords)))


def sample_escape_region(table: PrefixTable, params: FiltrationParams, rng: np.random.Generator,
                         count: int, log_high: float = 40.0) -> list[tuple[complex, complex]]:
    """Points of U(p) = b^-1(V+) in ordinary coordinates."""
    b = table.trailing_affine
    binv = b.inverse().automorphism if b is not None else None
    out = []
    for _ in range(count):
        v = sample_vplus(params, rng, params.log_R, log_high)
        if binv is not None:
            v = eval_scaled(binv, v)
        out.append(v.coords())
    return out


@dataclass(frozen=True)
class SliceWindow:
    """The complex line z -> base + z * direction, z over a rectangle."""

    base: tuple[complex, complex]
    direction: tuple[complex, complex]
    re_range: tuple[float, float]
    im_range: tuple[float, float]
    resolution: tuple[int, int]

    def __post_init__(self):
        nx, ny = self.resolution
        if nx < 0 or ny < 0:
            raise ValueError("resolution must be non-negative")

    def points(self) -> list[tuple[complex, complex]]:
        nx, ny = self.resolution
        xs = np.linspace(*self.re_range, nx) if nx > 1 else np.array([self.re_range[0]] * nx)
        ys = np.linspace(*self.im_range, ny) if ny > 1 else np.array([self.im_range[0]] * ny)
        out = []
        for im in ys:
            for re in xs:
                z = complex(re, im)
                out.append((self.base[0] + z * self.direction[0], self.base[1] + z * self.direction[1]))
        return out

    def to_json(self) -> dict:
        return {"base": [[c.real, c.imag] for c in map(complex, self.base)],
                "direction": [[c.real, c.imag] for c in map(complex, self.direction)],
                "re_range": list(self.re_range), "im_range": list(self.im_range),
                "resolution": list(self.resolution)}


def render_slice(green: RandomGreen, window: SliceWindow, threads: int = 1) -> list[list[GreenValue]]:
    """Row-major grid of GreenValues; identical output for any thread count."""
    nx, ny = window.resolution
    pts = window.points()
    if not pts:
        return []
    # extend the prefix once, single-threaded, before sharing it
    green.members(green._depth_for_tol())
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            values = list(pool.map(green.evaluate, pts))
    else:
        values = [green.evaluate(p) for p in pts]
    return [values[r * nx:(r + 1) * nx] for r in range(ny)]


def write_raster(grid: list[list[GreenValue]], raster_path, sidecar_path, sidecar: dict) -> None:
    """float32 little-endian raster (BoundedAtBudget cells are 0) plus a JSON sidecar."""
    ny = len(grid)
    nx = len(grid[0]) if ny else 0
    arr = np.zeros((ny, nx), dtype="<f4")
    for r, row in enumerate(grid):
        for c, gv in enumerate(row):
            arr[r, c] = gv.value
    with open(raster_path, "wb") as fh:
        fh.write(arr.tobytes())
    meta = dict(sidecar)
    meta.update({"shape": [ny, nx], "dtype": "float32-le",
                 "escaped": sum(gv.escaped for row in grid for gv in row)})
    with open(sidecar_path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def classical_green(h: PlaneAutomorphism, q, tol: float = DEFAULT_TOL, budget: int = 1000,
                    escape_log: float = math.log(1e3)) -> GreenValue:
    """G_h(q) = lim log+ ||h^n q|| / d^n by scaled iteration.

    Stops when the normalized value moved by less than tol after the orbit has
    left the ball of radius e^escape_log.  Orbits that never leave it within the
    budget report BoundedAtBudget.
    """
    point = tuple(complex(c) for c in q)
    p = ScaledPoint.from_coords(*point)
    d = h.degree
    prev = p.log_plus
    hit = None
    log_D = 0.0
    for n in range(1, budget + 1):
        p = eval_scaled(h, p)
        log_D += math.log(d)
        cur = _scaled_ratio(p.log_plus, log_D)
        if hit is None and p.log_norm > escape_log:
            hit = n
        if hit is not None and abs(cur - prev) < tol * (d - 1) / d:
            # geometric tail: the remaining change is below tol
            return GreenValue(cur, abs(cur - prev) / (d - 1), Escaped(hit, n), point)
        prev = cur
    return GreenValue(0.0, 0.0, BoundedAtBudget(budget), point)
