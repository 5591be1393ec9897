"""The eleven acceptance criteria at full size.

Each test prints one line "PASS <n> ..." or "FAIL <n> ...", visible with
pytest -s or in the terminal summary of `pytest -v`.
"""
import contextlib
import filecmp
import math
import random
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from helpers import random_affine_outside_s, random_reduced_word
from randhenon.blowup import (base_additivity_check, base_point_chain, chain_divergence_experiment,
                              indeterminacy_point, prefix_chain_consistency)
from randhenon.cli import main
from randhenon.ergodic import escape_dichotomy_experiment, jacobian_drift, lyapunov
from randhenon.errors import OrbitEscaped
from randhenon.families import conjugate, dirac_measure, disjoint_k_measure, henon_word, ping_pong_measure
from randhenon.filtration import HFamily, certification_report, compute_constants
from randhenon.green import RandomGreen, classical_green, direct_green, sample_escape_region
from randhenon.polyalg import equals
from randhenon.randwalk import MeasureSpec, sample_path, stabilization_times, walk_statistics
from randhenon.wordgroup import compose_word, invert_word, is_reduced_sequence, jung_decompose, reduce_word

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
H = henon_word([0, 0, 1])
PING_PONG = ping_pong_measure()
PP_FAMILY = HFamily.derive_from_measure(PING_PONG)
PP_PARAMS = compute_constants(PP_FAMILY)


@pytest.fixture
def criterion(capsys):
    @contextlib.contextmanager
    def run(number: int, title: str):
        start = time.perf_counter()
        details = {}
        try:
            yield details
        except BaseException:
            with capsys.disabled():
                print(f"\nFAIL {number:2d} {title} {details}")
            raise
        with capsys.disabled():
            print(f"\nPASS {number:2d} {title} {details} ({time.perf_counter() - start:.1f}s)")
    return run


def test_01_jung_round_trip(criterion):
    with criterion(1, "Jung round-trip on 500 reduced words") as info:
        rng = random.Random(1)
        start = time.perf_counter()
        exact = 0
        for _ in range(500):
            f = compose_word(reduce_word(random_reduced_word(rng, 64)))
            exact += equals(compose_word(jung_decompose(f)), f)
        info.update(exact=exact)
        assert exact == 500
        assert time.perf_counter() - start < 120


def test_02_degree_multiplicativity(criterion):
    with criterion(2, "degree is the product of elementary degrees on 200 H-words") as info:
        rng = random.Random(2)
        hits = 0
        for _ in range(200):
            w = random_reduced_word(rng, 64, lead_affine=True, tail_affine=False)
            assert is_reduced_sequence(w.syllables)
            hits += compose_word(w).degree == w.degree_product()
        info.update(exact=hits)
        assert hits == 200


def test_03_filtration_certification(criterion):
    families = {
        "henon": HFamily.derive_from_measure(dirac_measure(H)),
        "ping_pong": PP_FAMILY,
        "disjoint_k": HFamily.derive_from_measure(disjoint_k_measure()),
    }
    with criterion(3, "10^5 Monte Carlo filtration checks per family") as info:
        for name, family in families.items():
            report = certification_report(family, compute_constants(family), 10**5, seed=3, log_high=700.0)
            info[name] = (report["failures"], report["inverse_failures"])
        assert all(v == (0, 0) for v in info.values())


def test_04_green_convergence(criterion):
    with criterion(4, "two-path residual and classical functional equation") as info:
        M = float(PP_PARAMS.M_eps)
        rng = np.random.default_rng(4)
        checks = worst = 0
        for seed in range(10):
            path = sample_path(PING_PONG, seed)
            green = RandomGreen(path, PP_FAMILY, PP_PARAMS)
            table = green.table
            for q in sample_escape_region(table, PP_PARAMS, rng, 100, log_high=8.0):
                for k in range(1, 7):
                    u_k = green.u_at(q, k).u
                    t = table.t[k - 1]
                    for n in (t, t + 1, t + 7):
                        slack = abs(u_k - direct_green(path, n, q)) / (2 * M / 2**k)
                        worst = max(worst, slack)
                        checks += 1
        info.update(checks=checks, worst_ratio=round(worst, 4))
        assert worst <= 1.0

        h = compose_word(H)
        points = []
        pr = np.random.default_rng(40)
        while len(points) < 100:
            p = tuple(complex(*pr.uniform(-3, 3, 2)) for _ in range(2))
            if classical_green(h, p).escaped:
                points.append(p)
        dirac = dirac_measure(H)
        family = HFamily.derive_from_measure(dirac)
        green = RandomGreen(sample_path(dirac, 0), family, compute_constants(family))
        residual = max(abs(green.evaluate(h.evaluate_complex(*p)).value - 2 * green.evaluate(p).value)
                       for p in points)
        info.update(functional_equation=residual)
        assert residual <= 1e-6


def test_05_escape_region(criterion):
    with criterion(5, "10^3 points of U(p) escape across 20 seeds") as info:
        rng = np.random.default_rng(5)
        escaped = total = 0
        for seed in range(20):
            green = RandomGreen(sample_path(PING_PONG, seed), PP_FAMILY, PP_PARAMS)
            for q in sample_escape_region(green.table, PP_PARAMS, rng, 50):
                total += 1
                escaped += green.evaluate(q).escaped
        info.update(escaped=escaped, total=total)
        assert escaped == total == 1000


def test_06_prefix_stabilization(criterion):
    with criterion(6, "prefix stabilization over 100 seeds at N = 10^4") as info:
        tables = [stabilization_times(sample_path(PING_PONG, s), 3, 10**4, strict=False) for s in range(100)]
        t1 = sum(t.depth >= 1 for t in tables)
        t3 = sum(t.depth >= 3 for t in tables)
        tracking = walk_statistics(PING_PONG, range(100), 10**4, n_conv=1).tracking
        info.update(t1=t1, t3=t3, max_tracking=round(max(tracking), 3))
        assert t1 == 100 and t3 >= 95
        assert len(tracking) == 100 and all(math.isfinite(v) for v in tracking)


def test_07_base_point_engine(criterion):
    with criterion(7, "Noether identities, additivity and chain prefixes") as info:
        chain = base_point_chain(compose_word(H))
        m = chain.multiplicities
        info.update(noether=(sum(m), sum(x * x for x in m)))
        assert (sum(m), sum(x * x for x in m)) == (3, 3)

        rng = random.Random(7)
        pairs = additive = 0
        while pairs < 50:
            f = compose_word(conjugate(random_affine_outside_s(rng), henon_word([rng.randint(-2, 2), 0, 1])))
            g = compose_word(conjugate(random_affine_outside_s(rng), henon_word([rng.randint(-2, 2), 0, 1])))
            f_inv = compose_word(invert_word(jung_decompose(f)))
            if indeterminacy_point(g) == indeterminacy_point(f_inv):
                continue
            pairs += 1
            additive += base_additivity_check(f, g)
        info.update(additive=additive)
        assert additive == 50

        checked = good = 0
        for seed in range(20):
            results = prefix_chain_consistency(PING_PONG, seed, 4, N_max=400, max_degree=16)
            checked += len(results)
            good += sum(ok for _, ok in results)
        info.update(prefix_checks=checked, prefix_ok=good)
        assert checked >= 20 and good == checked


def test_08_chain_divergence(criterion):
    with criterion(8, "chain divergence by depth 6 on 50 seed pairs") as info:
        report = chain_divergence_experiment(PING_PONG, range(100), L=6, N_max=2000)
        info.update(pairs=len(report.pairs), fraction=report.fraction_diverged)
        assert len(report.pairs) == 50 and report.fraction_diverged >= 0.9


def test_09_lyapunov_identity(criterion):
    # two dissipative quadratic Henon maps with Jacobian 1/2 sharing a trapping region near 0
    mu = MeasureSpec([(henon_word([Fraction(-1, 4), 0, 1], Fraction(1, 2)), Fraction(1, 2)),
                      (henon_word([Fraction(-3, 10), 0, 1], Fraction(1, 2)), Fraction(1, 2))])
    drift, _ = jacobian_drift(mu)
    with criterion(9, "lambda+ + lambda- equals the Jacobian drift on 50 bounded orbits") as info:
        segments, escaped, worst = 0, 0, 0.0
        for seed in range(50):
            try:
                rep = lyapunov(sample_path(mu, seed), (0.1j, 0.2 + 0j), 10**4)
            except OrbitEscaped:
                escaped += 1
                continue
            worst = max(worst, abs(rep.lambda_plus + rep.lambda_minus - drift))
            segments += 1
        sym_drift = jacobian_drift(PING_PONG)
        info.update(segments=segments, escaped=escaped, worst=worst, symmetric=sym_drift)
        assert segments == 50 and worst <= 1e-6
        assert sym_drift == (0.0, "Conservative")


def test_10_escape_dichotomy(criterion):
    with criterion(10, "disjoint-K points escape; the common fixed point stays") as info:
        mu = disjoint_k_measure()
        family = HFamily.derive_from_measure(mu)
        params = compute_constants(family)
        rng = np.random.default_rng(10)
        points = [tuple(complex(*rng.uniform(-3, 3, 2)) for _ in range(2)) for _ in range(100)]
        report = escape_dichotomy_experiment(mu, range(10), points, 1000, family, params)
        escaped = sum(r.escaped for r in report.records)
        fixed = escape_dichotomy_experiment(PING_PONG, range(10), [(0, 0)], 1000, PP_FAMILY, PP_PARAMS)
        info.update(escaped=escaped, total=len(report.records), fixed_escaped=sum(r.escaped for r in fixed.records))
        assert escaped == len(report.records) == 1000
        assert not any(r.escaped for r in fixed.records)


RUNS = [
    ("decompose", "henon.yaml", []),
    ("classify", "henon.yaml", []),
    ("basepoints", "henon.yaml", []),
    ("walk", "ping_pong.yaml", []),
    ("filtration", "ping_pong.yaml", []),
    ("green", "ping_pong.yaml", []),
    ("green", "ping_pong.yaml", ["--render"]),
    ("basepoints", "ping_pong.yaml", []),
    ("ergodic", "disjoint.yaml", []),
]


def test_11_determinism(criterion, tmp_path):
    with criterion(11, "byte-identical artifacts on rerun for every subcommand") as info:
        compared = 0
        for i, (command, config, extra) in enumerate(RUNS):
            outs = []
            for rep, threads in enumerate(("1", "4")):
                out = tmp_path / f"{i}_{rep}"
                code = main([command, *extra, "--config", str(CONFIGS / config), "--out", str(out),
                             "--seed", "3", "--threads", threads])
                assert code == 0, (command, config, code)
                outs.append(out)
            names = sorted(p.name for p in outs[0].iterdir() if p.name != "run.log")
            assert names
            _, mismatch, errors = filecmp.cmpfiles(outs[0], outs[1], names, shallow=False)
            assert not mismatch and not errors, (command, mismatch)
            compared += len(names)
        info.update(artifacts=compared)
