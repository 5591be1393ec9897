import math
import random
from collections import Counter
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from randhenon.errors import NotStabilized
from randhenon.families import dirac_measure, henon_word, ping_pong_measure
from randhenon.polyalg import equals
from randhenon.randwalk import (LeftProducts, MeasureSpec, ScriptedPath, convolution_power, prefix_products,
                                sample_path, stabilization_times, walk_statistics)
from randhenon.wordgroup import AmalgamWord, compose_word, is_affine, jung_decompose

H = henon_word([0, 0, 1])
PING_PONG = ping_pong_measure()
F, F_INV = 0, 1  # atom order of the symmetric measure: f, f^-1, g, g^-1


def brute_stabilization(path, K, N):
    """Store every reduced prefix and scan backwards for the last change of each block."""
    walker = LeftProducts(path)
    snaps = [()]
    for _ in range(N):
        walker.advance()
        snaps.append(tuple(walker.stack.items))
    final = snaps[-1]
    offset = 1 if final and is_affine(final[0]) else 0
    out = []
    for k in range(1, K + 1):
        size = 2 * k + offset
        if len(final) < size:
            break
        t = N
        while t > 0 and snaps[t - 1][:size] == final[:size]:
            t -= 1
        out.append(t)
    return out


def free_group_law(n: int) -> Counter:
    """Law of the n-step simple random walk on F_2, by reduced strings."""
    inverse = {"a": "A", "A": "a", "b": "B", "B": "b"}
    law = Counter({"": Fraction(1)})
    for _ in range(n):
        nxt = Counter()
        for word, p in law.items():
            for s in "aAbB":
                w = word[:-1] if word and word[-1] == inverse[s] else word + s
                nxt[w] += p / 4
        law = nxt
    return law


class TestSamplePath:
    def test_single_atom_is_constant(self):
        path = sample_path(dirac_measure(H), 123)
        assert path.extend(50) == [0] * 50

    def test_rerun_is_identical(self):
        mu = MeasureSpec([(H, Fraction(1, 2)), (jung_decompose(compose_word(H @ H)), Fraction(1, 2))])
        assert sample_path(mu, 77).extend(500) == sample_path(mu, 77).extend(500)
        assert sample_path(mu, 77).extend(500) != sample_path(mu, 78).extend(500)

    def test_lazy_extension_matches_bulk(self):
        a = sample_path(PING_PONG, 3)
        b = sample_path(PING_PONG, 3)
        assert [a.step(n) for n in range(200)] == b.extend(200)

    @pytest.mark.parametrize("weights", [(Fraction(1, 2), Fraction(1, 2)), (Fraction(1, 3), Fraction(2, 3))])
    def test_chi_square_uniformity(self, weights):
        mu = MeasureSpec([(H, weights[0]), (H @ H, weights[1])])
        n = 10**5
        counts = Counter(sample_path(mu, 2024).extend(n))
        chi2 = sum((counts[i] - n * float(w)) ** 2 / (n * float(w)) for i, w in enumerate(weights))
        df = len(weights) - 1
        assert chi2 <= df + 4 * math.sqrt(2 * df)

    def test_chi_square_four_atoms(self):
        n = 10**5
        counts = Counter(sample_path(PING_PONG, 99).extend(n))
        chi2 = sum((counts[i] - n / 4) ** 2 / (n / 4) for i in range(4))
        assert chi2 <= 3 + 4 * math.sqrt(6)


class TestPrefixProducts:
    def test_zero_is_empty(self):
        assert len(prefix_products(sample_path(PING_PONG, 0), 0)) == 0

    def test_henon_cube(self):
        path = sample_path(dirac_measure(H), 0)
        w = prefix_products(path, 3)
        assert w.elementary_degrees() == [2, 2, 2]
        h = compose_word(H)
        from randhenon.polyalg import compose
        assert equals(compose_word(w), compose(h, compose(h, h)))

    def test_inverse_cancels(self):
        path = ScriptedPath(PING_PONG, [F, F_INV])
        assert len(prefix_products(path, 1)) == 2
        assert len(prefix_products(path, 2)) == 0

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 12))
    def test_matches_direct_composition(self, seed, n):
        path = sample_path(PING_PONG, seed)
        maps = PING_PONG.maps
        from randhenon.polyalg import PlaneAutomorphism, compose
        f = PlaneAutomorphism.identity()
        for i in path.extend(n):
            f = compose(maps[i], f)
        w = prefix_products(path, n)
        assert w.reduced
        assert equals(compose_word(w), f)
        assert f.degree == max(1, w.degree_product())

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 40), st.integers(1, 40))
    def test_length_subadditive(self, seed, n, m):
        path = sample_path(PING_PONG, seed)
        steps = path.extend(n + m)
        head = len(prefix_products(path, n))
        tail = len(prefix_products(ScriptedPath(PING_PONG, steps[n:]), m))
        assert len(prefix_products(path, n + m)) <= head + tail


class TestStabilizationTimes:
    def test_henon_path(self):
        table = stabilization_times(sample_path(dirac_measure(H), 0), 5, 100)
        assert table.t == [1, 2, 3, 4, 5]
        e, a = H.syllables[1], H.syllables[0]
        assert all(pair == (a, e) for pair in table.stable_syllables)
        assert table.trailing_affine is None

    def test_hand_traced_cancellation(self):
        # f, f^-1, f, f, ...: f^1 = f, f^2 = id, f^3 = f, then powers of f
        path = ScriptedPath(PING_PONG, [F, F_INV, F] + [F] * 50)
        table = stabilization_times(path, 1, 53)
        assert table.t[0] == 3

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_matches_brute_force_oracle(self, seed):
        path = sample_path(PING_PONG, seed)
        table = stabilization_times(path, 8, 300, persistence=0, strict=False)
        assert table.observed_t == brute_stabilization(path, 8, 300)[:table.depth]

    def test_strictly_increasing_and_consistent(self):
        for seed in range(10):
            path = sample_path(PING_PONG, seed)
            table = stabilization_times(path, 3, 2000)
            assert all(a < b for a, b in zip(table.t, table.t[1:]))
            block = table.stable_word().syllables
            for k, t in enumerate(table.observed_t, 1):
                size = table.block_length(k)
                for n in (t, t + 1, (t + 2000) // 2, 2000):
                    w = prefix_products(path, n).syllables
                    assert w[len(w) - size:] == block[len(block) - size:]

    def test_not_stabilized(self):
        with pytest.raises(NotStabilized):
            stabilization_times(sample_path(PING_PONG, 0), 50, 60)

    def test_l_values(self):
        table = stabilization_times(sample_path(PING_PONG, 4), 3, 3000)
        assert len(table.l) == 3000
        assert table.l[-1] == 0
        assert all(v >= 0 and (2 * v) == int(2 * v) for v in table.l)

    def test_deterministic(self):
        a = stabilization_times(sample_path(PING_PONG, 11), 3, 2000)
        b = stabilization_times(sample_path(PING_PONG, 11), 3, 2000)
        assert (a.t, a.l, a.lengths, a.stable_syllables) == (b.t, b.l, b.lengths, b.stable_syllables)


class TestWalkStatistics:
    def test_dirac_drift_is_two(self):
        stats = walk_statistics(dirac_measure(H), [0, 1], 500)
        assert stats.drift == 2.0
        assert stats.entropy_estimate == 0.0

    def test_free_group_drift_positive(self):
        stats = walk_statistics(PING_PONG, range(200), 10**4)
        assert 0 < stats.drift < 2
        assert stats.drift - 4 * stats.drift_stderr > 0
        assert all(math.isfinite(t) for t in stats.tracking)

    @pytest.mark.parametrize("n", [1, 2, 3, 4, 5, 6])
    def test_convolution_matches_free_group_oracle(self, n):
        # the ping-pong pair generates a free group on f, g
        law = convolution_power(PING_PONG, n)
        oracle = free_group_law(n)
        assert sorted(law.values()) == sorted(oracle.values())

    def test_entropy_estimate_tracks_oracle_entropy(self):
        n = 6
        oracle = free_group_law(n)
        exact = -sum(float(p) * math.log(p) for p in oracle.values()) / n
        stats = walk_statistics(PING_PONG, range(2000), 10, n_conv=n)
        assert stats.entropy_n == n
        assert stats.entropy_estimate == pytest.approx(exact, rel=0.05)

    def test_entropy_near_log_three_at_six_steps(self):
        # Monte Carlo estimate at n_conv = 6 compared with log 3 per step at 10%
        stats = walk_statistics(PING_PONG, range(2000), 10, n_conv=6)
        assert stats.entropy_estimate == pytest.approx(math.log(3), rel=0.10)
