import math

import numpy as np
import pytest

from toralclt.ergodic_stats import (
    NONZERO_VARIANCE_CERTIFIED,
    TELESCOPE_FOUND,
    UNDECIDED,
    BlockScheme,
    GapBoundError,
    blocked_quantities,
    coboundary_detect,
    ergodic_sum,
    exact_l2_norm_sq,
    quenched_variance_curve,
    variance_series,
)
from toralclt.exact_linalg import Alphabet, IntMatrix, Word, standard_alphabet
from toralclt.test_functions import TrigPoly, evaluate
from toralclt.torus_dynamics import ModularPoint, orbit

import helpers
import oracles


def _cos10() -> TrigPoly:
    return TrigPoly.cosine((1, 0))


class TestBlockScheme:
    def test_reference_scheme(self):
        s = BlockScheme(64, 0.5, 2)
        assert s.pitch == 8
        assert s.block_count == 8
        assert s.block_interval(0) == (0, 6)
        assert list(s.block_indices(0)) == [1, 2, 3, 4, 5, 6]
        assert s.block_interval(7) == (56, 62)

    def test_gaps_between_blocks(self):
        s = BlockScheme(100, 0.5, 3)
        for k in range(s.block_count - 1):
            _, right = s.block_interval(k)
            nxt, _ = s.block_interval(k + 1)
            assert nxt + 1 - right - 1 == s.gap - 1 or nxt - right == s.gap

    def test_covered_plus_leftover_partition(self):
        s = BlockScheme(64, 0.5, 2)
        union = sorted(s.covered_indices() + s.leftover_indices())
        assert union == list(range(1, 65))

    def test_validation(self):
        with pytest.raises(ValueError):
            BlockScheme(10, 1.2, 1)
        with pytest.raises(ValueError):
            BlockScheme(64, 0.5, 8)  # gap not below pitch

    def test_pitch_integer_power_stable(self):
        assert BlockScheme(64, 0.5, 1).pitch == 8
        assert BlockScheme(1000, 1.0 / 3.0, 1).pitch == 10


class TestExactL2:
    def test_collision_free_cosine_small(self):
        rng = np.random.default_rng(0)
        w = helpers.standard_word(rng, 120)
        for n in (1, 2, 17, 120):
            assert exact_l2_norm_sq(w, _cos10(), n) == pytest.approx(0.5 * n)

    def test_matches_naive_double_sum(self):
        rng = np.random.default_rng(1)
        for alphabet in (standard_alphabet(), helpers.SHEAR_ALPHABET):
            for _ in range(8):
                n = int(rng.integers(1, 12))
                w = helpers.random_word(rng, alphabet, n)
                g = helpers.random_trig_poly(rng, 2, 3, max_freq=2)
                got = exact_l2_norm_sq(w, g, n)
                expect = oracles.naive_sum_norm_sq(
                    helpers.as_plain_letters(w), helpers.signed_terms(g), n
                )
                assert got == pytest.approx(expect, rel=1e-12, abs=1e-12)

    def test_constant_term_accumulates(self):
        rng = np.random.default_rng(2)
        w = helpers.standard_word(rng, 10)
        g = TrigPoly(2, {(1, 0): 0.5}, const=1.0)
        got = exact_l2_norm_sq(w, g, 10)
        expect = oracles.naive_sum_norm_sq(
            helpers.as_plain_letters(w), helpers.signed_terms(g), 10
        )
        assert got == pytest.approx(expect)
        assert got >= 100.0  # the mean alone contributes n^2

    def test_bounds(self):
        rng = np.random.default_rng(3)
        w = helpers.standard_word(rng, 5)
        with pytest.raises(ValueError):
            exact_l2_norm_sq(w, _cos10(), 6)
        with pytest.raises(ValueError):
            exact_l2_norm_sq(w, _cos10(), 0)


class TestErgodicSum:
    def test_matches_orbit_evaluation(self):
        rng = np.random.default_rng(4)
        w = helpers.standard_word(rng, 8)
        g = helpers.random_trig_poly(rng, 2, 3)
        pt = ModularPoint(997, (123, 456))
        total = sum(evaluate(g, z) for z in orbit(w, pt, 8))
        assert ergodic_sum(w, g, pt, 8) == pytest.approx(total)


class TestBlockedQuantities:
    def test_reference_instance_exact_values(self):
        rng = np.random.default_rng(5)
        w = helpers.standard_word(rng, 64)
        scheme = BlockScheme(64, 0.5, 2)
        bq = blocked_quantities(w, _cos10(), scheme)
        # each block holds 6 collision-free cosine pushforwards
        assert bq.block_l2_sq == tuple([3.0] * 8)
        assert bq.sum_block_l2_sq == pytest.approx(24.0)
        assert bq.full_l2_sq == pytest.approx(32.0)
        assert bq.gapped_l2_sq == pytest.approx(24.0)
        # leftover indices: two per inter-block gap plus the tail 63, 64
        assert bq.gap_error**2 == pytest.approx(bq.full_l2_sq - bq.gapped_l2_sq)
        assert bq.gap_error**2 <= bq.gap_error_bound

    def test_gap_error_is_exact_difference_when_collision_free(self):
        rng = np.random.default_rng(6)
        w = helpers.standard_word(rng, 30)
        scheme = BlockScheme(30, 0.5, 1)
        bq = blocked_quantities(w, _cos10(), scheme)
        assert bq.gap_error**2 == pytest.approx(bq.full_l2_sq - bq.gapped_l2_sq)

    def test_mean_accumulation_trips_bound(self):
        # the gap budget assumes a centered observable; a mean term makes
        # the leftover indices add coherently and blows through it
        rng = np.random.default_rng(7)
        w = helpers.standard_word(rng, 95)
        scheme = BlockScheme(95, 0.5, 1)
        g = TrigPoly(2, {(1, 0): 0.5}, const=1.0)
        with pytest.raises(GapBoundError):
            blocked_quantities(w, g, scheme)
        bq = blocked_quantities(w, g, scheme, check_gap_bound=False)
        assert bq.gap_error**2 > bq.gap_error_bound


class TestVarianceSeries:
    def test_collision_free_cosine_exhaustive(self):
        res = variance_series(standard_alphabet(), None, _cos10(), r_max=6)
        assert res.mode == "exhaustive"
        assert res.per_shift == tuple([0.0] * 6)
        assert res.sigma_sq == pytest.approx(0.5)
        assert res.tail_zero_from is not None

    def test_prune_certificate_matches_escape_depth(self):
        # L(1,0) = (2,1) escapes immediately but R(1,0) = (1,1) sits at
        # the support radius, so certification starts at shift 2
        res = variance_series(standard_alphabet(), None, _cos10(), r_max=4)
        assert res.tail_zero_from == 2

    def test_weights_shift_the_mix(self):
        f = TrigPoly(2, {(1, 0): 1.0, (2, 1): 1.0})
        res_l = variance_series(standard_alphabet(), [1.0, 0.0], f, r_max=3)
        res_r = variance_series(standard_alphabet(), [0.0, 1.0], f, r_max=3)
        # under pure L the support collides after one step: L(1,0) = (2,1)
        assert res_l.per_shift[0] != 0.0
        assert res_r.per_shift[0] == 0.0

    def test_monte_carlo_agrees_with_exhaustive(self):
        f = TrigPoly(2, {(1, 0): 1.0, (2, 1): 1.0, (1, 1): 0.5})
        exact = variance_series(standard_alphabet(), None, f, r_max=5)
        mc = variance_series(
            standard_alphabet(), None, f, r_max=5, exhaustive=False, word_samples=4000
        )
        assert mc.mode == "monte_carlo"
        assert mc.stderr is not None
        assert abs(mc.sigma_sq - exact.sigma_sq) <= 4 * mc.stderr + 1e-9

    def test_validation(self):
        with pytest.raises(ValueError):
            variance_series(standard_alphabet(), [1.0], _cos10(), r_max=2)
        with pytest.raises(ValueError):
            variance_series(standard_alphabet(), [0.0, 0.0], _cos10(), r_max=2)
        with pytest.raises(ValueError):
            variance_series(standard_alphabet(), None, _cos10(), r_max=-1)


class TestQuenchedVarianceCurve:
    def test_exact_mode_collision_free(self):
        rng = np.random.default_rng(8)
        w = helpers.standard_word(rng, 500)
        curve = quenched_variance_curve(w, _cos10(), (1, 10, 100, 500))
        assert curve.mode == "exact"
        assert curve.stderrs is None
        assert all(v == pytest.approx(0.5) for v in curve.values)

    def test_exact_mode_matches_scan(self):
        rng = np.random.default_rng(9)
        w = helpers.standard_word(rng, 40)
        g = helpers.random_trig_poly(rng, 2, 3)
        curve = quenched_variance_curve(w, g, (5, 17, 40))
        for n, v in zip(curve.n_grid, curve.values):
            assert v == pytest.approx(exact_l2_norm_sq(w, g, n) / n)

    def test_monte_carlo_mode_brackets_exact(self):
        rng = np.random.default_rng(10)
        w = helpers.standard_word(rng, 30)
        g = _cos10()
        from toralclt.test_functions import HolderFn

        h = HolderFn(
            lambda x: math.cos(2 * math.pi * x[0]),
            alpha=1.0,
            holder_norm=2 * math.pi,
            dim=2,
        )
        curve = quenched_variance_curve(w, h, (10, 30), samples=20000, seed=3)
        assert curve.mode == "monte_carlo"
        for n, v, se in zip(curve.n_grid, curve.values, curve.stderrs):
            exact = exact_l2_norm_sq(w, g, n) / n
            assert abs(v - exact) <= 5 * se

    def test_grid_validation(self):
        rng = np.random.default_rng(11)
        w = helpers.standard_word(rng, 10)
        with pytest.raises(ValueError):
            quenched_variance_curve(w, _cos10(), (0, 5))
        with pytest.raises(ValueError):
            quenched_variance_curve(w, _cos10(), (5, 11))


class TestCoboundaryDetect:
    def test_telescope_roundtrip(self):
        a = helpers.L
        p = (1, 0)
        f = TrigPoly.cosine(tuple(a.mul_vec(p))) - TrigPoly.cosine(p)
        rep = coboundary_detect(a, f)
        assert rep.verdict == TELESCOPE_FOUND
        assert rep.transfer is not None
        # h o tau - h == f on coefficients
        diff = rep.transfer.compose_with(a) - rep.transfer
        assert diff == f

    def test_telescope_exactness_long_orbit(self):
        a = helpers.L
        p = (1, 0)
        q = tuple((a * a * a).mul_vec(p))
        f = TrigPoly.cosine(q, amplitude=0.25) - TrigPoly.cosine(p, amplitude=0.25)
        rep = coboundary_detect(a, f)
        assert rep.verdict == TELESCOPE_FOUND
        diff = rep.transfer.compose_with(a) - rep.transfer
        assert diff == f

    def test_cosine_is_not_a_coboundary(self):
        rep = coboundary_detect(helpers.L, TrigPoly.cosine((1, 0)))
        assert rep.verdict == NONZERO_VARIANCE_CERTIFIED

    def test_nonzero_mean_certified(self):
        f = TrigPoly(2, {(1, 0): 1.0}, const=1.0)
        rep = coboundary_detect(helpers.L, f)
        assert rep.verdict == NONZERO_VARIANCE_CERTIFIED

    def test_zero_function(self):
        rep = coboundary_detect(helpers.L, TrigPoly(2, {}))
        assert rep.verdict == TELESCOPE_FOUND
        assert rep.transfer.is_zero()

    def test_rotation_cycle_mixed_signs_undecided(self):
        # finite orbits with nonzero cycle sums rule out a telescope, but
        # the matrix is not positive so no variance certificate applies
        rot = IntMatrix([[0, -1], [1, 0]])
        f = TrigPoly(2, {(1, 0): 1.0, (0, 1): -0.25})
        rep = coboundary_detect(rot, f)
        assert rep.verdict == UNDECIDED

    def test_rotation_cycle_with_assertion_certifies(self):
        rot = IntMatrix([[0, -1], [1, 0]])
        f = TrigPoly(2, {(1, 0): 1.0, (0, 1): -0.25})
        rep = coboundary_detect(rot, f, condition_asserted=True)
        assert rep.verdict == NONZERO_VARIANCE_CERTIFIED

    def test_rotation_telescope_on_cycle(self):
        # cycle sum zero: f = g o tau - g with g = cos supported on the cycle
        rot = IntMatrix([[0, -1], [1, 0]])
        g = TrigPoly.cosine((1, 0))
        f = g.compose_with(rot) - g
        rep = coboundary_detect(rot, f)
        assert rep.verdict == TELESCOPE_FOUND
        assert (rep.transfer.compose_with(rot) - rep.transfer) == f

    def test_word_source_reports_trajectory(self):
        rng = np.random.default_rng(12)
        w = helpers.standard_word(rng, 20)
        rep = coboundary_detect(w, TrigPoly.cosine((1, 0)), horizon=20)
        assert rep.verdict == UNDECIDED
        assert rep.trajectory is not None
        # partial sums from step 0 through the horizon, nondecreasing
        assert len(rep.trajectory) == 21
        assert list(rep.trajectory) == sorted(rep.trajectory)

    def test_source_validation(self):
        with pytest.raises(ValueError):
            coboundary_detect(standard_alphabet(), _cos10())  # two letters
        with pytest.raises(ValueError):
            coboundary_detect(IntMatrix([[2, 0], [0, 3]]), _cos10())
        with pytest.raises(TypeError):
            coboundary_detect("L", _cos10())
        with pytest.raises(ValueError):
            coboundary_detect(helpers.L, _cos10(), horizon=0)
