import math

import numpy as np
import pytest

from toralclt.exact_linalg import Alphabet, IntMatrix, Word, standard_alphabet
from toralclt.random_products import (
    ExplicitSource,
    IIDSource,
    RotationSource,
    empirical_block_norm_growth,
    empirical_small_norm,
    empirical_stationary_direction,
    growth_diagnostics,
    invariant_union_search,
    proximality_heuristic,
    sample_word,
)

import helpers

ROTATION_ALPHABET = Alphabet(
    ["J", "I"], [IntMatrix([[0, -1], [1, 0]]), IntMatrix([[1, 0], [0, 1]])]
)


class TestSources:
    def test_explicit_prefix(self):
        w = Word(standard_alphabet(), (0, 1, 1, 0))
        src = ExplicitSource(w)
        assert sample_word(src, 2).indices == (0, 1)
        assert src.alphabet == standard_alphabet()
        with pytest.raises(ValueError):
            sample_word(src, 5)

    def test_iid_deterministic_per_trial(self):
        src = IIDSource(standard_alphabet(), seed=4)
        a = sample_word(src, 50, trial=0)
        b = sample_word(src, 50, trial=0)
        c = sample_word(src, 50, trial=1)
        assert a.indices == b.indices
        assert a.indices != c.indices

    def test_iid_prefix_stability(self):
        # longer samples of the same trial extend, not reshuffle
        src = IIDSource(standard_alphabet(), seed=4)
        a = sample_word(src, 30, trial=7)
        b = sample_word(src, 60, trial=7)
        assert b.indices[:30] == a.indices

    def test_iid_weights_validation(self):
        with pytest.raises(ValueError):
            IIDSource(standard_alphabet(), weights=(0.5,))
        with pytest.raises(ValueError):
            IIDSource(standard_alphabet(), weights=(0.7, 0.2))
        with pytest.raises(ValueError):
            IIDSource(standard_alphabet(), weights=(-0.5, 1.5))

    def test_iid_letter_frequency(self):
        src = IIDSource(standard_alphabet(), weights=(0.25, 0.75), seed=1)
        n = 20000
        w = sample_word(src, n)
        freq = sum(w.indices) / n
        sigma = math.sqrt(0.25 * 0.75 / n)
        assert abs(freq - 0.75) <= 4 * sigma

    def test_rotation_letter_rule(self):
        src = RotationSource(standard_alphabet(), angle=0.3)
        w = sample_word(src, 4)
        # positions 0.3, 0.6, 0.9, 0.2 against [0, 0.5)
        assert w.indices == (0, 1, 1, 0)

    def test_rotation_validation(self):
        with pytest.raises(ValueError):
            RotationSource(
                Alphabet(["only"], [helpers.L]), angle=0.3
            )
        with pytest.raises(ValueError):
            RotationSource(standard_alphabet(), angle=0.3, interval=(0.5, 0.2))

    def test_sample_validation(self):
        with pytest.raises(ValueError):
            sample_word(IIDSource(standard_alphabet()), 0)


class TestSmallNorm:
    def _src(self):
        return IIDSource(standard_alphabet(), seed=2)

    def test_trivial_eps(self):
        stats = empirical_small_norm(self._src(), 20, 1.0, 50, (1.0, -1.0))
        assert stats.frequency == 1.0
        stats0 = empirical_small_norm(self._src(), 20, 0.0, 50, (1.0, -1.0))
        assert stats0.frequency == 0.0

    def test_monotone_in_eps(self):
        freqs = [
            empirical_small_norm(
                self._src(), 40, eps, 300, (1.0, -1.0), seed=5
            ).frequency
            for eps in (0.5, 0.1, 1e-2, 1e-3)
        ]
        assert all(a >= b for a, b in zip(freqs, freqs[1:]))
        assert freqs[-1] <= 0.05

    def test_wilson_interval_brackets_frequency(self):
        stats = empirical_small_norm(self._src(), 40, 0.05, 200, (1.0, -1.0))
        assert stats.wilson_low <= stats.frequency <= stats.wilson_high
        assert stats.trials == 200

    def test_direction_validation(self):
        with pytest.raises(ValueError):
            empirical_small_norm(self._src(), 10, 0.5, 10, (0.0, 0.0))


class TestBlockGrowth:
    def test_no_violations_at_default_zeta(self):
        src = IIDSource(standard_alphabet(), seed=3)
        stats = empirical_block_norm_growth(src, n=120, r_min=10)
        assert stats.zeta == pytest.approx(((1 + math.sqrt(5)) / 2) ** 2)
        assert stats.violations == 0
        assert stats.min_log_margin >= 0.0
        assert stats.pairs == sum(
            1 for l in range(1, 111) for r in range(10, 121 - l)
        )

    def test_absurd_zeta_violates_everywhere(self):
        src = IIDSource(standard_alphabet(), seed=3)
        stats = empirical_block_norm_growth(src, n=60, r_min=5, zeta=1e9)
        assert stats.violations == stats.pairs
        assert stats.min_log_margin < 0.0

    def test_single_letter_exact(self):
        src = IIDSource(Alphabet(["L"], [helpers.L]), seed=0)
        stats = empirical_block_norm_growth(src, n=30, r_min=3)
        assert stats.violations == 0

    def test_r_min_validation(self):
        src = IIDSource(standard_alphabet())
        with pytest.raises(ValueError):
            empirical_block_norm_growth(src, n=10, r_min=0)


class TestStationaryDirection:
    def test_single_letter_concentrates(self):
        src = IIDSource(Alphabet(["L"], [helpers.L]), seed=0)
        hist = empirical_stationary_direction(src, n=40, trials=64)
        assert int((hist.counts > 0).sum()) <= 2
        assert hist.counts.sum() == 64

    def test_distribution_stabilizes_in_n(self):
        src = IIDSource(standard_alphabet(), seed=6)
        h30 = empirical_stationary_direction(src, n=30, trials=1500)
        h60 = empirical_stationary_direction(src, n=60, trials=1500, seed=1)
        assert h30.tv_distance(h60) < 0.15

    def test_zero_trials(self):
        src = IIDSource(standard_alphabet())
        hist = empirical_stationary_direction(src, n=10, trials=0)
        assert hist.counts.sum() == 0

    def test_dim3_returns_raw_directions(self):
        src = IIDSource(helpers.DIM3_ALPHABET, seed=0)
        hist = empirical_stationary_direction(src, n=12, trials=16)
        assert hist.raw is not None
        assert hist.raw.shape == (16, 3)
        assert np.allclose(np.linalg.norm(hist.raw, axis=1), 1.0, atol=1e-8)

    def test_binning_mismatch(self):
        src = IIDSource(standard_alphabet())
        a = empirical_stationary_direction(src, n=10, trials=4, bins=8)
        b = empirical_stationary_direction(src, n=10, trials=4, bins=16)
        with pytest.raises(ValueError):
            a.tv_distance(b)


class TestSemigroupConditionChecks:
    def test_proximality(self):
        assert proximality_heuristic(standard_alphabet())
        rot_only = Alphabet(["J"], [IntMatrix([[0, -1], [1, 0]])])
        assert not proximality_heuristic(rot_only)

    def test_invariant_union(self):
        assert invariant_union_search(standard_alphabet()) is None
        single = Alphabet(["L"], [helpers.L])
        union = invariant_union_search(single)
        assert union is not None and len(union) <= 2
        rot_only = Alphabet(["J"], [IntMatrix([[0, -1], [1, 0]])])
        pair = invariant_union_search(rot_only)
        assert pair is not None  # the two axes swap

    def test_dim3_skipped(self):
        assert invariant_union_search(helpers.DIM3_ALPHABET) is None


@pytest.fixture(scope="module")
def diag():
    src = IIDSource(standard_alphabet(), seed=0)
    return growth_diagnostics(src, (10, 20, 30, 40), trials=300)


class TestGrowthDiagnostics:
    def test_contraction_statistic_decays(self, diag):
        col = diag.ratio_stat[:, 0]
        assert np.all(np.diff(col) < 0)
        assert float(diag.rho_hat[0]) < 1.0

    def test_condition_flags(self, diag):
        assert diag.flags["proximal_heuristic"] is True
        assert diag.flags["invariant_union"] is None

    def test_last_axis_dominates(self, diag):
        assert np.all(diag.dominant_index_freq[:, 1] == 1.0)

    def test_norm_quantiles_bounded(self, diag):
        # N entries stay O(1) when the dominant direction is simple
        assert diag.norm_quantiles.shape == (4, 3)
        assert float(diag.norm_quantiles[:, 0].max()) < 10.0

    def test_dominance_and_zeta(self, diag):
        assert diag.zeta_hat > 1.0
        assert diag.dominance_freq.shape == (4, len(diag.zeta_grid))
        assert np.all(diag.dominance_freq >= 0.0)
        assert np.all(diag.dominance_freq <= 1.0)

    def test_deterministic(self):
        src = IIDSource(standard_alphabet(), seed=0)
        a = growth_diagnostics(src, (10, 20), trials=40)
        b = growth_diagnostics(src, (10, 20), trials=40)
        assert np.allclose(a.ratio_stat, b.ratio_stat)
        assert a.zeta_hat == b.zeta_hat

    def test_grid_validation(self):
        src = IIDSource(standard_alphabet())
        with pytest.raises(ValueError):
            growth_diagnostics(src, (10,), trials=5)
