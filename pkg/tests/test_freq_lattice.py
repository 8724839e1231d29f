import numpy as np
import pytest

from toralclt.exact_linalg import Word, standard_alphabet
from toralclt.freq_lattice import (
    HOLDS_CERTIFIED,
    HOLDS_EXHAUSTIVE,
    VIOLATED,
    BudgetExceeded,
    SeparationInstance,
    SeparationReport,
    check_separation,
    enumerate_freqs,
    pushforward,
    verify_witness,
    zero_integral_check,
)
from toralclt.test_functions import TrigPoly

import helpers
import oracles


def _word(rng, n, alphabet=None):
    return helpers.random_word(rng, alphabet or standard_alphabet(), n)


class TestPushforward:
    def test_examples(self):
        w = Word(standard_alphabet(), (0, 1, 0))
        assert pushforward(w, 0, (1, 0)) == (1, 0)
        assert pushforward(w, 1, (1, 0)) == (2, 1)
        assert pushforward(w, 2, (1, 0)) == (3, 2)

    def test_matches_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            w = _word(rng, 8, helpers.SHEAR_ALPHABET)
            letters = helpers.as_plain_letters(w)
            prefix = oracles.prefix_list(letters)
            p = tuple(int(x) for x in rng.integers(-3, 4, 2))
            ell = int(rng.integers(0, 9))
            assert pushforward(w, ell, p) == oracles.mat_vec(prefix[ell], p)

    def test_bounds(self):
        w = Word(standard_alphabet(), (0,))
        with pytest.raises(ValueError):
            pushforward(w, 2, (1, 0))


def test_enumerate_freqs():
    assert len(enumerate_freqs(2, 1)) == 9
    assert len(enumerate_freqs(3, 2)) == 125
    assert (0, 0) in enumerate_freqs(2, 0)


class TestStructuralCertificates:
    def test_single_block_cap(self):
        w = Word(standard_alphabet(), (0, 1))
        rep = check_separation(SeparationInstance(w, 1, 1, 1))
        assert rep.verdict == HOLDS_CERTIFIED

    def test_gap_exceeds_word(self):
        w = Word(standard_alphabet(), (0, 1))
        rep = check_separation(SeparationInstance(w, 1, 2, 3))
        assert rep.verdict == HOLDS_CERTIFIED

    def test_zero_freq_bound(self):
        w = Word(standard_alphabet(), (0, 1, 0, 1))
        rep = check_separation(SeparationInstance(w, 0, 1, 3))
        assert rep.verdict == HOLDS_CERTIFIED

    def test_instance_validation(self):
        w = Word(standard_alphabet(), (0,))
        with pytest.raises(ValueError):
            SeparationInstance(w, -1, 1, 2)
        with pytest.raises(ValueError):
            SeparationInstance(w, 1, 0, 2)
        with pytest.raises(ValueError):
            SeparationInstance(w, 1, 1, 0)


class TestAgainstBruteOracle:
    def _check_one(self, rng, alphabet, n, bound, gap, s_max, force=False):
        w = _word(rng, n, alphabet)
        inst = SeparationInstance(
            w, bound, gap, s_max, force_primed_zero=force
        )
        rep = check_separation(inst)
        brute = oracles.brute_separation_violated(
            helpers.as_plain_letters(w), bound, gap, s_max, force=force
        )
        assert (rep.verdict == VIOLATED) == brute, (
            f"disagreement on word {w.labels()} bound={bound} gap={gap} "
            f"s_max={s_max} force={force}: package={rep.verdict}, brute={brute}"
        )
        return rep

    def test_small_standard_instances(self):
        # tight gaps at small n cancel easily; wide gaps push the later
        # blocks out of reach, so both verdicts must show up
        rng = np.random.default_rng(10)
        verdicts = set()
        for _ in range(25):
            gap = int(rng.integers(1, 5))
            n = int(rng.integers(gap + 1, 9))
            rep = self._check_one(
                rng,
                standard_alphabet(),
                n,
                bound=1,
                gap=gap,
                s_max=int(rng.integers(2, 4)),
            )
            verdicts.add(rep.verdict)
        assert HOLDS_EXHAUSTIVE in verdicts
        assert VIOLATED in verdicts

    def test_small_shear_instances_find_violations(self):
        # shears have slow growth, so cancellations are common
        rng = np.random.default_rng(11)
        verdicts = set()
        for _ in range(25):
            n = int(rng.integers(2, 7))
            rep = self._check_one(
                rng,
                helpers.SHEAR_ALPHABET,
                n,
                bound=1,
                gap=1,
                s_max=int(rng.integers(2, 4)),
            )
            verdicts.add(rep.verdict)
        assert VIOLATED in verdicts

    def test_forced_mode_against_oracle(self):
        rng = np.random.default_rng(12)
        for _ in range(15):
            n = int(rng.integers(2, 8))
            self._check_one(
                rng,
                helpers.SHEAR_ALPHABET,
                n,
                bound=1,
                gap=int(rng.integers(1, 3)),
                s_max=3,
                force=True,
            )

    def test_wider_bound_against_oracle(self):
        rng = np.random.default_rng(13)
        for _ in range(6):
            self._check_one(
                rng, standard_alphabet(), int(rng.integers(2, 6)), 2, 1, 2
            )


class TestWitnesses:
    def _violated_report(self) -> SeparationReport:
        # single shear: pushforwards along (1,1) direction repeat modulo
        # nothing, so cancellations at gap 1 are easy to realize
        rng = np.random.default_rng(2)
        for _ in range(50):
            w = _word(rng, 6, helpers.SHEAR_ALPHABET)
            rep = check_separation(SeparationInstance(w, 1, 1, 3))
            if rep.verdict == VIOLATED:
                return rep
        raise AssertionError("expected at least one violation among shear words")

    def test_witness_verifies(self):
        rep = self._violated_report()
        ok, reason = verify_witness(rep.instance, rep.witness)
        assert ok, reason

    def test_witness_blocks_ordered_and_bounded(self):
        rep = self._violated_report()
        lps = [b.l_prime for b in rep.witness]
        assert lps == sorted(lps)
        assert len(rep.witness) <= rep.instance.max_blocks

    def test_tampered_witness_rejected(self):
        rep = self._violated_report()
        blocks = list(rep.witness)
        bad = blocks[:-1] + [
            type(blocks[-1])(
                l=blocks[-1].l,
                l_prime=blocks[-1].l_prime,
                p=tuple(x + 1 for x in blocks[-1].p),
                p_prime=blocks[-1].p_prime,
            )
        ]
        ok, _ = verify_witness(rep.instance, tuple(bad))
        assert not ok

    def test_budget_exceeded(self):
        rng = np.random.default_rng(3)
        w = _word(rng, 30)
        with pytest.raises(BudgetExceeded):
            check_separation(SeparationInstance(w, 3, 1, 3), budget=1000)


class TestZeroIntegral:
    def test_collision_free_gapped_product(self):
        rng = np.random.default_rng(4)
        w = helpers.standard_word(rng, 12)
        g = TrigPoly.cosine((1, 0))
        res = zero_integral_check(w, g, (2, 7, 12), gap=5)
        assert res.certified_zero
        assert res.value == 0

    def test_engineered_collision_has_value(self):
        # pick g with support {p, Lp}: the product over positions (1, 2)
        # recouples because L(-Lp) + L(Lp) cannot vanish, but
        # L(-(Lp)) = -(L^2 p) cancels L^2 p at position 2
        w = Word(standard_alphabet(), (0, 0))
        g = TrigPoly(2, {(1, 0): 0.5, (2, 1): 0.5})
        res = zero_integral_check(w, g, (1, 2), gap=1)
        assert res.verdict == "VALUE"
        assert abs(res.value) > 0.2

    def test_single_position_zero_mean(self):
        w = Word(standard_alphabet(), (0,))
        res = zero_integral_check(w, TrigPoly.cosine((1, 0)), (1,), gap=1)
        assert res.certified_zero

    def test_gap_argument_validated(self):
        w = Word(standard_alphabet(), (0, 1, 0))
        with pytest.raises(ValueError):
            zero_integral_check(w, TrigPoly.cosine((1, 0)), (1, 2), gap=2)

    def test_budget(self):
        rng = np.random.default_rng(5)
        w = helpers.standard_word(rng, 20)
        g = helpers.random_trig_poly(rng, 2, 6, allow_const=True)
        with pytest.raises(BudgetExceeded):
            zero_integral_check(w, g, tuple(range(1, 21)), gap=1, budget=10)
