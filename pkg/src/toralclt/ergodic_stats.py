"""Ergodic sums along words: exact L2 norms, blocks, variance, coboundaries.

The L2 norm of an ergodic sum of a trigonometric polynomial is a finite
frequency bookkeeping exercise: S_n pushes each support frequency p to
P_l p for l = 1..n, and the squared norm is the sum of |grouped
coefficient|^2 over distinct pushforward images.  The scan is exact
because pushforwards are big-integer vectors and the grouped
coefficients are short sums of the original coefficients.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import streams
from .exact_linalg import Alphabet, IntMatrix, Word, prefix_products, vec_sup_norm
from .test_functions import TrigPoly, evaluate
from .torus_dynamics import DEFAULT_MODULUS, ModularPoint, batch_apply, batch_uniform, orbit


class GapBoundError(AssertionError):
    """The exact gap error exceeded its theoretical bound."""


@dataclass(frozen=True)
class BlockScheme:
    """Gapped block decomposition of [1, n].

    v_n = floor(n^beta) is the block pitch, u_n = floor(n / v_n) the
    number of blocks, and block k (0-based) covers the integers in
    (k v_n, (k+1) v_n - gap], so consecutive blocks are separated by
    exactly `gap` indices.  Indices above u_n v_n are left over.
    """

    n: int
    beta: float
    gap: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if not (0.0 < self.beta < 1.0):
            raise ValueError("beta must lie in (0, 1)")
        if not (0 <= self.gap < self.pitch):
            raise ValueError(f"gap must lie in [0, {self.pitch})")
        if self.block_count > 2.0 * self.n ** (1.0 - self.beta):
            raise ValueError("block count exceeds 2 n^(1-beta); scheme malformed")

    @property
    def pitch(self) -> int:
        # the 1e-9 nudge keeps floor(n^beta) stable when the float pow
        # lands a hair under an exact integer
        return int(self.n**self.beta + 1e-9)

    @property
    def block_count(self) -> int:
        return self.n // self.pitch

    def block_interval(self, k: int) -> tuple:
        """(left, right) with the block owning integers left < l <= right."""
        if not (0 <= k < self.block_count):
            raise IndexError(f"block index {k} outside [0, {self.block_count})")
        left = k * self.pitch
        right = (k + 1) * self.pitch - self.gap
        return left, right

    def block_indices(self, k: int) -> range:
        left, right = self.block_interval(k)
        return range(left + 1, right + 1)

    def covered_indices(self) -> list:
        out = []
        for k in range(self.block_count):
            out.extend(self.block_indices(k))
        return out

    def leftover_indices(self) -> list:
        covered = set(self.covered_indices())
        return [l for l in range(1, self.n + 1) if l not in covered]


def ergodic_sum(word: Word, g, pt: ModularPoint, n: int) -> float:
    """S_n(x) = sum_{l=1}^n g(tau_l ... tau_1 x), evaluated exactly on the lattice."""
    return float(sum(evaluate(g, z) for z in orbit(word, pt, n)))


def _collision_groups(word: Word, g: TrigPoly, indices) -> dict:
    """Grouped coefficients of S over the given index set."""
    indices = sorted(set(int(l) for l in indices))
    if indices and (indices[0] < 1 or indices[-1] > len(word)):
        raise ValueError("indices outside [1, len(word)]")
    support = list(g.signed_items())
    prefix = prefix_products(word, indices[-1] if indices else 0)
    groups: dict = {}
    for l in indices:
        mat = prefix[l]
        for p, c in support:
            key = mat.mul_vec(p)
            groups[key] = groups.get(key, 0j) + c
    return groups


def exact_l2_norm_sq(word: Word, g: TrigPoly, n: int) -> float:
    """||S_n g||_2^2, exact collision scan over pushforward frequencies."""
    if not (1 <= n <= len(word)):
        raise ValueError(f"need 1 <= n <= {len(word)}")
    groups = _collision_groups(word, g, range(1, n + 1))
    return float(sum(abs(c) ** 2 for c in groups.values()))


@dataclass(frozen=True)
class BlockedQuantities:
    scheme: BlockScheme
    block_l2_sq: tuple  # sigma_k^2 per block, exact
    sum_block_l2_sq: float  # a_n
    full_l2_sq: float  # ||S_n||_2^2
    gapped_l2_sq: float  # ||S'_n||_2^2 for the blocked sum
    gap_error: float  # ||S_n - S'_n||_2, exact
    gap_error_bound: float


def blocked_quantities(
    word: Word, g: TrigPoly, scheme: BlockScheme, check_gap_bound: bool = True
) -> BlockedQuantities:
    """Exact per-block L2 norms and the block-vs-full gap error.

    The bound 2 ||g||_inf^2 n^(1-beta) gap^2 covers the inter-block
    gaps; schemes where the blocks do not tile [1, n] can exceed it
    through the leftover tail, in which case the check raises unless
    disabled.  The sup norm of g enters through the coefficient sum,
    an upper bound.
    """
    if len(word) < scheme.n:
        raise ValueError("word shorter than scheme.n")
    sigma = []
    for k in range(scheme.block_count):
        groups = _collision_groups(word, g, scheme.block_indices(k))
        sigma.append(float(sum(abs(c) ** 2 for c in groups.values())))
    full = exact_l2_norm_sq(word, g, scheme.n)
    gapped_groups = _collision_groups(word, g, scheme.covered_indices())
    gapped = float(sum(abs(c) ** 2 for c in gapped_groups.values()))
    leftover = scheme.leftover_indices()
    if leftover:
        err_groups = _collision_groups(word, g, leftover)
        gap_error = math.sqrt(float(sum(abs(c) ** 2 for c in err_groups.values())))
    else:
        gap_error = 0.0
    sup_sq = g.coeff_abs_sum() ** 2
    bound = 2.0 * sup_sq * scheme.n ** (1.0 - scheme.beta) * scheme.gap**2
    if check_gap_bound and gap_error**2 > bound:
        raise GapBoundError(
            f"gap error^2 = {gap_error**2:.6g} exceeds bound {bound:.6g}; "
            "the scheme leaves a long uncovered tail"
        )
    return BlockedQuantities(
        scheme=scheme,
        block_l2_sq=tuple(sigma),
        sum_block_l2_sq=float(sum(sigma)),
        full_l2_sq=full,
        gapped_l2_sq=gapped,
        gap_error=gap_error,
        gap_error_bound=bound,
    )


# -- variance of the quenched sums -------------------------------------


def _word_correlation(prefix: IntMatrix, f: TrigPoly) -> float:
    """integral of f(x) f(tau_r ... tau_1 x) dx for the given prefix product."""
    total = 0j
    for p, c in f.signed_items():
        image = prefix.mul_vec(p)
        total += c * f.coeff(image).conjugate()
    return total.real


def _escapes_forever(image, alphabet: Alphabet, max_norm: int) -> bool:
    # for a positive alphabet, a same-sign vector beyond the support radius
    # can never come back: entries >= 1 keep the sign and the sup norm
    if not alphabet.positive:
        return False
    if all(x >= 0 for x in image) or all(x <= 0 for x in image):
        return vec_sup_norm(image) > max_norm
    return False


@dataclass(frozen=True)
class VarianceSeriesResult:
    sigma_sq: float
    per_shift: tuple  # E integral f . f(tau^r .) for r = 1..r_max
    stderr: float | None
    tail_zero_from: int | None  # all shifts >= this are exactly zero
    mode: str  # "exhaustive" or "monte_carlo"


def variance_series(
    alphabet: Alphabet,
    weights,
    f: TrigPoly,
    r_max: int,
    word_samples: int = 2000,
    seed: int = 0,
    exhaustive: bool | None = None,
) -> VarianceSeriesResult:
    """sigma^2 = ||f||_2^2 + 2 sum_r E_omega integral f . f o tau^(r).

    Each summand is exact for a fixed word (frequency collision with the
    support of f); the expectation over words is exhaustive when the
    tree |alphabet|^r_max is small, Monte Carlo otherwise.  weights
    None means uniform.
    """
    if weights is None:
        weights = [1.0] * len(alphabet)
    weights = [float(w) for w in weights]
    if len(weights) != len(alphabet) or any(w < 0 for w in weights):
        raise ValueError("need one nonnegative weight per letter")
    total_w = sum(weights)
    if total_w <= 0:
        raise ValueError("weights must not all vanish")
    weights = [w / total_w for w in weights]
    if r_max < 0:
        raise ValueError("r_max must be nonnegative")
    if exhaustive is None:
        exhaustive = len(alphabet) ** r_max <= 20000

    base = f.l2_norm_sq()
    support = list(f.signed_items())
    max_norm = max((vec_sup_norm(p) for p, _ in support), default=0)

    if exhaustive:
        per_shift = [0.0] * (r_max + 1)
        prune_depths = []
        state = {"all_pruned": True}

        def walk(prefix: IntMatrix, prob: float, depth: int):
            if depth > 0:
                per_shift[depth] += prob * _word_correlation(prefix, f)
                if all(
                    _escapes_forever(prefix.mul_vec(p), alphabet, max_norm)
                    for p, _ in support
                ):
                    # every term at this depth and beyond vanishes on this branch
                    prune_depths.append(depth)
                    return
            if depth == r_max:
                state["all_pruned"] = False
                return
            for m, w in zip(alphabet.matrices, weights):
                if w > 0:
                    walk(prefix * m, prob * w, depth + 1)

        walk(IntMatrix.identity(alphabet.dim), 1.0, 0)
        shifts = tuple(per_shift[1:])
        tail_zero_from = None
        if state["all_pruned"] and prune_depths:
            tail_zero_from = max(prune_depths)
        sigma_sq = base + 2.0 * float(sum(shifts))
        return VarianceSeriesResult(sigma_sq, shifts, None, tail_zero_from, "exhaustive")

    sums = np.zeros((word_samples, r_max))
    cdf = np.cumsum(weights)
    for i in range(word_samples):
        rng = streams.substream(seed, 0x5E, i)
        draws = np.searchsorted(cdf, rng.random(r_max), side="right")
        prefix = IntMatrix.identity(alphabet.dim)
        for r in range(1, r_max + 1):
            prefix = prefix * alphabet[min(int(draws[r - 1]), len(alphabet) - 1)]
            sums[i, r - 1] = _word_correlation(prefix, f)
    per_shift = tuple(float(x) for x in sums.mean(axis=0))
    totals = sums.sum(axis=1)
    stderr = 2.0 * float(np.std(totals, ddof=1) / math.sqrt(word_samples))
    sigma_sq = base + 2.0 * float(totals.mean())
    return VarianceSeriesResult(sigma_sq, per_shift, stderr, None, "monte_carlo")


@dataclass(frozen=True)
class VarianceCurve:
    n_grid: tuple
    values: tuple  # ||S_n||_2^2 / n per grid point
    stderrs: tuple | None
    mode: str  # "exact" or "monte_carlo"


def quenched_variance_curve(
    word: Word,
    f,
    n_grid,
    samples: int = 20000,
    seed: int = 0,
    q: int = DEFAULT_MODULUS,
) -> VarianceCurve:
    """||S_n f||_2^2 / n along a grid of n, for one fixed word.

    Exact (incremental collision scan) for TrigPoly, Monte Carlo with
    standard errors for black-box observables.
    """
    n_grid = sorted(set(int(n) for n in n_grid))
    if not n_grid or n_grid[0] < 1 or n_grid[-1] > len(word):
        raise ValueError("grid must lie in [1, len(word)]")
    top = n_grid[-1]
    if isinstance(f, TrigPoly):
        support = list(f.signed_items())
        groups: dict = {}
        total = 0.0
        values = []
        grid_iter = iter(n_grid)
        next_n = next(grid_iter)
        mat = IntMatrix.identity(word.alphabet.dim)
        for l in range(1, top + 1):
            mat = mat * word.letter(l)
            for p, c in support:
                key = mat.mul_vec(p)
                old = groups.get(key, 0j)
                new = old + c
                groups[key] = new
                total += abs(new) ** 2 - abs(old) ** 2
            if l == next_n:
                values.append(total / l)
                next_n = next(grid_iter, None)
        return VarianceCurve(tuple(n_grid), tuple(values), None, "exact")

    rng = streams.substream(seed, 0xC0)
    d = word.alphabet.dim
    coords = batch_uniform(rng, q, d, samples)
    acc = np.zeros(samples)
    values = []
    stderrs = []
    grid_iter = iter(n_grid)
    next_n = next(grid_iter)
    for l in range(1, top + 1):
        coords = batch_apply(word.letter(l), coords, q)
        acc += np.array(
            [evaluate(f, ModularPoint(q, tuple(int(x) for x in row))) for row in coords]
        )
        if l == next_n:
            sq = acc**2
            values.append(float(sq.mean() / l))
            stderrs.append(float(sq.std(ddof=1) / math.sqrt(samples) / l))
            next_n = next(grid_iter, None)
    return VarianceCurve(tuple(n_grid), tuple(values), tuple(stderrs), "monte_carlo")


# -- coboundary detection ----------------------------------------------


@dataclass(frozen=True)
class CoboundaryReport:
    verdict: str  # TELESCOPE_FOUND | NONZERO_VARIANCE_CERTIFIED | UNDECIDED
    transfer: TrigPoly | None  # h with f = h o tau - h when found
    justification: str
    horizon: int
    trajectory: tuple | None = None  # word mode: partial sums per step


TELESCOPE_FOUND = "TELESCOPE_FOUND"
NONZERO_VARIANCE_CERTIFIED = "NONZERO_VARIANCE_CERTIFIED"
UNDECIDED = "UNDECIDED"


def _cfrac(z: complex) -> tuple:
    return (Fraction(z.real), Fraction(z.imag))


_CZERO = (Fraction(0), Fraction(0))


def _cadd(a, b):
    return (a[0] + b[0], a[1] + b[1])


def _cneg(a):
    return (-a[0], -a[1])


def _walk_orbit(mat: IntMatrix, inv: IntMatrix, start, support_norms: int,
                horizon: int, alphabet_positive: bool):
    """Walk A^k start for k in [-horizon, horizon].

    Returns (positions dict offset -> freq, escaped_back, escaped_fwd,
    cycle_length or None).  Escape is certified only when the walk ends
    on a vector that provably never returns below the support radius.
    """
    fwd = [start]
    seen = {start: 0}
    cycle = None
    escaped_fwd = False
    v = start
    for _ in range(horizon):
        v = mat.mul_vec(v)
        if v in seen:
            cycle = len(fwd) - seen[v]
            break
        if _escape_certified(v, support_norms, alphabet_positive, forward=True):
            escaped_fwd = True
            fwd.append(v)
            break
        seen[v] = len(fwd)
        fwd.append(v)
    back = []
    escaped_back = False
    if cycle is None:
        v = start
        for _ in range(horizon):
            v = inv.mul_vec(v)
            if v in seen:
                cycle = -(len(back) + 1)  # joined the forward ray: treat as cycle
                break
            if _escape_certified(v, support_norms, alphabet_positive, forward=False):
                escaped_back = True
                back.append(v)
                break
            seen[v] = -(len(back) + 1)
            back.append(v)
    return fwd, back, escaped_back, escaped_fwd, cycle


def _escape_certified(v, support_norm: int, positive: bool, forward: bool) -> bool:
    if not positive or vec_sup_norm(v) <= support_norm:
        return False
    if forward:
        # positive matrices preserve the closed cones and entries >= 1
        # keep sup norms nondecreasing on them
        return all(x >= 0 for x in v) or all(x <= 0 for x in v)
    # the inverse of a positive unimodular 2x2 matrix preserves the open
    # mixed-sign cone and grows norms there; higher dimensions walk on
    if len(v) != 2:
        return False
    x, y = v
    return (x > 0 > y) or (x < 0 < y)


def coboundary_detect(source, f: TrigPoly, horizon: int = 200,
                      condition_asserted: bool = False) -> CoboundaryReport:
    """Decide whether f telescopes as h o tau - h.

    With a single letter (IntMatrix source) the equation decouples along
    A-orbits of frequencies: cumulative sums of f_hat along each orbit
    build h, and they must die out for h to have finite support.  The
    arithmetic runs over exact rationals, so a found telescope verifies
    exactly.  Certifying nonzero variance from a failed telescope uses
    the positivity of the letter (or an explicit condition assertion).

    With a Word source the visit counts of pushforwards within the
    horizon give a growing lower-bound trajectory; the verdict stays
    UNDECIDED but the trajectory is reported.
    """
    if horizon < 1:
        raise ValueError("horizon must be positive")
    if isinstance(source, Word):
        return _word_trajectory(source, f, horizon)
    if isinstance(source, Alphabet):
        if len(source) != 1:
            raise ValueError("alphabet source must have a single letter")
        source = source[0]
    if not isinstance(source, IntMatrix):
        raise TypeError("source must be an IntMatrix, one-letter Alphabet, or Word")
    mat = source
    if mat.det() not in (1, -1):
        raise ValueError("letter must be unimodular")
    if mat.dim != f.dim:
        raise ValueError("dimension mismatch")
    if f.is_zero():
        return CoboundaryReport(
            TELESCOPE_FOUND, TrigPoly(f.dim, {}), "f is zero; h = 0", horizon
        )
    if not f.is_zero_mean():
        return CoboundaryReport(
            NONZERO_VARIANCE_CERTIFIED,
            None,
            "nonzero mean: a telescope must have zero mean",
            horizon,
        )
    certificates_ok = mat.is_positive() or condition_asserted

    inv = mat.inverse()
    coeffs = {p: _cfrac(c) for p, c in f.signed_items()}
    support_norm = max(vec_sup_norm(p) for p in coeffs)
    pending = set(coeffs)
    h_terms: dict = {}
    conclusive = True
    while pending:
        start = next(iter(pending))
        fwd, back, esc_back, esc_fwd, cycle = _walk_orbit(
            mat, inv, start, support_norm, horizon, mat.is_positive()
        )
        if cycle is not None:
            chain = list(reversed(back)) + fwd
            orbit_freqs = set(chain)
            pending -= orbit_freqs
            csum = _CZERO
            for qf in chain:
                csum = _cadd(csum, coeffs.get(qf, _CZERO))
            if csum != _CZERO:
                return _no_telescope(f, coeffs, horizon, certificates_ok,
                                     "cycle sum of coefficients is nonzero")
            running = _CZERO
            for qf in chain:
                running = _cadd(running, coeffs.get(qf, _CZERO))
                if running != _CZERO:
                    h_terms[qf] = _cneg(running)
            continue
        chain = list(reversed(back)) + fwd
        pending -= set(chain)
        if not (esc_back and esc_fwd):
            conclusive = False
        running = _CZERO
        tail: dict = {}
        for qf in chain:
            running = _cadd(running, coeffs.get(qf, _CZERO))
            if running != _CZERO:
                tail[qf] = _cneg(running)
        if running != _CZERO:
            # the obstruction is sound only when the chain provably holds
            # every support element of its orbit, i.e. both ends escaped
            if esc_back and esc_fwd:
                return _no_telescope(f, coeffs, horizon, certificates_ok,
                                     "orbit sums of coefficients do not return to zero")
            return CoboundaryReport(
                UNDECIDED, None,
                f"orbit of {start} left the horizon of {horizon} steps unresolved",
                horizon,
            )
        h_terms.update(tail)
    if not conclusive:
        return CoboundaryReport(
            UNDECIDED, None,
            "telescope candidate found but orbit escape not certified within horizon",
            horizon,
        )
    # exact verification: coefficients of h o tau - h must reproduce f
    diff: dict = {}
    for qf, hv in h_terms.items():
        image = mat.mul_vec(qf)
        diff[image] = _cadd(diff.get(image, _CZERO), hv)
        diff[qf] = _cadd(diff.get(qf, _CZERO), _cneg(hv))
    for qf, cv in coeffs.items():
        diff[qf] = _cadd(diff.get(qf, _CZERO), _cneg(cv))
    if any(v != _CZERO for v in diff.values()):
        raise AssertionError("internal error: telescope failed exact verification")
    h = TrigPoly(
        f.dim,
        {qf: complex(float(re), float(im)) for qf, (re, im) in h_terms.items()},
    )
    return CoboundaryReport(
        TELESCOPE_FOUND, h, "orbit cumulative sums vanish; verified exactly", horizon
    )


def _no_telescope(f: TrigPoly, coeffs, horizon: int, certificates_ok: bool,
                  obstruction: str) -> CoboundaryReport:
    nonneg = all(im == 0 and re >= 0 for re, im in coeffs.values())
    if nonneg and not f.is_zero():
        return CoboundaryReport(
            NONZERO_VARIANCE_CERTIFIED, None,
            "no telescope ({}); all Fourier coefficients are nonnegative and f != 0"
            .format(obstruction),
            horizon,
        )
    if certificates_ok:
        return CoboundaryReport(
            NONZERO_VARIANCE_CERTIFIED, None,
            "no telescope ({}); a coboundary of a trigonometric polynomial "
            "would itself be a trigonometric polynomial".format(obstruction),
            horizon,
        )
    return CoboundaryReport(
        UNDECIDED, None,
        "no telescope ({}), but certification requires a positive letter "
        "or condition_asserted=True".format(obstruction),
        horizon,
    )


def _word_trajectory(word: Word, f: TrigPoly, horizon: int) -> CoboundaryReport:
    steps = min(horizon, len(word))
    support = list(f.signed_items())
    counts: dict = {}
    trajectory = []
    total = 0.0
    mat = IntMatrix.identity(word.alphabet.dim)
    for k in range(0, steps + 1):
        if k > 0:
            mat = mat * word.letter(k)
        for p, c in support:
            key = mat.mul_vec(p)
            old = counts.get(key, 0j)
            new = old + c
            counts[key] = new
            total += abs(new) ** 2 - abs(old) ** 2
        trajectory.append(total)
    return CoboundaryReport(
        UNDECIDED,
        None,
        "word-horizon scan: partial sums of squared visit-weighted "
        "coefficients; growth is evidence against a coboundary",
        steps,
        trajectory=tuple(trajectory),
    )
