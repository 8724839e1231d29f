"""Word sources and empirical diagnostics for random matrix products.

Sources produce words three ways: i.i.d. letters from a weighted
alphabet, an explicit word, or a circle rotation (letter chosen by
whether omega0 + k*angle mod 1 falls in an interval).  The diagnostics
measure finite-n versions of the standard growth estimates: decay of
Iwasawa diagonal ratios, boundedness of the unipotent factor,
dominance of the last diagonal entry, small-norm probabilities along a
fixed direction, block norm growth, and the stationary behaviour of
the orthogonal frame.  Everything is Monte Carlo with standard errors
or Wilson intervals; nothing here asserts an asymptotic claim.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sstats

from . import streams
from .exact_linalg import Alphabet, IntMatrix, Word, iwasawa, product, sup_norm

_SAMPLE_TAG = 0x57


@dataclass(frozen=True)
class IIDSource:
    alphabet: Alphabet
    weights: tuple | None = None
    seed: int = 0

    def __post_init__(self):
        if self.weights is not None:
            w = tuple(float(x) for x in self.weights)
            if len(w) != len(self.alphabet):
                raise ValueError("one weight per letter")
            if any(x <= 0 for x in w) or abs(sum(w) - 1.0) > 1e-12:
                raise ValueError("weights must be positive and sum to 1")
            object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class ExplicitSource:
    word: Word

    @property
    def alphabet(self) -> Alphabet:
        return self.word.alphabet


@dataclass(frozen=True)
class RotationSource:
    """Letter k is the first letter iff omega0 + k*angle mod 1 lies in
    [interval[0], interval[1]).  Deterministic; no seed."""

    alphabet: Alphabet
    angle: float
    interval: tuple = (0.0, 0.5)
    omega0: float = 0.0

    def __post_init__(self):
        if len(self.alphabet) != 2:
            raise ValueError("rotation source needs exactly two letters")
        a, b = self.interval
        if not (0.0 <= a < b <= 1.0):
            raise ValueError("interval must satisfy 0 <= a < b <= 1")


WordSource = IIDSource | ExplicitSource | RotationSource


def sample_word(src: WordSource, n: int, trial: int = 0) -> Word:
    """Word of length n from the source; deterministic given (src, n, trial)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if isinstance(src, ExplicitSource):
        if n > len(src.word):
            raise ValueError(f"explicit word has only {len(src.word)} letters")
        return Word(src.alphabet, src.word.indices[:n])
    if isinstance(src, RotationSource):
        a, b = src.interval
        idx = []
        for k in range(1, n + 1):
            pos = (src.omega0 + k * src.angle) % 1.0
            idx.append(0 if a <= pos < b else 1)
        return Word(src.alphabet, tuple(idx))
    rng = streams.substream(src.seed, _SAMPLE_TAG, trial)
    m = len(src.alphabet)
    if src.weights is None:
        idx = rng.integers(0, m, size=n)
    else:
        cdf = np.cumsum(src.weights)
        cdf[-1] = 1.0
        idx = np.searchsorted(cdf, rng.random(n), side="right")
        idx = np.minimum(idx, m - 1)
    return Word(src.alphabet, tuple(int(i) for i in idx))


def _wilson(successes: int, trials: int, z: float = 3.0) -> tuple:
    if trials == 0:
        return 0.0, 1.0
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials**2)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def _log_abs_dot(row, x) -> float:
    # log |sum_j row_j x_j| for big-integer rows and float x, scale-safe
    top = max(abs(a).bit_length() for a in row)
    shift = max(0, top - 500)
    s = math.fsum(float(a >> shift if a >= 0 else -((-a) >> shift)) * xi
                  for a, xi in zip(row, x))
    if s == 0.0:
        return -math.inf
    return math.log(abs(s)) + shift * math.log(2.0)


@dataclass(frozen=True)
class SmallNormStats:
    frequency: float
    wilson_low: float
    wilson_high: float
    trials: int
    eps: float
    n: int
    direction: tuple


def empirical_small_norm(
    src: WordSource, n: int, eps: float, trials: int, direction,
    seed: int = 0, z: float = 3.0,
) -> SmallNormStats:
    """Fraction of words with ||P x|| <= eps ||P|| ||x|| along a fixed x.

    Sup norms throughout; the comparison runs in the log domain so word
    lengths are not limited by float range.  eps >= 1 always holds
    (induced-norm inequality) and eps = 0 never does (P is invertible),
    so both ends short-circuit exactly.
    """
    x = tuple(float(v) for v in direction)
    nx = max(abs(v) for v in x)
    if nx == 0:
        raise ValueError("direction must be nonzero")
    x = tuple(v / nx for v in x)
    if eps >= 1.0:
        return SmallNormStats(1.0, *_wilson(trials, trials, z), trials, eps, n, x)
    if eps <= 0.0:
        return SmallNormStats(0.0, *_wilson(0, trials, z), trials, eps, n, x)
    log_eps = math.log(eps)
    hits = 0
    for t in range(trials):
        word = sample_word(src, n, trial=t + seed * 0x10000)
        p = product(word, 1, n)
        log_norm = math.log(sup_norm(p))
        log_img = max(_log_abs_dot(row, x) for row in p.rows)
        if log_img <= log_eps + log_norm:
            hits += 1
    lo, hi = _wilson(hits, trials, z)
    return SmallNormStats(hits / trials, lo, hi, trials, eps, n, x)


@dataclass(frozen=True)
class BlockGrowthStats:
    violations: int
    pairs: int
    zeta: float
    min_log_margin: float  # min over pairs of log||block|| - threshold
    n: int
    r_min: int


def _min_letter_growth(alphabet: Alphabet) -> float:
    # smallest single-letter dominant eigenvalue modulus
    vals = []
    for m in alphabet.matrices:
        ev = np.linalg.eigvals(np.array(m.rows, dtype=float))
        vals.append(float(np.max(np.abs(ev))))
    return min(vals)


def empirical_block_norm_growth(
    src: WordSource, n: int, r_min: int, zeta: float | None = None,
    trial: int = 0,
) -> BlockGrowthStats:
    """Count block-norm pairs violating log||A_l..A_{l+r}|| >= (r(d-1)/d) log zeta.

    zeta defaults to the smallest single-letter dominant eigenvalue.
    Exact big-integer norms; the scan covers all l >= 1, r >= r_min with
    l + r <= n, so it costs O(n^2) matrix products.
    """
    if r_min < 1:
        raise ValueError("r_min must be at least 1")
    word = sample_word(src, n, trial=trial)
    d = word.alphabet.dim
    if zeta is None:
        zeta = _min_letter_growth(word.alphabet)
    log_zeta = math.log(zeta)
    scale = (d - 1) / d
    violations = 0
    pairs = 0
    min_margin = math.inf
    for l in range(1, n - r_min + 1):
        m = word.letter(l)
        for end in range(l + 1, n + 1):
            m = m * word.letter(end)
            r = end - l
            if r < r_min:
                continue
            pairs += 1
            margin = math.log(sup_norm(m)) - scale * r * log_zeta
            if margin < min_margin:
                min_margin = margin
            if margin < 0.0:
                violations += 1
    return BlockGrowthStats(violations, pairs, zeta, min_margin, n, r_min)


@dataclass(frozen=True)
class DirectionHistogram:
    counts: np.ndarray  # (bins,) for d=2
    bin_edges: np.ndarray
    n: int
    trials: int
    raw: np.ndarray | None = None  # (trials, d) unit directions when d > 2

    def tv_distance(self, other: "DirectionHistogram") -> float:
        if self.counts.shape != other.counts.shape:
            raise ValueError("histograms must share binning")
        a = self.counts / max(1, self.counts.sum())
        b = other.counts / max(1, other.counts.sum())
        return 0.5 * float(np.abs(a - b).sum())


def empirical_stationary_direction(
    src: WordSource, n: int, trials: int, bins: int = 64, seed: int = 0,
) -> DirectionHistogram:
    """Histogram of the frame direction K^t e_d over trial words.

    For d = 2 the direction is binned as an angle in [0, pi); higher
    dimensions get the raw unit vectors (sign-canonicalized) instead.
    """
    d = src.alphabet.dim
    edges = np.linspace(0.0, math.pi, bins + 1)
    if trials == 0:
        return DirectionHistogram(np.zeros(bins, dtype=int), edges, n, 0)
    dirs = np.empty((trials, d))
    for t in range(trials):
        word = sample_word(src, n, trial=t + seed * 0x10000)
        k = iwasawa(product(word, 1, n)).k_factor
        v = k[d - 1]  # last row of K is K^t e_d
        j = np.flatnonzero(np.abs(v) > 1e-12)
        if v[j[0]] < 0:
            v = -v
        dirs[t] = v
    if d != 2:
        counts = np.zeros(bins, dtype=int)
        return DirectionHistogram(counts, edges, n, trials, raw=dirs)
    angles = np.mod(np.arctan2(dirs[:, 1], dirs[:, 0]), math.pi)
    counts, _ = np.histogram(angles, bins=edges)
    return DirectionHistogram(counts, edges, n, trials)


@dataclass(frozen=True)
class GrowthDiagnostics:
    n_grid: tuple
    delta: float
    trials: int
    seed: int
    ratio_stat: np.ndarray  # (len(n_grid), d-1) mean exp(delta * log(a_i/a_{i+1}))
    ratio_stat_stderr: np.ndarray
    rho_hat: np.ndarray  # (d-1,) fitted decay rate per ratio
    rho_pvalue: np.ndarray
    norm_quantiles: np.ndarray  # (len(n_grid), 3): median, 0.9, max of ||N||
    zeta_grid: tuple
    dominance_freq: np.ndarray  # (len(n_grid), len(zeta_grid))
    dominant_index_freq: np.ndarray  # (len(n_grid), d)
    zeta_hat: float
    xi0_hat: float | None
    flags: dict = field(default_factory=dict, compare=False)


def proximality_heuristic(alphabet: Alphabet, depth: int = 4) -> bool:
    """True iff some product of length <= depth has a simple dominant
    eigenvalue (trace^2 > 4 det, exact, for d = 2; spectral-gap test
    otherwise).  Sufficient evidence only."""
    for length in range(1, depth + 1):
        for combo in itertools.product(alphabet.matrices, repeat=length):
            m = combo[0]
            for factor in combo[1:]:
                m = m * factor
            if alphabet.dim == 2:
                tr = m.rows[0][0] + m.rows[1][1]
                if tr * tr > 4 * m.det():
                    return True
            else:
                ev = np.sort(np.abs(np.linalg.eigvals(m.as_array())))
                if ev[-1] > ev[-2] * (1.0 + 1e-6):
                    return True
    return False


def _eigenlines(m: IntMatrix) -> list:
    ev, vecs = np.linalg.eig(np.array(m.rows, dtype=float))
    out = []
    for i in range(len(ev)):
        if abs(ev[i].imag) < 1e-9:
            v = vecs[:, i].real
            out.append(v / np.linalg.norm(v))
    return out


def _cross2(v, u) -> float:
    return float(v[0] * u[1] - v[1] * u[0])


def invariant_union_search(alphabet: Alphabet, max_lines: int = 3):
    """Bounded search (d = 2) for a union of <= max_lines lines mapped to
    itself by every letter.  Returns the union as direction vectors, or
    None when no candidate union closes up.  Candidate lines come from
    eigendirections of products up to length 3; absence of a hit is
    evidence, not proof, of total irreducibility."""
    if alphabet.dim != 2:
        return None
    cands = []
    for length in range(1, 4):
        for combo in itertools.product(alphabet.matrices, repeat=length):
            m = combo[0]
            for factor in combo[1:]:
                m = m * factor
            for v in _eigenlines(m):
                if v[0] < 0 or (v[0] == 0 and v[1] < 0):
                    v = -v
                if not any(abs(_cross2(v, u)) < 1e-9 for u in cands):
                    cands.append(v)
    mats = [np.array(m.rows, dtype=float) for m in alphabet.matrices]

    def closes(union) -> bool:
        for a in mats:
            for v in union:
                img = a @ v
                if not any(abs(_cross2(img, u)) < 1e-9 * np.linalg.norm(img)
                           for u in union):
                    return False
        return True

    for size in range(1, max_lines + 1):
        for union in itertools.combinations(cands, size):
            if closes(union):
                return tuple(tuple(float(x) for x in v) for v in union)
    return None


def growth_diagnostics(
    src: WordSource,
    n_grid,
    trials: int,
    delta: float = 0.1,
    seed: int = 0,
    zeta_grid=None,
    check_conditions: bool = True,
) -> GrowthDiagnostics:
    """Monte Carlo growth statistics of the Iwasawa factors over n_grid.

    Per trial word the product is decomposed as N D K; recorded are the
    contraction statistic exp(delta*(log a_i - log a_{i+1})) (the last
    diagonal entry dominates, so ratios are <= 0 in the log), sup-norm
    quantiles of N, and the frequency of a_d > zeta^n a_i dominance
    events over a grid of zeta.  rho_hat is the fitted exponential
    decay rate of the contraction statistic; zeta_hat halves the median
    measured dominance rate as a conservative estimate; xi0_hat fits
    the decay of the dominance failure frequency where it is resolved.
    """
    n_grid = tuple(int(n) for n in n_grid)
    if any(n < 1 for n in n_grid) or len(n_grid) < 2:
        raise ValueError("need at least two positive n values")
    alphabet = src.alphabet
    d = alphabet.dim
    flags = {}
    if check_conditions:
        flags["proximal_heuristic"] = proximality_heuristic(alphabet)
        union = invariant_union_search(alphabet) if d == 2 else None
        flags["invariant_union"] = union
    stat = np.empty((len(n_grid), trials, d - 1))
    norms = np.empty((len(n_grid), trials))
    gaps = np.empty((len(n_grid), trials))  # log a_dom - max other
    argmax_counts = np.zeros((len(n_grid), d), dtype=int)
    for t in range(trials):
        word = sample_word(src, max(n_grid), trial=t + seed * 0x10000)
        for gi, n in enumerate(n_grid):
            fac = iwasawa(product(Word(alphabet, word.indices[:n]), 1, n))
            ld = fac.log_diag
            stat[gi, t] = np.exp(delta * (ld[:-1] - ld[1:]))
            norms[gi, t] = np.max(np.sum(np.abs(fac.n_factor), axis=1))
            top = int(np.argmax(ld))
            argmax_counts[gi, top] += 1
            others = np.delete(ld, top)
            gaps[gi, t] = ld[top] - np.max(others)
    ratio_mean = stat.mean(axis=1)
    ratio_se = stat.std(axis=1, ddof=1) / math.sqrt(trials) if trials > 1 else np.zeros_like(ratio_mean)
    rho = np.empty(d - 1)
    pval = np.empty(d - 1)
    ns = np.asarray(n_grid, dtype=float)
    for i in range(d - 1):
        fit = sstats.linregress(ns, np.log(np.maximum(ratio_mean[:, i], 1e-300)))
        rho[i] = math.exp(fit.slope)
        pval[i] = fit.pvalue
    qs = np.stack(
        [np.quantile(norms, 0.5, axis=1), np.quantile(norms, 0.9, axis=1),
         norms.max(axis=1)], axis=1)
    # conservative dominance rate: half the median per-step gap at the largest n
    med_rate = float(np.median(gaps[-1]) / n_grid[-1])
    zeta_hat = math.exp(max(0.0, 0.5 * med_rate))
    if zeta_grid is None:
        zeta_grid = tuple(
            round(math.exp(f * med_rate), 6) for f in (0.25, 0.5, 0.75, 0.9)
        ) if med_rate > 0 else (1.0, 1.05, 1.1, 1.2)
    zeta_grid = tuple(float(z) for z in zeta_grid)
    dom = np.empty((len(n_grid), len(zeta_grid)))
    for gi, n in enumerate(n_grid):
        for zi, z in enumerate(zeta_grid):
            dom[gi, zi] = float(np.mean(gaps[gi] > n * math.log(z)))
    xi0 = None
    zi_hat = int(np.argmin(np.abs(np.asarray(zeta_grid) - zeta_hat)))
    fail = 1.0 - dom[:, zi_hat]
    live = (fail > 0) & (fail < 1)
    if live.sum() >= 2:
        fit = sstats.linregress(ns[live], np.log(fail[live]))
        xi0 = math.exp(fit.slope)
    return GrowthDiagnostics(
        n_grid=n_grid, delta=delta, trials=trials, seed=seed,
        ratio_stat=ratio_mean, ratio_stat_stderr=ratio_se,
        rho_hat=rho, rho_pvalue=pval, norm_quantiles=qs,
        zeta_grid=zeta_grid, dominance_freq=dom,
        dominant_index_freq=argmax_counts / max(1, trials),
        zeta_hat=zeta_hat, xi0_hat=xi0, flags=flags,
    )
