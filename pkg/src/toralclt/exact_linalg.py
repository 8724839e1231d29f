"""Exact integer matrices, labeled alphabets, words, and Iwasawa factors.

All matrix arithmetic here uses Python integers, so products of hundreds
of letters stay exact no matter how fast the entries grow.  Floating
point enters only when a factorization or a logarithm of an exact
quantity is reported.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

MIN_DIM = 2
MAX_DIM = 8

# json payloads keep integers exact; above this magnitude they are
# emitted as decimal strings because json readers may round to float
_JSON_INT_LIMIT = 2**53


class IntMatrix:
    """Immutable square integer matrix, dimension between 2 and 8."""

    __slots__ = ("dim", "rows")

    def __init__(self, rows):
        rows = tuple(tuple(int(x) for x in row) for row in rows)
        d = len(rows)
        if not (MIN_DIM <= d <= MAX_DIM):
            raise ValueError(f"dimension must be in [{MIN_DIM}, {MAX_DIM}], got {d}")
        if any(len(row) != d for row in rows):
            raise ValueError("matrix must be square")
        object.__setattr__(self, "dim", d)
        object.__setattr__(self, "rows", rows)

    def __setattr__(self, name, value):
        raise AttributeError("IntMatrix is immutable")

    @classmethod
    def identity(cls, d: int) -> "IntMatrix":
        return cls(tuple(tuple(1 if i == j else 0 for j in range(d)) for i in range(d)))

    def __mul__(self, other: "IntMatrix") -> "IntMatrix":
        if not isinstance(other, IntMatrix):
            return NotImplemented
        if self.dim != other.dim:
            raise ValueError("dimension mismatch")
        cols = tuple(zip(*other.rows))
        return IntMatrix(
            tuple(
                tuple(sum(a * b for a, b in zip(row, col)) for col in cols)
                for row in self.rows
            )
        )

    def mul_vec(self, vec) -> tuple:
        """Matrix times column vector, exact."""
        if len(vec) != self.dim:
            raise ValueError("dimension mismatch")
        return tuple(sum(a * b for a, b in zip(row, vec)) for row in self.rows)

    def transpose(self) -> "IntMatrix":
        return IntMatrix(tuple(zip(*self.rows)))

    def det(self) -> int:
        """Exact determinant by fraction-free (Bareiss) elimination."""
        d = self.dim
        a = [list(row) for row in self.rows]
        sign = 1
        prev = 1
        for k in range(d - 1):
            if a[k][k] == 0:
                for i in range(k + 1, d):
                    if a[i][k] != 0:
                        a[k], a[i] = a[i], a[k]
                        sign = -sign
                        break
                else:
                    return 0
            for i in range(k + 1, d):
                for j in range(k + 1, d):
                    a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
                a[i][k] = 0
            prev = a[k][k]
        return sign * a[d - 1][d - 1]

    def inverse(self) -> "IntMatrix":
        """Exact inverse; requires det = +-1 so the inverse is integral."""
        det = self.det()
        if det not in (1, -1):
            raise ValueError(f"matrix is not unimodular (det={det})")
        d = self.dim
        cof = [[0] * d for _ in range(d)]
        for i in range(d):
            for j in range(d):
                minor = [
                    [self.rows[r][c] for c in range(d) if c != j]
                    for r in range(d)
                    if r != i
                ]
                cof[i][j] = (-1) ** (i + j) * _det_small(minor)
        # adjugate is the transposed cofactor matrix; 1/det equals det here
        adj_t = tuple(tuple(det * cof[j][i] for j in range(d)) for i in range(d))
        return IntMatrix(adj_t)

    def is_positive(self) -> bool:
        return all(x >= 1 for row in self.rows for x in row)

    def as_array(self) -> np.ndarray:
        """Float view; raises OverflowError if entries exceed float range."""
        return np.array(self.rows, dtype=float)

    def __eq__(self, other):
        return isinstance(other, IntMatrix) and self.rows == other.rows

    def __hash__(self):
        return hash(self.rows)

    def __repr__(self):
        return f"IntMatrix({list(map(list, self.rows))})"


def _det_small(rows) -> int:
    d = len(rows)
    if d == 0:
        return 1
    if d == 1:
        return rows[0][0]
    if d == 2:
        return rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0]
    # Bareiss again for the 3..7 sized minors
    a = [list(r) for r in rows]
    sign = 1
    prev = 1
    for k in range(d - 1):
        if a[k][k] == 0:
            for i in range(k + 1, d):
                if a[i][k] != 0:
                    a[k], a[i] = a[i], a[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, d):
            for j in range(k + 1, d):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
            a[i][k] = 0
        prev = a[k][k]
    return sign * a[d - 1][d - 1]


def sup_norm(m: IntMatrix) -> int:
    """Operator norm induced by the max norm: largest row sum of |entries|."""
    return max(sum(abs(x) for x in row) for row in m.rows)


def vec_sup_norm(vec) -> int:
    return max(abs(int(x)) for x in vec)


class Alphabet:
    """Finite list of labeled unimodular letters, all of one dimension."""

    __slots__ = ("labels", "matrices", "dim", "positive")

    def __init__(self, labels, matrices):
        labels = tuple(str(s) for s in labels)
        matrices = tuple(matrices)
        if len(labels) != len(matrices) or not matrices:
            raise ValueError("need one label per matrix and at least one letter")
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate labels")
        d = matrices[0].dim
        for label, m in zip(labels, matrices):
            if m.dim != d:
                raise ValueError("letters must share one dimension")
            if m.det() not in (1, -1):
                raise ValueError(f"letter {label!r} is not unimodular")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "matrices", matrices)
        object.__setattr__(self, "dim", d)
        # positivity flag is set exactly when every entry of every letter is >= 1
        object.__setattr__(self, "positive", all(m.is_positive() for m in matrices))

    def __setattr__(self, name, value):
        raise AttributeError("Alphabet is immutable")

    def __len__(self):
        return len(self.matrices)

    def __getitem__(self, i) -> IntMatrix:
        return self.matrices[i]

    def index_of(self, label: str) -> int:
        return self.labels.index(label)

    def __eq__(self, other):
        return (
            isinstance(other, Alphabet)
            and self.labels == other.labels
            and self.matrices == other.matrices
        )

    def __hash__(self):
        return hash((self.labels, tuple(m.rows for m in self.matrices)))

    def __repr__(self):
        return f"Alphabet({list(self.labels)})"


@dataclass(frozen=True)
class Word:
    """A finite sequence of alphabet indices; positions are 1-based."""

    alphabet: Alphabet
    indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(i < 0 or i >= len(self.alphabet) for i in idx):
            raise ValueError("letter index out of range")
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return len(self.indices)

    def letter(self, k: int) -> IntMatrix:
        """Matrix at position k, 1-based."""
        if not (1 <= k <= len(self.indices)):
            raise IndexError(f"position {k} outside [1, {len(self.indices)}]")
        return self.alphabet[self.indices[k - 1]]

    def labels(self) -> tuple:
        return tuple(self.alphabet.labels[i] for i in self.indices)


def product(word: Word, i: int, j: int) -> IntMatrix:
    """Exact product of letters i through j inclusive, 1-based, i <= j."""
    if not (1 <= i <= j <= len(word)):
        raise ValueError(f"need 1 <= i <= j <= {len(word)}, got ({i}, {j})")
    acc = word.letter(i)
    for k in range(i + 1, j + 1):
        acc = acc * word.letter(k)
    return acc


def prefix_products(word: Word, n: int | None = None) -> list:
    """[P_0, ..., P_n] with P_0 = identity and P_k = P_{k-1} * letter(k)."""
    if n is None:
        n = len(word)
    if not (0 <= n <= len(word)):
        raise ValueError(f"need 0 <= n <= {len(word)}")
    out = [IntMatrix.identity(word.alphabet.dim)]
    for k in range(1, n + 1):
        out.append(out[-1] * word.letter(k))
    return out


@dataclass(frozen=True)
class IwasawaFactors:
    """m = n_factor . diag(exp(log_diag)) . k_factor.

    n_factor is unit upper triangular, k_factor orthogonal, and the
    diagonal is kept in logarithms because the exact entries overflow
    floats for long words.
    """

    n_factor: np.ndarray
    log_diag: np.ndarray
    k_factor: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return self.n_factor @ np.diag(np.exp(self.log_diag)) @ self.k_factor

    def orthogonality_residual(self) -> float:
        d = self.k_factor.shape[0]
        return float(np.max(np.abs(self.k_factor @ self.k_factor.T - np.eye(d))))


def _log_fraction(fr: Fraction) -> float:
    # math.log accepts arbitrarily large python ints
    return math.log(fr.numerator) - math.log(fr.denominator)


def _fraction_to_float(fr: Fraction) -> float:
    try:
        return float(fr)
    except OverflowError:
        sign = -1.0 if fr < 0 else 1.0
        return sign * math.exp(_log_fraction(abs(fr)))


def iwasawa(m: IntMatrix) -> IwasawaFactors:
    """Factor m as N . D . K by orthogonalizing the rows bottom-up.

    The Gram-Schmidt pass runs in exact rational arithmetic: for long
    words the top rows of the orthogonal complement are smaller than the
    float rounding error of the raw entries, so a floating pass would
    return noise for the small diagonal entries.  Logarithms of exact
    rationals are taken at the very end.
    """
    d = m.dim
    rows = [[Fraction(x) for x in row] for row in m.rows]
    ortho = [None] * d
    norm_sq = [None] * d
    n_factor = np.eye(d)
    for i in range(d - 1, -1, -1):
        v = rows[i][:]
        for j in range(d - 1, i, -1):
            num = sum(a * b for a, b in zip(rows[i], ortho[j]))
            coeff = num / norm_sq[j]
            n_factor[i, j] = _fraction_to_float(coeff)
            v = [x - coeff * y for x, y in zip(v, ortho[j])]
        nsq = sum(x * x for x in v)
        if nsq == 0:
            raise ValueError("matrix is singular")
        ortho[i] = v
        norm_sq[i] = nsq
    log_diag = np.array([0.5 * _log_fraction(norm_sq[i]) for i in range(d)])
    k_factor = np.empty((d, d))
    for i in range(d):
        for t in range(d):
            c = ortho[i][t]
            # c / a_i computed as sign * sqrt(c^2 / a_i^2); the exact ratio
            # is at most 1 so the float conversion cannot overflow
            val = math.sqrt(float(c * c / norm_sq[i]))
            k_factor[i, t] = -val if c < 0 else val
    return IwasawaFactors(n_factor=n_factor, log_diag=log_diag, k_factor=k_factor)


def diag_log_ratios(factors: IwasawaFactors) -> np.ndarray:
    """log a_i - log a_{i+1} for consecutive diagonal entries."""
    return factors.log_diag[:-1] - factors.log_diag[1:]


def _int_to_json(x: int):
    return x if abs(x) <= _JSON_INT_LIMIT else str(x)


def _int_from_json(x) -> int:
    if isinstance(x, str):
        return int(x)
    if isinstance(x, int):
        return x
    raise ValueError(f"expected integer or decimal string, got {type(x).__name__}")


def matrix_to_json(m: IntMatrix) -> list:
    return [[_int_to_json(x) for x in row] for row in m.rows]


def matrix_from_json(rows) -> IntMatrix:
    return IntMatrix([[_int_from_json(x) for x in row] for row in rows])


def alphabet_to_json(alphabet: Alphabet) -> str:
    payload = [
        {"label": label, "rows": matrix_to_json(m)}
        for label, m in zip(alphabet.labels, alphabet.matrices)
    ]
    return json.dumps(payload, indent=2, sort_keys=True)


def alphabet_from_json(text: str) -> Alphabet:
    payload = json.loads(text)
    labels = [entry["label"] for entry in payload]
    matrices = [matrix_from_json(entry["rows"]) for entry in payload]
    return Alphabet(labels, matrices)


def standard_alphabet() -> Alphabet:
    """The two positive unimodular letters used throughout the examples."""
    return Alphabet(
        ["L", "R"],
        [IntMatrix([[2, 1], [1, 1]]), IntMatrix([[1, 1], [1, 2]])],
    )
