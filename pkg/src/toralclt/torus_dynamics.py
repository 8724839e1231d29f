"""Exact torus dynamics on a rational lattice.

Points live on the lattice (1/q) Z^d / Z^d, stored as integer residues
mod q, so iterating a word of automorphisms never touches floating
point and long orbits cannot drift.  A letter with matrix A moves a
point x to A^t x mod 1; frequencies are pushed by A itself, which keeps
characters compatible with `freq_lattice.pushforward`.

The default modulus is the Mersenne prime 2^61 - 1.  Any q >= 2 is
accepted (small moduli are handy in unit tests), but uniform sampling
approximates Lebesgue measure only up to O(1/q), so Monte Carlo runs
should keep the default size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exact_linalg import IntMatrix, Word

DEFAULT_MODULUS = 2**61 - 1


@dataclass(frozen=True)
class ModularPoint:
    """Residue coordinates in [0, q)^d representing (coords / q) mod 1."""

    q: int
    coords: tuple

    def __post_init__(self):
        q = int(self.q)
        if q < 2:
            raise ValueError("modulus must be at least 2")
        coords = tuple(int(c) % q for c in self.coords)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "coords", coords)

    @property
    def dim(self) -> int:
        return len(self.coords)

    def as_floats(self) -> np.ndarray:
        return np.array([c / self.q for c in self.coords])


def apply(m: IntMatrix, pt: ModularPoint) -> ModularPoint:
    """One step of the automorphism x -> m^t x mod 1, exact."""
    if m.dim != pt.dim:
        raise ValueError("dimension mismatch")
    coords = tuple(
        sum(m.rows[j][i] * pt.coords[j] for j in range(m.dim)) % pt.q
        for i in range(m.dim)
    )
    return ModularPoint(pt.q, coords)


def orbit(word: Word, pt: ModularPoint, n: int) -> list:
    """[z_1, ..., z_n] with z_k the image of pt under the first k letters."""
    if not (0 <= n <= len(word)):
        raise ValueError(f"need 0 <= n <= {len(word)}")
    out = []
    z = pt
    for k in range(1, n + 1):
        z = apply(word.letter(k), z)
        out.append(z)
    return out


def sample_uniform(rng: np.random.Generator, q: int, d: int) -> ModularPoint:
    if q < 2 or d < 1:
        raise ValueError("need q >= 2 and d >= 1")
    coords = rng.integers(0, q, size=d, dtype=np.uint64)
    return ModularPoint(q, tuple(int(c) for c in coords))


def batch_uniform(rng: np.random.Generator, q: int, d: int, count: int) -> np.ndarray:
    """(count, d) array of residues, the vectorized twin of sample_uniform."""
    return rng.integers(0, q, size=(count, d), dtype=np.uint64)


def _fast_path_ok(m: IntMatrix, q: int) -> bool:
    # per-term products |e| * c and the d-term accumulator must fit in uint64
    if m.dim * (q - 1) >= 2**64:
        return False
    limit = (2**64 - 1) // max(q - 1, 1)
    return all(abs(x) <= limit for row in m.rows for x in row)


_M61 = np.uint64(DEFAULT_MODULUS)
_E61 = np.uint64(61)


def _mersenne_path_ok(m: IntMatrix) -> bool:
    # raw accumulation needs sum_j |e_ji| * (2^61 - 1) < 2^64 per output
    limit = (2**64 - 1) // DEFAULT_MODULUS
    return all(
        sum(abs(m.rows[j][i]) for j in range(m.dim)) <= limit
        for i in range(m.dim)
    )


def batch_apply(m: IntMatrix, coords: np.ndarray, q: int) -> np.ndarray:
    """Apply one letter to a (count, d) residue array.

    At the default Mersenne modulus small letters take a division-free
    path: 2^61 == 1 (mod q) lets the raw uint64 accumulator collapse with
    two shift-and-add folds.  A generic uint64 path with per-term `%`
    covers other moduli, and anything larger falls back to python ints.
    """
    d = m.dim
    if coords.ndim != 2 or coords.shape[1] != d:
        raise ValueError("coords must have shape (count, d)")
    if q == DEFAULT_MODULUS and _mersenne_path_ok(m):
        out = np.empty_like(coords)
        for i in range(d):
            acc = None
            for j in range(d):
                e = m.rows[j][i]
                if e == 0:
                    continue
                # -|e|*c == |e|*(q - c) mod q, so signs cost no reduction
                if e > 0:
                    term = np.uint64(e) * coords[:, j]
                else:
                    term = np.uint64(-e) * (_M61 - coords[:, j])
                if acc is None:
                    acc = term
                else:
                    acc += term
            if acc is None:
                out[:, i] = 0
                continue
            for _ in range(2):
                hi = acc >> _E61
                acc &= _M61
                acc += hi
            acc -= _M61 * (acc >= _M61).astype(np.uint64)
            out[:, i] = acc
        return out
    if _fast_path_ok(m, q):
        qq = np.uint64(q)
        out = np.empty_like(coords)
        for i in range(d):
            acc = np.zeros(coords.shape[0], dtype=np.uint64)
            for j in range(d):
                e = m.rows[j][i]
                if e == 0:
                    continue
                term = (np.uint64(abs(e)) * coords[:, j]) % qq
                if e < 0:
                    term = (qq - term) % qq
                acc += term
            out[:, i] = acc % qq
        return out
    rows = [
        tuple(
            sum(m.rows[j][i] * int(c[j]) for j in range(d)) % q
            for i in range(d)
        )
        for c in coords
    ]
    return np.array(rows, dtype=np.uint64)
