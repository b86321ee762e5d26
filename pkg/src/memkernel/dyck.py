"""Dyck paths, their statistics, and the kernel-term recipes they encode.

A path of order N is a word of 2N bits (1 = up, 0 = down). Time points of an
order-N kernel term are 0..N, position 0 being the latest. A peak at path
position m with height h becomes a dashed arc ((m - h)/2, (m + h)/2), i.e. a
factor I_h - 1. Every other time pair (a, b) whose midpoint m = a + b lies
under the path, h(m) >= b - a, becomes a solid arc, a factor I_{b-a}.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator

import numpy as np

from . import _kernels
from .errors import ResourceError, ValidationError

ORDER_CAP = 16


@dataclass(frozen=True)
class DyckPath:
    word: tuple

    def __post_init__(self):
        w = tuple(int(b) for b in self.word)
        if len(w) % 2 or any(b not in (0, 1) for b in w):
            raise ValidationError(f"not a Dyck word: {self.word!r}")
        h = 0
        for b in w:
            h += 1 if b else -1
            if h < 0:
                raise ValidationError(f"Dyck word dips below the axis: {self.word!r}")
        if h != 0:
            raise ValidationError(f"unbalanced Dyck word: {self.word!r}")
        object.__setattr__(self, "word", w)

    @classmethod
    def from_string(cls, s: str) -> "DyckPath":
        return cls(tuple(int(c) for c in s))

    def __str__(self) -> str:
        return "".join(map(str, self.word))

    @property
    def order(self) -> int:
        return len(self.word) // 2

    @property
    def heights(self) -> tuple:
        out, h = [0], 0
        for b in self.word:
            h += 1 if b else -1
            out.append(h)
        return tuple(out)

    @property
    def peaks(self) -> tuple:
        """(position, height) of every up step followed by a down step."""
        hs = self.heights
        w = self.word
        return tuple((m, hs[m]) for m in range(1, len(w)) if w[m - 1] == 1 and w[m] == 0)


@dataclass(frozen=True)
class PathStatistics:
    peaks: int
    segments: int
    height: int
    hills: int


def path_statistics(p: DyckPath) -> PathStatistics:
    hs = p.heights
    pk = p.peaks
    return PathStatistics(
        peaks=len(pk),
        segments=sum(1 for h in hs[1:] if h == 0),
        height=max(hs),
        hills=sum(1 for _, h in pk if h == 1),
    )


def _generate(N: int) -> Iterator[tuple]:
    word = [0] * (2 * N)

    def rec(pos, ups, h):
        if pos == 2 * N:
            yield tuple(word)
            return
        # 0 before 1 gives lexicographic order
        if h > 0:
            word[pos] = 0
            yield from rec(pos + 1, ups, h - 1)
        if ups < N:
            word[pos] = 1
            yield from rec(pos + 1, ups + 1, h + 1)

    yield from rec(0, 0, 0)


def enumerate_paths(N: int, cap: int = ORDER_CAP) -> list:
    """All Dyck paths of order N in lexicographic word order."""
    if N < 1:
        raise ValidationError("order must be at least 1")
    if N > cap:
        raise ResourceError(f"order {N} exceeds the configured cap {cap}")
    return [DyckPath(w) for w in _generate(N)]


def crest_path(N: int) -> DyckPath:
    return DyckPath((1,) * N + (0,) * N)


# -- recipes ------------------------------------------------------------------
@dataclass(frozen=True)
class KernelTermRecipe:
    """Arc lists of one kernel term; arcs are (i, j) with i < j."""

    order: int
    dashed: tuple
    solid: tuple

    def factors(self) -> Counter:
        """Multiset of (tilde?, i, j) factors."""
        c = Counter((True, i, j) for i, j in self.dashed)
        c.update((False, i, j) for i, j in self.solid)
        return c

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "dashed": [list(a) for a in self.dashed],
            "solid": [list(a) for a in self.solid],
        }


def recipe_from_path(p: DyckPath) -> KernelTermRecipe:
    N = p.order
    hs = p.heights
    peaks = set(p.peaks)
    dashed, solid = [], []
    for a in range(N + 1):
        for b in range(a + 1, N + 1):
            m, lag = a + b, b - a
            if hs[m] < lag:
                continue
            (dashed if (m, lag) in peaks else solid).append((a, b))
    return KernelTermRecipe(N, tuple(sorted(dashed)), tuple(sorted(solid)))


@lru_cache(maxsize=None)
def recipes(N: int) -> tuple:
    """Cached recipes for every order-N path, in enumeration order."""
    return tuple(recipe_from_path(p) for p in enumerate_paths(N))


# -- combinatorics ----------------------------------------------------------
def catalan(n: int) -> int:
    return math.comb(2 * n, n) // (n + 1)


def narayana(n: int, k: int) -> int:
    if not 1 <= k <= n:
        return 0
    return math.comb(n, k) * math.comb(n, k - 1) // n


def catalan_triangle(n: int, k: int) -> int:
    """C(n, k) = (n - k + 1)/(n + 1) binom(n + k, k)."""
    return (n - k + 1) * math.comb(n + k, k) // (n + 1)


def segment_count(n: int, k: int) -> int:
    """Number of order-n Dyck paths returning to the axis exactly k times."""
    if not 1 <= k <= n:
        return 0
    return catalan_triangle(n - 1, n - k)


def fine_numbers(n_max: int) -> list:
    """Fine numbers F_0..F_{n_max} from 2 F_n + F_{n-1} = C_n."""
    F = [1]
    for n in range(1, n_max + 1):
        F.append((catalan(n) - F[n - 1]) // 2)
    return F


# -- contractions -----------------------------------------------------------
def _links(F, N):
    F = np.asarray(F, dtype=complex)
    if F.ndim == 2:
        F = np.broadcast_to(F, (N,) + F.shape)
    if F.shape[0] != N:
        raise ValidationError(f"need {N} propagator links, got {F.shape[0]}")
    return np.ascontiguousarray(F)


def _itab(I, N):
    if I.k_max < N:
        raise ValidationError(f"influence table depth {I.k_max} below order {N}")
    return np.ascontiguousarray(I.I[: N + 1])


def bath_sum(F, I, N: int, hmax: int | None = None, denominator: bool = False):
    """Sum over x_1..x_{N-1} of chain weight times Dyck weight.

    Returns an (D, D) matrix indexed by (x_0, x_N); ``F`` is one link matrix
    or an (N, D, D) stack ordered from the latest link. With ``denominator``
    also returns the all-solid sum without the (0, N) pair.
    """
    if N < 1:
        raise ValidationError("bath sums start at order 1")
    hmax = N if hmax is None else hmax
    D = I.D
    out = np.zeros((D, D), dtype=complex)
    den = np.zeros((D, D), dtype=complex)
    _kernels.dyck_sums(_links(F, N), np.ascontiguousarray(I.I0), _itab(I, N), hmax, out, den, denominator)
    return (out, den) if denominator else out


def recipe_weights(recipe: KernelTermRecipe, I) -> np.ndarray:
    """Bath weight (I0 and arc factors) of one recipe over all configurations.

    Dense tensor with N + 1 axes; intended as an independent check at small N.
    """
    N = recipe.order
    D = I.D
    w = np.ones((D,) * (N + 1), dtype=complex)
    for a in range(N + 1):
        shape = [1] * (N + 1)
        shape[a] = D
        w = w * I.I0.reshape(shape)
    for tilde, arcs in ((True, recipe.dashed), (False, recipe.solid)):
        for a, b in arcs:
            f = I.I[b - a] - (1.0 if tilde else 0.0)
            shape = [1] * (N + 1)
            shape[a] = D
            shape[b] = D
            w = w * f.reshape(shape)
    return w


def contract_chain(weights: np.ndarray, F) -> np.ndarray:
    """Sum the F-link chain against a dense weight tensor; returns (x_0, x_N)."""
    N = weights.ndim - 1
    links = _links(F, N)
    D = weights.shape[0]
    w = weights
    for a in range(N):
        shape = [1] * (N + 1)
        shape[a] = D
        shape[a + 1] = D
        w = w * links[a].reshape(shape)
    return w.sum(axis=tuple(range(1, N))) if N > 1 else w
