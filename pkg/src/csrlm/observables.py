"""Potts-style order parameter and ensemble statistics of generated sentences."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy.linalg import helmert

from .model import SentenceState

HIST_BINS = 50
HIST_WIDTH = 1.0 / HIST_BINS


class InsufficientSamples(ValueError):
    pass


class DegenerateMoments(ValueError):
    pass


def simplex_basis(K: int) -> np.ndarray:
    """Rows are the K unit vectors e_1..e_K of the (K-1)-simplex, shape (K, K-1).

    Built from the Helmert contrasts: columns of the Helmert submatrix are the
    centred standard basis vectors expressed in an orthonormal basis of the
    zero-sum hyperplane.
    """
    if K < 2:
        raise ValueError("the simplex basis needs K >= 2")
    return math.sqrt(K / (K - 1)) * helmert(K).T


def simplex_dot(a: int, b: int, K: int) -> float:
    return 1.0 if a == b else -1.0 / (K - 1)


def simplex_gram(K: int) -> np.ndarray:
    """K x K matrix of e_a . e_b."""
    return (K * np.eye(K) - 1.0) / (K - 1)


def probe_sites(N: int) -> tuple[int, int]:
    """0-based sites floor(N/4) and floor(3N/4) - 1 used for G and I."""
    return N // 4, max((3 * N) // 4 - 1, 0)


def _symbols(state) -> np.ndarray:
    return state.symbols if isinstance(state, SentenceState) else np.asarray(state)


def magnetization_from_counts(counts: np.ndarray, K: int) -> float:
    counts = np.asarray(counts, dtype=np.int64)
    N = counts.sum()
    m2 = (K * float((counts * counts).sum()) / float(N * N) - 1.0) / (K - 1)
    return math.sqrt(m2) if m2 > 0.0 else 0.0


def magnetization(state, K: int) -> float:
    """Norm of the mean simplex vector, exact from symbol counts."""
    sym = _symbols(state)
    if K < 2:
        return 1.0
    return magnetization_from_counts(np.bincount(sym - 1, minlength=K), K)


def magnetization_vector(state, K: int) -> np.ndarray:
    """Mean simplex vector by explicit summation (reference route)."""
    return simplex_basis(K)[_symbols(state) - 1].mean(axis=0)


def histogram_bin(M: float) -> int:
    """Index of the width-0.02 bin holding M; M = 1 falls into the last bin."""
    return min(int(math.floor(M * HIST_BINS + 1e-9)), HIST_BINS - 1)


def histogram_edges() -> np.ndarray:
    return np.round(np.linspace(0.0, 1.0, HIST_BINS + 1), 10)


@dataclass
class MomentAccumulator:
    """Streaming moments of M plus probe-pair, symbol and histogram counts.

    All fields are sums, so shards built independently combine with
    :meth:`merge` regardless of order.
    """

    K: int
    N: int
    n: int = 0
    sum_M: float = 0.0
    sum_M2: float = 0.0
    sum_M4: float = 0.0
    pair_counts: np.ndarray = field(default=None)
    symbol_counts: np.ndarray = field(default=None)
    histogram: np.ndarray = field(default=None)
    ranked_sum: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.pair_counts is None:
            self.pair_counts = np.zeros((self.K, self.K), dtype=np.int64)
        if self.symbol_counts is None:
            self.symbol_counts = np.zeros(self.K, dtype=np.int64)
        if self.histogram is None:
            self.histogram = np.zeros(HIST_BINS, dtype=np.int64)
        if self.ranked_sum is None:
            self.ranked_sum = np.zeros(self.K, dtype=np.float64)

    @property
    def probes(self) -> tuple[int, int]:
        return probe_sites(self.N)

    def add(self, state) -> float:
        """Record one sentence of length N; returns its magnetization."""
        sym = _symbols(state)
        if sym.size != self.N:
            raise ValueError(f"expected a sentence of length {self.N}, got {sym.size}")
        counts = np.bincount(sym - 1, minlength=self.K)
        M = magnetization_from_counts(counts, self.K) if self.K >= 2 else 1.0
        M2 = M * M
        self.n += 1
        self.sum_M += M
        self.sum_M2 += M2
        self.sum_M4 += M2 * M2
        i, j = self.probes
        self.pair_counts[sym[i] - 1, sym[j] - 1] += 1
        self.symbol_counts += counts
        self.histogram[histogram_bin(M)] += 1
        self.ranked_sum += ranked_frequencies(counts)
        return M

    def update(self, states: Iterable) -> "MomentAccumulator":
        for s in states:
            self.add(s)
        return self

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        if (self.K, self.N) != (other.K, other.N):
            raise ValueError("cannot merge accumulators of different (K, N)")
        return MomentAccumulator(
            self.K,
            self.N,
            self.n + other.n,
            self.sum_M + other.sum_M,
            self.sum_M2 + other.sum_M2,
            self.sum_M4 + other.sum_M4,
            self.pair_counts + other.pair_counts,
            self.symbol_counts + other.symbol_counts,
            self.histogram + other.histogram,
            self.ranked_sum + other.ranked_sum,
        )

    @property
    def mean_M(self) -> float:
        return self.sum_M / self.n

    @property
    def mean_M2(self) -> float:
        return self.sum_M2 / self.n

    @property
    def mean_M4(self) -> float:
        return self.sum_M4 / self.n

    @property
    def se_M(self) -> float:
        if self.n < 2:
            return float("nan")
        var = max(self.mean_M2 - self.mean_M**2, 0.0) * self.n / (self.n - 1)
        return math.sqrt(var / self.n)


def susceptibility(acc: MomentAccumulator, N: int | None = None) -> float:
    """N (<M^2> - <M>^2)."""
    if acc.n < 2:
        raise InsufficientSamples(f"susceptibility needs >= 2 samples, got {acc.n}")
    N = acc.N if N is None else N
    return N * max(acc.mean_M2 - acc.mean_M**2, 0.0)


def chi_tilde(acc: MomentAccumulator, N: int | None = None) -> float:
    """N <M^2>, the scaling form used in the size collapse."""
    if acc.n < 1:
        raise InsufficientSamples("chi_tilde needs at least one sample")
    N = acc.N if N is None else N
    return N * acc.mean_M2


def binder(acc: MomentAccumulator, K: int | None = None) -> float:
    """-(K-1)/2 (<M^4>/<M^2>^2 - (K+1)/(K-1)); 0 for Gaussian, 1 for a delta peak."""
    K = acc.K if K is None else K
    if acc.n < 2:
        raise InsufficientSamples(f"Binder parameter needs >= 2 samples, got {acc.n}")
    m2 = acc.mean_M2
    if m2 <= 0.0:
        raise DegenerateMoments("<M^2> = 0")
    return -(K - 1) / 2 * (acc.mean_M4 / (m2 * m2) - (K + 1) / (K - 1))


def correlation(acc: MomentAccumulator, K: int | None = None) -> float:
    """<e_{sigma_i} . e_{sigma_j}> at the probe sites (not connected)."""
    K = acc.K if K is None else K
    total = acc.pair_counts.sum()
    if total < 1:
        raise InsufficientSamples("no probe pairs recorded")
    return float((acc.pair_counts * simplex_gram(K)).sum() / total)


def connected_correlation(acc: MomentAccumulator, K: int | None = None) -> float:
    """Correlation minus the product of single-site mean vectors."""
    K = acc.K if K is None else K
    total = acc.pair_counts.sum()
    p_i = acc.pair_counts.sum(axis=1) / total
    p_j = acc.pair_counts.sum(axis=0) / total
    return correlation(acc, K) - float(p_i @ simplex_gram(K) @ p_j)


def mutual_information(acc_or_counts) -> float:
    """Plug-in mutual information (nats) of the probe-site symbols."""
    counts = getattr(acc_or_counts, "pair_counts", acc_or_counts)
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if total < 1:
        raise InsufficientSamples("no probe pairs recorded")
    p = counts / total
    pa = p.sum(axis=1, keepdims=True)
    pb = p.sum(axis=0, keepdims=True)
    nz = p > 0
    return float(max((p[nz] * np.log(p[nz] / (pa @ pb)[nz])).sum(), 0.0))


def zipf_from_counts(counts) -> list[tuple[int, float]]:
    counts = np.asarray(counts, dtype=np.int64)
    total = counts.sum()
    if total < 1:
        raise ValueError("empty corpus")
    # ties keep ascending symbol order
    order = np.argsort(-counts, kind="stable")
    freq = counts[order]
    freq = freq[freq > 0]
    return [(r + 1, float(c) / total) for r, c in enumerate(freq)]


def ranked_frequencies(counts) -> np.ndarray:
    """Relative frequencies of one sentence sorted in descending order."""
    counts = np.asarray(counts, dtype=np.float64)
    return np.sort(counts)[::-1] / counts.sum()


def zipf_sentence_mean(acc_or_ranked, n: int | None = None) -> list[tuple[int, float]]:
    """Rank-frequency curve averaged over sentences, each ranked on its own.

    Pooling counts over an ensemble washes out the ordering because every
    symbol is equally likely to dominate a given sentence; ranking within a
    sentence first keeps the head that the ordering produces.
    """
    ranked = getattr(acc_or_ranked, "ranked_sum", acc_or_ranked)
    n = getattr(acc_or_ranked, "n", n)
    if not n:
        raise InsufficientSamples("no sentences recorded")
    f = np.asarray(ranked, dtype=float) / n
    f = f[f > 0]
    return [(r + 1, float(v)) for r, v in enumerate(f)]


def zipf_ranks(corpus: Iterable) -> list[tuple[int, float]]:
    """Rank-frequency table of symbol indices pooled over every cell of the corpus."""
    arrays = [_symbols(s) for s in corpus]
    if not arrays:
        raise ValueError("empty corpus")
    return zipf_from_counts(np.bincount(np.concatenate(arrays)))
