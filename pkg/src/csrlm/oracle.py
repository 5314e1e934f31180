"""Exact references for toy instances.

Two independent routes check the engine: brute-force Boltzmann enumeration of
the fixed-length chain (the stationary law of the context rule alone) and an
exact linear solve for the outcome distribution of the full generation Markov
chain. Neither route calls into :mod:`csrlm.kernels`.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .model import ModelParams, SentenceState

MAX_ENUMERATION = 10**7
MAX_TRANSIENT = 5000
TRUNCATION_TOL = 1e-6


class TooLarge(ValueError):
    pass


class TruncationLoss(RuntimeError):
    pass


class ParameterMismatch(ValueError):
    pass


@dataclass
class ExactEquilibrium:
    K: int
    n: int
    J: float
    kT: float
    mean_M: float
    mean_M2: float
    mean_M4: float
    corr: dict = field(default_factory=dict)  # (i, j) -> <e_i . e_j>
    same: dict = field(default_factory=dict)  # (i, j) -> <delta(sigma_i, sigma_j)>


def enumerate_potts_equilibrium(K: int, n: int, J: float, kT: float, probes=()) -> ExactEquilibrium:
    """Exact Boltzmann averages of the open chain, weight exp(J * #aligned bonds / kT)."""
    if K < 1 or n < 1:
        raise ValueError("need K >= 1 and n >= 1")
    total_states = K**n
    if total_states > MAX_ENUMERATION:
        raise TooLarge(f"K**n = {total_states} exceeds {MAX_ENUMERATION}")
    probes = [tuple(p) for p in probes]
    powers = K ** np.arange(n - 1, -1, -1, dtype=np.int64)
    Z = 0.0
    sM = sM2 = sM4 = 0.0
    s_same = np.zeros(len(probes))
    chunk = 1 << 18
    for start in range(0, total_states, chunk):
        idx = np.arange(start, min(start + chunk, total_states), dtype=np.int64)
        digits = (idx[:, None] // powers[None, :]) % K
        aligned = (digits[:, 1:] == digits[:, :-1]).sum(axis=1)
        # shift by the ground-state energy to keep the exponent <= 0
        w = np.exp(J * (aligned - (n - 1)) / kT)
        counts = np.stack([(digits == k).sum(axis=1) for k in range(K)], axis=1)
        if K >= 2:
            m2 = (K * (counts.astype(float) ** 2).sum(axis=1) / n**2 - 1.0) / (K - 1)
            m2 = np.clip(m2, 0.0, None)
        else:
            m2 = np.ones(idx.size)
        Z += w.sum()
        sM += (w * np.sqrt(m2)).sum()
        sM2 += (w * m2).sum()
        sM4 += (w * m2 * m2).sum()
        for p, (i, j) in enumerate(probes):
            s_same[p] += (w * (digits[:, i] == digits[:, j])).sum()
    same = {pr: float(s_same[p] / Z) for p, pr in enumerate(probes)}
    corr = {pr: (K * v - 1.0) / (K - 1) if K >= 2 else 1.0 for pr, v in same.items()}
    return ExactEquilibrium(K, n, J, kT, sM / Z, sM2 / Z, sM4 / Z, corr, same)


@dataclass
class AbsorptionDistribution:
    """Exact outcome law of one derivation.

    For ``t = 0`` outcomes are the length-``N_max`` sentences at which growth
    stops; for ``t > 0`` they are completed (all-terminal) sentences of length
    at most ``N_max``, and ``truncated_mass`` is the probability of outgrowing it.
    Keys are tuples of symbol indices.
    """

    params: ModelParams
    N_max: int
    probabilities: dict
    truncated_mass: float = 0.0

    def total(self) -> float:
        return float(sum(self.probabilities.values()))


def _transitions(state: tuple, p: ModelParams) -> dict:
    """One-step law from ``state`` (cells coded +k non-terminal, -k terminal)."""
    K = p.K
    out: dict = {}

    def put(s, w):
        if w > 0.0:
            out[s] = out.get(s, 0.0) + w

    nts = [i for i, c in enumerate(state) if c > 0]
    w_site = 1.0 / len(nts)
    child = [[0.0] * (K + 1) for _ in range(K + 1)]
    for k in range(1, K + 1):
        for y in range(1, K + 1):
            child[k][y] = 1.0 - (K - 1) * p.epsilon / K if y == k else p.epsilon / K
    for i in nts:
        k = state[i]
        put(state[:i] + (-k,) + state[i + 1:], w_site * p.q * p.t)
        w_branch = w_site * p.q * (1.0 - p.t)
        for y in range(1, K + 1):
            for z in range(1, K + 1):
                put(state[:i] + (y, z) + state[i + 1:], w_branch * child[k][y] * child[k][z])
        w_ctx = w_site * (1.0 - p.q)
        if K < 2:
            put(state, w_ctx)
            continue
        nb = [abs(state[i - 1])] if i > 0 else []
        if i < len(state) - 1:
            nb.append(abs(state[i + 1]))
        for j in range(1, K + 1):
            if j == k:
                continue
            dE = p.J * sum((k == s) - (j == s) for s in nb)
            a = 1.0 if dE <= 0 else math.exp(-dE / p.kT)
            put(state[:i] + (j,) + state[i + 1:], w_ctx / (K - 1) * a)
            put(state, w_ctx / (K - 1) * (1.0 - a))
    return out


def absorption_distribution(params: ModelParams, N_max: int) -> AbsorptionDistribution:
    """Solve the absorbing generation chain exactly by a dense linear solve."""
    p = params
    if p.q <= 0:
        raise ValueError("q = 0 never grows or terminates")
    if N_max < 1:
        raise ValueError("N_max must be >= 1")
    growing = p.t == 0

    def kind(s):
        if growing:
            return "absorb" if len(s) >= N_max else "transient"
        if len(s) > N_max:
            return "lost"
        if all(c < 0 for c in s):
            return "absorb"
        return "transient"

    start = {(k,): 1.0 / p.K for k in range(1, p.K + 1)}
    index: dict = {}
    rows: list = []
    frontier = list(start)
    for s in frontier:
        index[s] = len(index)
    while frontier:
        nxt = []
        for s in frontier:
            trans = _transitions(s, p)
            rows.append(trans)
            for s2 in trans:
                if kind(s2) == "transient" and s2 not in index:
                    if len(index) >= MAX_TRANSIENT:
                        raise TooLarge(f"more than {MAX_TRANSIENT} transient states")
                    index[s2] = len(index)
                    nxt.append(s2)
        frontier = nxt
    n_tr = len(index)
    outcomes: dict = {}
    Q = np.zeros((n_tr, n_tr))
    R_cols: dict = {}
    for s, r in zip(index, rows):
        a = index[s]
        for s2, w in r.items():
            kd = kind(s2)
            if kd == "transient":
                Q[a, index[s2]] += w
            else:
                key = "lost" if kd == "lost" else tuple(abs(c) for c in s2)
                col = R_cols.setdefault(key, np.zeros(n_tr))
                col[a] += w
    pi0 = np.zeros(n_tr)
    for s, w in start.items():
        pi0[index[s]] = w
    # expected visits h solve h (I - Q) = pi0; outcome law is h R
    h = np.linalg.solve((np.eye(n_tr) - Q).T, pi0)
    lost = 0.0
    for key, col in R_cols.items():
        v = float(h @ col)
        if key == "lost":
            lost = v
        elif v > 0:
            outcomes[key] = outcomes.get(key, 0.0) + v
    if lost > TRUNCATION_TOL:
        raise TruncationLoss(f"probability {lost:.3g} escapes beyond N_max={N_max}")
    return AbsorptionDistribution(params, N_max, outcomes, lost)


@dataclass
class EquilibriumSample:
    """Time series from the growth-disabled dynamics, with its parameterization."""

    K: int
    n: int
    J: float
    kT: float
    probes: tuple
    series: Mapping[str, np.ndarray]


@dataclass
class ComparisonReport:
    passed: bool
    tv: float | None = None
    z_scores: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)


def batch_means_se(x: np.ndarray, n_batches: int = 50) -> float:
    """Standard error of the mean of a correlated series by non-overlapping batches."""
    x = np.asarray(x, dtype=float)
    b = x.size // n_batches
    if b < 1:
        raise ValueError("series shorter than the number of batches")
    means = x[: b * n_batches].reshape(n_batches, b).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


def compare_empirical(dist, data, *, tv_threshold: float = 0.02, z_threshold: float = 3.0) -> ComparisonReport:
    """Compare an exact reference with simulated data.

    ``dist`` is an :class:`AbsorptionDistribution` (``data``: sentences or a
    mapping outcome -> count; scored by total-variation distance) or an
    :class:`ExactEquilibrium` (``data``: :class:`EquilibriumSample`; scored by
    z-scores of ``M2`` and ``same`` against batch-means standard errors).
    """
    if isinstance(dist, AbsorptionDistribution):
        if isinstance(data, Mapping):
            counts = Counter({tuple(k): int(v) for k, v in data.items()})
        else:
            counts = Counter()
            for s in data:
                sym = s.symbols if isinstance(s, SentenceState) else np.asarray(s)
                counts[tuple(int(v) for v in sym)] += 1
        n = sum(counts.values())
        if n == 0:
            raise ParameterMismatch("no samples to compare")
        if dist.params.t == 0 and any(len(k) != dist.N_max for k in counts):
            raise ParameterMismatch(f"samples are not of length N_max={dist.N_max}")
        keys = set(counts) | set(dist.probabilities)
        tv = 0.5 * sum(abs(counts.get(k, 0) / n - dist.probabilities.get(k, 0.0)) for k in keys)
        return ComparisonReport(tv < tv_threshold, tv=tv, details={"samples": n})
    if isinstance(dist, ExactEquilibrium):
        if not isinstance(data, EquilibriumSample):
            raise ParameterMismatch("equilibrium comparison needs an EquilibriumSample")
        if (data.K, data.n) != (dist.K, dist.n) or not (
            math.isclose(data.J, dist.J) and math.isclose(data.kT, dist.kT)
        ):
            raise ParameterMismatch("sample and reference differ in (K, n, J, kT)")
        if not data.series or any(len(v) == 0 for v in data.series.values()):
            raise ParameterMismatch("empty series")
        exact = {"M2": dist.mean_M2, "M4": dist.mean_M4}
        if data.probes in dist.same:
            exact["same"] = dist.same[data.probes]
        z = {}
        details = {}
        for name, x in data.series.items():
            if name not in exact:
                raise ParameterMismatch(f"no exact value for statistic {name!r}")
            mean = float(np.mean(x))
            se = batch_means_se(x)
            z[name] = (mean - exact[name]) / se if se > 0 else (0.0 if mean == exact[name] else math.inf)
            details[name] = {"mean": mean, "se": se, "exact": exact[name]}
        return ComparisonReport(all(abs(v) <= z_threshold for v in z.values()), z_scores=z, details=details)
    raise ParameterMismatch(f"unsupported reference type {type(dist).__name__}")


def check_equilibrium(
    K: int = 2,
    n: int = 12,
    J: float = 1.0,
    kT: float = 1.0,
    sweeps: int = 100_000,
    burn_in: int = 1000,
    seed: int = 0,
    dynamics: Callable | None = None,
    z_threshold: float = 3.0,
) -> ComparisonReport:
    """Run the growth-disabled context dynamics and compare with enumeration.

    ``dynamics(symbols, K, J, kT, n_sweeps, i, j, rng) -> (m2, same)`` defaults
    to the engine's kernel; tests substitute broken variants as negative controls.
    """
    if dynamics is None:
        from .kernels import context_sweeps_measure as dynamics
    from .engine import sample_rng
    from .observables import probe_sites

    probes = probe_sites(n)
    rng = sample_rng(seed, 0)
    sym = 1 + (rng.random(n) * K).astype(np.int64)
    dynamics(sym, K, float(J), float(kT), burn_in, probes[0], probes[1], rng)
    m2, same = dynamics(sym, K, float(J), float(kT), sweeps, probes[0], probes[1], rng)
    sample = EquilibriumSample(K, n, J, kT, probes, {"M2": m2, "same": same})
    exact = enumerate_potts_equilibrium(K, n, J, kT, probes=[probes])
    return compare_empirical(exact, sample, z_threshold=z_threshold)


def check_absorption(
    params: ModelParams | None = None,
    N_max: int = 3,
    runs: int = 100_000,
    seed: int = 0,
    tv_threshold: float = 0.02,
) -> ComparisonReport:
    """Empirical outcome law of the engine against :func:`absorption_distribution`."""
    from .engine import SamplingProtocol, iter_ensemble

    if params is None:
        params = ModelParams(K=2, J=1.0, q=0.5, t=0.0, epsilon=0.5, kT=1.0)
    dist = absorption_distribution(params, N_max)
    proto = SamplingProtocol(target_N=N_max, samples=runs, seed=seed)
    counts: Counter = Counter()
    for s in iter_ensemble(params, proto):
        counts[tuple(int(v) for v in s.symbols)] += 1
    return compare_empirical(dist, counts, tv_threshold=tv_threshold)
