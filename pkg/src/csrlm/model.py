"""Parameters, sentence configurations and the three production-rule primitives.

Symbols carry an index ``sigma`` in ``1..K`` together with a terminal flag;
``A_k`` (non-terminal) and ``a_k`` (terminal) share the same index. The
primitive samplers wrap the scalar helpers in :mod:`csrlm.kernels`, so the
Python API and the compiled generation loop draw randomness identically.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels


class RuleKind(enum.IntEnum):
    TERMINAL = kernels.RULE_TERMINAL
    BRANCH = kernels.RULE_BRANCH
    CONTEXT = kernels.RULE_CONTEXT


@dataclass(frozen=True)
class ModelParams:
    """Full parameter set of the grammar and its Metropolis rule.

    Parameters
    ----------
    K : int
        Alphabet size (number of symbol indices).
    J : float
        Coupling constant, > 0.
    q : float
        Probability of a growth-type rule (terminal emission or branching).
    t : float
        Termination bias: emission has probability ``q*t``, branching ``q*(1-t)``.
    epsilon : float
        Child diversity; 0 copies the parent, 1 draws children uniformly.
    kT : float
        Temperature of the context rule, > 0.
    """

    K: int
    J: float = 1.0
    q: float = 0.01
    t: float = 0.0
    epsilon: float = 0.0
    kT: float = 1.0

    def __post_init__(self):
        # K = 1 is admitted only as a degenerate alphabet for the exact oracle.
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"K must be a positive integer, got {self.K!r}")
        if not self.J > 0:
            raise ValueError(f"J must be > 0, got {self.J!r}")
        if not self.kT > 0:
            raise ValueError(f"kT must be > 0, got {self.kT!r}")
        for name in ("q", "t", "epsilon"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v!r}")

    @property
    def rule_probabilities(self) -> tuple[float, float, float]:
        """(terminal, branch, context) probabilities."""
        qt = self.q * self.t
        return qt, self.q - qt, 1.0 - self.q

    def child_probabilities(self, k: int) -> np.ndarray:
        """Distribution of a branch child given parent ``k`` (index 0 is symbol 1)."""
        p = np.full(self.K, self.epsilon / self.K)
        p[k - 1] = 1.0 - (self.K - 1) * self.epsilon / self.K
        return p

    def as_tuple(self) -> tuple:
        return (self.K, self.J, self.q, self.t, self.epsilon, self.kT)


@dataclass(frozen=True)
class SymbolCell:
    index: int
    terminal: bool = False


@dataclass
class SentenceState:
    """A sentence as parallel arrays of symbol indices and terminal flags."""

    symbols: np.ndarray
    terminal: np.ndarray = field(default=None)

    def __post_init__(self):
        self.symbols = np.asarray(self.symbols, dtype=np.int64)
        if self.terminal is None:
            self.terminal = np.zeros(self.symbols.shape, dtype=bool)
        else:
            self.terminal = np.asarray(self.terminal, dtype=bool)
        if self.symbols.ndim != 1 or self.symbols.size < 1:
            raise ValueError("a sentence needs at least one cell")
        if self.terminal.shape != self.symbols.shape:
            raise ValueError("symbols and terminal flags differ in length")

    @classmethod
    def from_cells(cls, cells) -> "SentenceState":
        cells = list(cells)
        return cls([c.index for c in cells], [c.terminal for c in cells])

    def __len__(self) -> int:
        return int(self.symbols.size)

    @property
    def N(self) -> int:
        return len(self)

    @property
    def cells(self) -> list[SymbolCell]:
        return [SymbolCell(int(s), bool(f)) for s, f in zip(self.symbols, self.terminal)]

    @property
    def nonterminal_sites(self) -> np.ndarray:
        return np.flatnonzero(~self.terminal)

    def copy(self) -> "SentenceState":
        return SentenceState(self.symbols.copy(), self.terminal.copy())

    def __eq__(self, other):
        if not isinstance(other, SentenceState):
            return NotImplemented
        return np.array_equal(self.symbols, other.symbols) and np.array_equal(
            self.terminal, other.terminal
        )


@dataclass(frozen=True)
class ProposedFlip:
    site: int
    current: int
    proposed: int

    def __post_init__(self):
        if self.proposed == self.current:
            raise ValueError("a flip must change the symbol")


def sample_rule(params: ModelParams, rng: np.random.Generator) -> RuleKind:
    return RuleKind(kernels.draw_rule(rng, params.q, params.t))


def sample_branch_children(k: int, params: ModelParams, rng: np.random.Generator) -> tuple[int, int]:
    """Draw the two children of a branching ``A_k -> Y Z``, independently."""
    if not 1 <= k <= params.K:
        raise ValueError(f"parent index {k} outside 1..{params.K}")
    y = kernels.draw_child(rng, k, params.K, params.epsilon)
    z = kernels.draw_child(rng, k, params.K, params.epsilon)
    return int(y), int(z)


def sample_context_target(k: int, params: ModelParams, rng: np.random.Generator) -> int:
    """Uniform destination index among the ``K - 1`` symbols other than ``k``."""
    if params.K < 2:
        raise ValueError("context rule needs K >= 2")
    return int(kernels.draw_other(rng, k, params.K))


def delta_energy(state: SentenceState, flip: ProposedFlip, params: ModelParams) -> float:
    """Energy change of ``flip``; a missing neighbour at either end contributes 0."""
    i = flip.site
    s = state.symbols
    if s[i] != flip.current:
        raise ValueError(f"site {i} holds {s[i]}, not {flip.current}")
    left = int(s[i - 1]) if i > 0 else 0
    right = int(s[i + 1]) if i < len(s) - 1 else 0
    return float(kernels.local_delta_energy(flip.current, flip.proposed, left, right, params.J))


def acceptance_probability(dE: float, params: ModelParams) -> float:
    if dE <= 0:
        return 1.0
    return math.exp(-dE / params.kT)


def metropolis_accept(dE: float, params: ModelParams, rng: np.random.Generator) -> bool:
    return bool(kernels.metropolis(rng, float(dE), params.kT))
