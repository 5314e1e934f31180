"""Stochastic generation loop: single steps, fixed-length growth, chained streams
and seeded ensembles."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import kernels
from .model import (
    ModelParams,
    ProposedFlip,
    RuleKind,
    SentenceState,
    delta_energy,
    metropolis_accept,
    sample_branch_children,
    sample_context_target,
    sample_rule,
)

GENERATOR_NAME = "numpy.PCG64/SeedSequence(seed, spawn_key=(sample,))"


class EarlyTermination(RuntimeError):
    """Every cell turned terminal before the target length was reached."""


class RunawayGrowth(RuntimeError):
    """A single sentence outgrew the hard length cap."""


class OutcomeKind(enum.Enum):
    EMITTED = kernels.OUT_EMITTED
    BRANCHED = kernels.OUT_BRANCHED
    FLIP_ACCEPTED = kernels.OUT_FLIP_ACCEPTED
    FLIP_REJECTED = kernels.OUT_FLIP_REJECTED
    NOOP = kernels.OUT_NOOP


@dataclass(frozen=True)
class StepOutcome:
    kind: OutcomeKind
    site: int | None = None


@dataclass(frozen=True)
class SamplingProtocol:
    """How many cells to grow, how many samples to take and how to seed them.

    ``complete_sentences`` only matters for ``t > 0`` streams: when true each
    sentence is derived to the end (subject to ``runaway_factor * target_N``),
    otherwise the in-progress sentence is cut once the stream covers the window.
    """

    target_N: int
    samples: int = 1
    post_growth_sweeps: int = 0
    seed: int = 0
    complete_sentences: bool = False
    runaway_factor: int = 64

    def __post_init__(self):
        if self.target_N < 2:
            raise ValueError(f"target_N must be >= 2, got {self.target_N}")
        if self.samples < 1:
            raise ValueError(f"samples must be >= 1, got {self.samples}")
        if self.post_growth_sweeps < 0:
            raise ValueError("post_growth_sweeps must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.runaway_factor < 1:
            raise ValueError("runaway_factor must be >= 1")

    @property
    def runaway_cap(self) -> int:
        return self.runaway_factor * self.target_N


def sample_rng(seed: int, index: int) -> np.random.Generator:
    """Independent, order-free substream for sample ``index`` of a run seeded ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def step(state: SentenceState, params: ModelParams, rng: np.random.Generator) -> StepOutcome:
    """Apply one randomly chosen production rule to ``state`` in place."""
    sites = state.nonterminal_sites
    if sites.size == 0:
        raise ValueError("no non-terminal cell left to rewrite")
    rule = sample_rule(params, rng)
    if rule is RuleKind.CONTEXT and params.K < 2:
        return StepOutcome(OutcomeKind.NOOP)
    i = int(sites[kernels.uniform_index(rng, sites.size)])
    if rule is RuleKind.TERMINAL:
        state.terminal[i] = True
        return StepOutcome(OutcomeKind.EMITTED, i)
    k = int(state.symbols[i])
    if rule is RuleKind.BRANCH:
        y, z = sample_branch_children(k, params, rng)
        state.symbols = np.concatenate([state.symbols[:i], [y, z], state.symbols[i + 1:]])
        state.terminal = np.concatenate([state.terminal[:i], [False, False], state.terminal[i + 1:]])
        return StepOutcome(OutcomeKind.BRANCHED, i)
    flip = ProposedFlip(i, k, sample_context_target(k, params, rng))
    if metropolis_accept(delta_energy(state, flip, params), params, rng):
        state.symbols[i] = flip.proposed
        return StepOutcome(OutcomeKind.FLIP_ACCEPTED, i)
    return StepOutcome(OutcomeKind.FLIP_REJECTED, i)


def _require_growth(params: ModelParams):
    if params.q <= 0:
        raise ValueError("q = 0 never grows the sentence")


def generate_fixed_length(
    params: ModelParams, protocol: SamplingProtocol, rng: np.random.Generator
) -> SentenceState:
    """Grow from a single random non-terminal until ``protocol.target_N`` cells.

    Raises :class:`EarlyTermination` if every cell becomes terminal first.
    """
    _require_growth(params)
    p = params
    status, sym, term = kernels.grow_fixed(
        p.K, float(p.J), float(p.q), float(p.t), float(p.epsilon), float(p.kT), protocol.target_N, rng
    )
    if status == kernels.STATUS_COMPLETE:
        raise EarlyTermination(f"sentence completed at length {sym.size} < {protocol.target_N}")
    if protocol.post_growth_sweeps:
        kernels.context_updates(
            sym, term, p.K, float(p.J), float(p.kT), protocol.post_growth_sweeps * protocol.target_N, rng
        )
    return SentenceState(sym, term)


def generate_text_stream(
    params: ModelParams, protocol: SamplingProtocol, rng: np.random.Generator
) -> SentenceState:
    """Chain sentences (each seeded by its predecessor's last symbol) into a window."""
    _require_growth(params)
    if params.t <= 0:
        raise ValueError("text streams need t > 0; use generate_fixed_length")
    p = params
    status, sym, term, _ = kernels.grow_stream(
        p.K, float(p.J), float(p.q), float(p.t), float(p.epsilon), float(p.kT),
        protocol.target_N, protocol.runaway_cap, protocol.complete_sentences, rng,
    )
    if status == kernels.STATUS_RUNAWAY:
        raise RunawayGrowth(f"a sentence exceeded {protocol.runaway_cap} cells")
    if protocol.post_growth_sweeps:
        kernels.context_updates(
            sym, term, p.K, float(p.J), float(p.kT), protocol.post_growth_sweeps * protocol.target_N, rng
        )
    return SentenceState(sym, term)


def generate_sample(params: ModelParams, protocol: SamplingProtocol, index: int) -> SentenceState:
    rng = sample_rng(protocol.seed, index)
    if params.t > 0:
        return generate_text_stream(params, protocol, rng)
    return generate_fixed_length(params, protocol, rng)


def iter_ensemble(params: ModelParams, protocol: SamplingProtocol) -> Iterator[SentenceState]:
    for i in range(protocol.samples):
        yield generate_sample(params, protocol, i)


def generate_ensemble(params: ModelParams, protocol: SamplingProtocol) -> list[SentenceState]:
    return list(iter_ensemble(params, protocol))


def run_context_dynamics(
    state: SentenceState,
    params: ModelParams,
    n_sweeps: int,
    probes: tuple[int, int],
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Context-rule-only Metropolis on a fixed sentence (growth disabled).

    Validation scaffolding for the equilibrium oracle. ``state`` is updated in
    place; returns per-sweep ``M**2`` and ``sigma_i == sigma_j`` series.
    """
    if state.terminal.any():
        raise ValueError("fixed-length dynamics expects an all non-terminal sentence")
    i, j = probes
    return kernels.context_sweeps_measure(
        state.symbols, params.K, float(params.J), float(params.kT), int(n_sweeps), int(i), int(j), rng
    )
