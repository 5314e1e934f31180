"""Sweep configuration: a single JSON document, optionally overridden by CLI flags.

Example::

    {
      "grid": {"K": [20], "J": [1.0], "q": [0.01], "t": [0.0], "epsilon": [0.0],
               "kT": {"start": 0.1, "stop": 1.0, "step": 0.1}, "N": [64, 128]},
      "protocol": {"samples": 1000, "post_growth_sweeps": 0, "seed": 1},
      "outputs": {"dir": "runs/k20", "artifacts": ["observables", "histograms"]},
      "parallel": 1
    }

Grid entries are a scalar, a list, or an inclusive ``{"start","stop","step"}``
range. ``samples: null`` selects the default (1000 for N <= 1024, else 200).
``outputs.zipf_mode`` is ``"sentence"`` (rank symbols within each sentence,
then average; the default) or ``"corpus"`` (pool counts over all sentences).
"""

from __future__ import annotations

import itertools
import json
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from ..model import ModelParams

OUT_ENV = "CSRLM_OUT"
GRID_KEYS = ("K", "J", "q", "t", "epsilon", "kT", "N")
ARTIFACTS = ("observables", "histograms", "zipf", "dumps", "fss", "phase_diagram", "runs")
DEFAULT_ARTIFACTS = ("observables", "histograms", "zipf", "runs")
ZIPF_MODES = ("sentence", "corpus")


class ConfigError(ValueError):
    pass


def default_samples(N: int) -> int:
    return 1000 if N <= 1024 else 200


@dataclass(frozen=True)
class SweepConfig:
    K: tuple
    J: tuple
    q: tuple
    t: tuple
    epsilon: tuple
    kT: tuple
    N: tuple
    samples: int | None = None
    post_growth_sweeps: int = 0
    seed: int = 0
    complete_sentences: bool = False
    runaway_factor: int = 64
    out: str = "csrlm-out"
    artifacts: tuple = DEFAULT_ARTIFACTS
    dump_bin: tuple | None = None
    dump_max: int = 5
    zipf_mode: str = "sentence"
    parallel: int = 1
    analysis: dict = field(default_factory=dict)

    def samples_for(self, N: int) -> int:
        return self.samples if self.samples is not None else default_samples(N)

    def points(self):
        """Every (ModelParams, N) of the grid, in sorted key order."""
        combos = itertools.product(self.K, self.J, self.q, self.t, self.epsilon, self.kT, self.N)
        out = []
        for K, J, q, t, eps, kT, N in sorted(combos):
            out.append((ModelParams(K=K, J=J, q=q, t=t, epsilon=eps, kT=kT), N))
        return out


def expand_grid(name: str, entry) -> tuple:
    if isinstance(entry, dict):
        missing = {"start", "stop", "step"} - set(entry)
        if missing:
            raise ConfigError(f"grid.{name}: range needs keys {sorted(missing)}")
        start, stop, step = (float(entry[k]) for k in ("start", "stop", "step"))
        if step <= 0:
            raise ConfigError(f"grid.{name}: step must be > 0")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        values = [round(start + i * step, 10) for i in range(max(n, 0))]
    elif isinstance(entry, (list, tuple)):
        values = list(entry)
    elif isinstance(entry, (int, float)) and not isinstance(entry, bool):
        values = [entry]
    else:
        raise ConfigError(f"grid.{name}: expected number, list or range, got {type(entry).__name__}")
    if not values:
        raise ConfigError(f"grid.{name}: grid is empty")
    cast = int if name in ("K", "N") else float
    try:
        out = []
        for v in values:
            if isinstance(v, bool) or (cast is int and float(v) != int(v)):
                raise ValueError(v)
            out.append(cast(v))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"grid.{name}: invalid value {exc}") from None
    return tuple(sorted(set(out)))


def config_from_dict(doc: dict, **overrides) -> SweepConfig:
    if not isinstance(doc, dict):
        raise ConfigError("top level must be a JSON object")
    unknown = set(doc) - {"grid", "protocol", "outputs", "parallel", "analysis"}
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    grid = doc.get("grid", {})
    bad = set(grid) - set(GRID_KEYS)
    if bad:
        raise ConfigError(f"grid: unknown keys {sorted(bad)}")
    defaults = {"J": [1.0], "t": [0.0], "epsilon": [0.0]}
    values = {}
    for name in GRID_KEYS:
        if name not in grid and name not in defaults:
            raise ConfigError(f"grid.{name}: missing")
        values[name] = expand_grid(name, grid.get(name, defaults.get(name)))
    proto = dict(doc.get("protocol", {}))
    outputs = dict(doc.get("outputs", {}))
    kw = dict(values)
    for key in ("samples", "post_growth_sweeps", "seed", "complete_sentences", "runaway_factor"):
        if key in proto:
            kw[key] = proto.pop(key)
    if proto:
        raise ConfigError(f"protocol: unknown keys {sorted(proto)}")
    if "dir" in outputs:
        kw["out"] = outputs.pop("dir")
    elif os.environ.get(OUT_ENV):
        kw["out"] = os.environ[OUT_ENV]
    if "artifacts" in outputs:
        kw["artifacts"] = tuple(outputs.pop("artifacts"))
    if "dump_bin" in outputs:
        kw["dump_bin"] = outputs.pop("dump_bin")
    if "dump_max" in outputs:
        kw["dump_max"] = outputs.pop("dump_max")
    if "zipf_mode" in outputs:
        kw["zipf_mode"] = outputs.pop("zipf_mode")
    if outputs:
        raise ConfigError(f"outputs: unknown keys {sorted(outputs)}")
    if "parallel" in doc:
        kw["parallel"] = doc["parallel"]
    if "analysis" in doc:
        kw["analysis"] = dict(doc["analysis"])
    kw.update({k: v for k, v in overrides.items() if v is not None})
    cfg = SweepConfig(**kw)
    validate(cfg)
    return cfg


def validate(cfg: SweepConfig) -> None:
    for name in GRID_KEYS:
        if not getattr(cfg, name):
            raise ConfigError(f"grid.{name}: grid is empty")
    for K, J, q, t, eps, kT in itertools.product(cfg.K, cfg.J, cfg.q, cfg.t, cfg.epsilon, cfg.kT):
        try:
            ModelParams(K=K, J=J, q=q, t=t, epsilon=eps, kT=kT)
        except ValueError as exc:
            raise ConfigError(f"grid: {exc}") from None
        if K < 2:
            raise ConfigError("grid.K: values must be >= 2")
        if q <= 0:
            raise ConfigError("grid.q: values must be > 0 for generation")
    if min(cfg.N) < 2:
        raise ConfigError("grid.N: values must be >= 2")
    if cfg.samples is not None and (not isinstance(cfg.samples, int) or cfg.samples < 2):
        raise ConfigError("protocol.samples: must be an integer >= 2 or null")
    if not isinstance(cfg.seed, int) or not 0 <= cfg.seed < 2**64:
        raise ConfigError("protocol.seed: must be an unsigned 64-bit integer")
    if not isinstance(cfg.post_growth_sweeps, int) or cfg.post_growth_sweeps < 0:
        raise ConfigError("protocol.post_growth_sweeps: must be a non-negative integer")
    if not isinstance(cfg.parallel, int) or cfg.parallel < 1:
        raise ConfigError("parallel: must be a positive integer")
    unknown = set(cfg.artifacts) - set(ARTIFACTS)
    if unknown:
        raise ConfigError(f"outputs.artifacts: unknown {sorted(unknown)}; choose from {list(ARTIFACTS)}")
    if cfg.zipf_mode not in ZIPF_MODES:
        raise ConfigError(f"outputs.zipf_mode: choose from {list(ZIPF_MODES)}")
    if cfg.dump_bin is not None:
        lo, hi = cfg.dump_bin
        if not 0.0 <= lo < hi <= 1.0:
            raise ConfigError("outputs.dump_bin: need 0 <= lo < hi <= 1")


def load_config(path: str | os.PathLike, **overrides) -> SweepConfig:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    try:
        return config_from_dict(doc, **overrides)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def with_overrides(cfg: SweepConfig, **overrides) -> SweepConfig:
    cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    validate(cfg)
    return cfg
