"""Grid execution: one seeded ensemble per (model parameters, N) point.

Workers return plain data; the coordinator owns every file write and sorts
rows by key, so the output does not depend on the degree of parallelism.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .. import __version__
from .._accel import BACKEND
from ..engine import GENERATOR_NAME, EarlyTermination, RunawayGrowth, SamplingProtocol, generate_sample
from ..model import ModelParams
from ..observables import (
    DegenerateMoments,
    InsufficientSamples,
    MomentAccumulator,
    binder,
    chi_tilde,
    correlation,
    histogram_edges,
    mutual_information,
    susceptibility,
    zipf_from_counts,
    zipf_sentence_mean,
)
from .config import SweepConfig
from .io import (
    DUMP_COLUMNS,
    HIST_COLUMNS,
    OBS_COLUMNS,
    ZIPF_COLUMNS,
    check_writable,
    csv_text,
)

log = logging.getLogger(__name__)


def point_seed(base_seed: int, params: ModelParams, N: int) -> int:
    """64-bit seed of one grid point, a pure function of (base seed, key)."""
    key = f"{base_seed}|{params.K}|{params.J!r}|{params.q!r}|{params.t!r}|{params.epsilon!r}|{params.kT!r}|{N}"
    return int.from_bytes(hashlib.blake2b(key.encode(), digest_size=8).digest(), "little")


@dataclass
class RunRecord:
    K: int
    J: float
    q: float
    t: float
    epsilon: float
    kT: float
    N: int
    samples: int
    seed: int
    base_seed: int
    post_growth_sweeps: int
    complete_sentences: bool
    generator: str
    backend: str
    version: str
    wall_time: float
    row: dict


@dataclass
class PointResult:
    row: dict
    histogram: np.ndarray
    symbol_counts: np.ndarray
    ranked_sum: np.ndarray
    dumps: list
    record: RunRecord


def _nan_row(params: ModelParams, N: int, samples: int, seed: int, error: str) -> dict:
    row = dict(zip(["K", "J", "q", "t", "epsilon", "kT"], params.as_tuple()))
    row.update(N=N, samples=samples, seed=seed, error=error)
    for c in ("mean_M", "se_M", "chi", "chi_tilde", "binder", "corr_Gtilde", "mutual_info"):
        row[c] = float("nan")
    return row


def observable_row(params: ModelParams, acc: MomentAccumulator, seed: int) -> dict:
    row = _nan_row(params, acc.N, acc.n, seed, "")
    row.update(
        mean_M=acc.mean_M,
        se_M=acc.se_M,
        chi=susceptibility(acc),
        chi_tilde=chi_tilde(acc),
        corr_Gtilde=correlation(acc),
        mutual_info=mutual_information(acc),
    )
    try:
        row["binder"] = binder(acc)
    except DegenerateMoments as exc:
        row["error"] = f"DegenerateMoments: {exc}"
    return row


def run_point(
    params: ModelParams,
    N: int,
    samples: int,
    seed: int,
    base_seed: int = 0,
    post_growth_sweeps: int = 0,
    complete_sentences: bool = False,
    runaway_factor: int = 64,
    dump_bin: tuple | None = None,
    dump_max: int = 0,
) -> PointResult:
    """Generate ``samples`` sentences at one grid point and reduce them."""
    t0 = time.perf_counter()
    proto = SamplingProtocol(
        target_N=N, samples=samples, post_growth_sweeps=post_growth_sweeps, seed=seed,
        complete_sentences=complete_sentences, runaway_factor=runaway_factor,
    )
    acc = MomentAccumulator(params.K, N)
    dumps = []
    try:
        for i in range(samples):
            state = generate_sample(params, proto, i)
            M = acc.add(state)
            if dump_bin is not None and len(dumps) < dump_max:
                lo, hi = dump_bin
                if lo <= M < hi or (hi >= 1.0 and M >= 1.0):
                    dumps.append((i, M, state.symbols.copy()))
        row = observable_row(params, acc, seed)
    except (RunawayGrowth, EarlyTermination, InsufficientSamples) as exc:
        row = _nan_row(params, N, samples, seed, f"{type(exc).__name__}: {exc}")
        # partial ensembles never reach the output tables
        acc, dumps = MomentAccumulator(params.K, N), []
    record = RunRecord(
        *params.as_tuple(), N, samples, seed, base_seed, post_growth_sweeps, complete_sentences,
        GENERATOR_NAME, BACKEND, __version__, time.perf_counter() - t0, row,
    )
    return PointResult(row, acc.histogram.copy(), acc.symbol_counts.copy(), acc.ranked_sum.copy(), dumps, record)


def _run_task(args):
    return run_point(**args)


def point_tasks(cfg: SweepConfig) -> list[dict]:
    tasks = []
    dumping = "dumps" in cfg.artifacts and cfg.dump_bin is not None
    for params, N in cfg.points():
        tasks.append(
            dict(
                params=params, N=N, samples=cfg.samples_for(N), seed=point_seed(cfg.seed, params, N),
                base_seed=cfg.seed, post_growth_sweeps=cfg.post_growth_sweeps,
                complete_sentences=cfg.complete_sentences, runaway_factor=cfg.runaway_factor,
                dump_bin=tuple(cfg.dump_bin) if dumping else None, dump_max=cfg.dump_max if dumping else 0,
            )
        )
    return tasks


def run_sweep(cfg: SweepConfig, progress=None) -> list[PointResult]:
    """Execute every grid point; results come back in key order."""
    tasks = point_tasks(cfg)
    if cfg.parallel <= 1 or len(tasks) <= 1:
        results = []
        for k, task in enumerate(tasks):
            results.append(run_point(**task))
            if progress:
                progress(k + 1, len(tasks), results[-1].row)
        return results
    with ProcessPoolExecutor(max_workers=cfg.parallel) as pool:
        results = []
        for k, res in enumerate(pool.map(_run_task, tasks, chunksize=1)):
            results.append(res)
            if progress:
                progress(k + 1, len(tasks), res.row)
    return results


def _key(row: dict):
    return tuple(row[c] for c in ("K", "J", "q", "t", "epsilon", "kT", "N"))


def output_files(cfg: SweepConfig) -> dict:
    out = Path(cfg.out)
    names = {
        "observables": "observables.csv",
        "histograms": "histograms.csv",
        "zipf": "zipf.csv",
        "dumps": "dumps.csv",
        "runs": "runs.jsonl",
    }
    return {a: out / names[a] for a in cfg.artifacts if a in names}


def write_sweep_outputs(cfg: SweepConfig, results: list[PointResult], overwrite: bool = False) -> dict:
    """Write every requested per-point artifact; returns {artifact: path}."""
    files = output_files(cfg)
    check_writable(files.values(), overwrite)
    Path(cfg.out).mkdir(parents=True, exist_ok=True)
    results = sorted(results, key=lambda r: _key(r.row))
    texts = {}
    texts["observables"] = csv_text(OBS_COLUMNS, [r.row for r in results])
    if "histograms" in files:
        edges = histogram_edges()
        rows = []
        for r in results:
            for b, c in enumerate(r.histogram):
                rows.append(dict(kT=r.row["kT"], N=r.row["N"], bin_lo=float(edges[b]),
                                 bin_hi=float(edges[b + 1]), count=int(c)))
        texts["histograms"] = csv_text(HIST_COLUMNS, rows)
    if "zipf" in files:
        # one curve per parameter set, pooled over N
        pooled = {}
        for r in results:
            key = _key(r.row)[:-1]
            if cfg.zipf_mode == "corpus":
                pooled[key] = pooled.get(key, 0) + r.symbol_counts
            else:
                ranked, n = pooled.get(key, (0.0, 0))
                pooled[key] = (ranked + r.ranked_sum, n + int(np.sum(r.histogram)))
        rows = []
        for key in sorted(pooled):
            if cfg.zipf_mode == "corpus":
                if pooled[key].sum() == 0:
                    continue
                curve = zipf_from_counts(pooled[key])
            else:
                if pooled[key][1] == 0:
                    continue
                curve = zipf_sentence_mean(*pooled[key])
            for rank, f in curve:
                rows.append(dict(kT=key[5], rank=rank, rel_freq=f))
        texts["zipf"] = csv_text(ZIPF_COLUMNS, rows)
    if "dumps" in files:
        rows = []
        for r in results:
            for i, M, sym in r.dumps:
                rows.append(dict(K=r.row["K"], q=r.row["q"], t=r.row["t"], epsilon=r.row["epsilon"],
                                 kT=r.row["kT"], N=r.row["N"], sample=i, M=M,
                                 symbols=" ".join(str(int(s)) for s in sym)))
        texts["dumps"] = csv_text(DUMP_COLUMNS, rows)
    if "runs" in files:
        texts["runs"] = "".join(json.dumps(asdict(r.record), default=_plain) + "\n" for r in results)
    for art, path in files.items():
        path.write_text(texts[art], encoding="utf-8")
    return files


def _plain(o):
    if isinstance(o, float) and math.isnan(o):
        return None
    if hasattr(o, "item"):
        return o.item()
    raise TypeError(type(o).__name__)


__all__ = [
    "PointResult",
    "RunRecord",
    "point_seed",
    "run_point",
    "run_sweep",
    "write_sweep_outputs",
]
