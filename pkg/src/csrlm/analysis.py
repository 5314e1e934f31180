"""Critical-temperature estimation, finite-size-scaling collapse and phase diagrams.

Tables are pandas DataFrames in the ``observables.csv`` layout (see
:mod:`csrlm.harness.io`); each analysis expects rows of a single model
parameter set unless stated otherwise.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

MODEL_KEYS = ["K", "J", "q", "t", "epsilon"]
BINDER_THRESHOLD = -0.05
PEAK_GROWTH = 1.5
MIN_GAMMA_OVER_NU = 0.25


class InsufficientOverlap(ValueError):
    pass


class RangeTooNarrow(ValueError):
    pass


class Method(str, enum.Enum):
    BINDER_DEPARTURE = "binder_departure"
    SUSCEPTIBILITY_PEAK = "susceptibility_peak"
    FSS_GRID = "fss_grid"


def _clean(table: pd.DataFrame, column: str) -> pd.DataFrame:
    df = table
    if "error" in df.columns:
        df = df[df["error"].fillna("").astype(str) == ""]
    df = df[np.isfinite(df[column].astype(float))]
    return df.sort_values(["N", "kT"], kind="stable")


def _size_groups(table: pd.DataFrame, column: str, Tc: float, nu: float, gamma: float, t_window):
    out = []
    for N, g in table.groupby("N", sort=True):
        T = g["kT"].to_numpy(float)
        red = (T - Tc) / Tc
        keep = np.ones(T.size, bool) if t_window is None else np.abs(red) <= t_window
        if keep.sum() < 2:
            continue
        x = N ** (1.0 / nu) * red[keep]
        y = g[column].to_numpy(float)[keep] / N ** (gamma / nu)
        o = np.argsort(x, kind="stable")
        out.append((x[o], y[o]))
    return out


def collapse_quality(
    table: pd.DataFrame,
    Tc: float,
    nu: float,
    gamma: float,
    *,
    column: str = "chi_tilde",
    t_window: float | None = None,
) -> float:
    """Variance-normalised residual of the scaling collapse of ``column``.

    Each point is rescaled to ``x = N**(1/nu) (T - Tc)/Tc``, ``y = chi~/N**(gamma/nu)``.
    Its prediction is a least-squares line through the two points bracketing
    ``x`` in every other size; points outside all other sizes' ranges are
    skipped. Returns mean squared residual divided by the variance of ``y``.
    ``t_window`` restricts rows to ``|T - Tc|/Tc <= t_window``.
    """
    groups = _size_groups(_clean(table, column), column, Tc, nu, gamma, t_window)
    if len(groups) < 3:
        raise InsufficientOverlap(f"need >= 3 sizes, have {len(groups)}")
    resid = []
    contributing = 0
    for a, (xa, ya) in enumerate(groups):
        S1 = np.zeros(xa.size)
        Sx = np.zeros(xa.size)
        Sy = np.zeros(xa.size)
        Sxx = np.zeros(xa.size)
        Sxy = np.zeros(xa.size)
        for b, (xb, yb) in enumerate(groups):
            if b == a:
                continue
            j = np.searchsorted(xb, xa, side="right") - 1
            inside = (j >= 0) & (j < xb.size - 1)
            inside |= xa == xb[-1]
            j = np.clip(j, 0, xb.size - 2)
            for jj in (j, j + 1):
                px = np.where(inside, xb[jj], 0.0)
                py = np.where(inside, yb[jj], 0.0)
                S1 += inside
                Sx += px
                Sy += py
                Sxx += px * px
                Sxy += px * py
        ok = S1 >= 2
        if not ok.any():
            continue
        contributing += 1
        S1, Sx, Sy, Sxx, Sxy = S1[ok], Sx[ok], Sy[ok], Sxx[ok], Sxy[ok]
        den = S1 * Sxx - Sx * Sx
        flat = np.abs(den) <= 1e-300
        slope = np.where(flat, 0.0, (S1 * Sxy - Sx * Sy) / np.where(flat, 1.0, den))
        pred = (Sy - slope * Sx) / S1 + slope * xa[ok]
        resid.append(ya[ok] - pred)
    if contributing < 3:
        raise InsufficientOverlap(f"only {contributing} sizes overlap in the scaling variable")
    y_all = np.concatenate([g[1] for g in groups])
    var = y_all.var()
    r = np.concatenate(resid)
    if var <= 0.0:
        return 0.0
    return float(np.mean(r * r) / var)


def grid_values(lo: float, hi: float, step: float) -> np.ndarray:
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return np.round(lo + step * np.arange(n), 10)


@dataclass(frozen=True)
class GridSpec:
    """Inclusive (lo, hi, step) ranges of the exponent search."""

    tc: tuple = (0.10, 0.50, 0.02)
    nu: tuple = (0.50, 5.00, 0.25)
    gamma: tuple = (0.50, 5.00, 0.25)

    def axes(self):
        return grid_values(*self.tc), grid_values(*self.nu), grid_values(*self.gamma)

    def as_dict(self) -> dict:
        return {"tc": list(self.tc), "nu": list(self.nu), "gamma": list(self.gamma)}


@dataclass
class ScalingResult:
    Tc: float
    nu: float
    gamma: float
    quality: float
    grid: GridSpec
    landscape: np.ndarray | None = field(default=None, repr=False)


def grid_search_exponents(
    table: pd.DataFrame,
    grid: GridSpec = GridSpec(),
    *,
    column: str = "chi_tilde",
    t_window: float | None = None,
    keep_landscape: bool = False,
) -> ScalingResult:
    """Exhaustive search of (Tc, nu, gamma) minimising :func:`collapse_quality`.

    Grid points are visited in lexicographic order and only a strictly smaller
    quality replaces the incumbent, so ties go to the smallest triple.
    """
    table = _clean(table, column)
    tcs, nus, gammas = grid.axes()
    land = np.full((tcs.size, nus.size, gammas.size), np.inf)
    best = None
    for a, tc in enumerate(tcs):
        for b, nu in enumerate(nus):
            for c, gm in enumerate(gammas):
                try:
                    qv = collapse_quality(table, tc, nu, gm, column=column, t_window=t_window)
                except InsufficientOverlap:
                    continue
                land[a, b, c] = qv
                if best is None or qv < best[3]:
                    best = (float(tc), float(nu), float(gm), qv)
    if best is None:
        raise InsufficientOverlap("no grid point has >= 3 overlapping sizes")
    return ScalingResult(*best, grid=grid, landscape=land if keep_landscape else None)


@dataclass
class TcEstimate:
    method: Method
    Tc: float | None
    uncertainty: float | None
    details: dict = field(default_factory=dict)

    @property
    def no_transition(self) -> bool:
        return self.Tc is None


def _half_spacing(T: np.ndarray, k: int) -> float:
    gaps = []
    if k > 0:
        gaps.append(T[k] - T[k - 1])
    if k < T.size - 1:
        gaps.append(T[k + 1] - T[k])
    return 0.5 * min(gaps) if gaps else float("nan")


def _largest_curve(table: pd.DataFrame, column: str):
    df = _clean(table, column)
    if df["N"].nunique() < 2:
        raise RangeTooNarrow("need at least two system sizes")
    Nmax = df["N"].max()
    g = df[df["N"] == Nmax].sort_values("kT")
    return df, Nmax, g["kT"].to_numpy(float), g[column].to_numpy(float)


def estimate_critical_temperature(
    table: pd.DataFrame,
    method: Method | str = Method.SUSCEPTIBILITY_PEAK,
    *,
    threshold: float = BINDER_THRESHOLD,
    peak_growth: float = PEAK_GROWTH,
    grid: GridSpec = GridSpec(),
    t_window: float | None = None,
    min_gamma_over_nu: float = MIN_GAMMA_OVER_NU,
) -> TcEstimate:
    """Estimate Tc from one parameter set's table.

    ``binder_departure``: highest kT of the largest-N curve with U < ``threshold``.
    ``susceptibility_peak``: interior maximum of chi for the largest N; it only
    counts as a transition if that peak exceeds the smallest size's maximum by
    ``peak_growth`` (chi of a disordered chain does not grow with N).
    ``fss_grid``: minimiser of the collapse; counts as a transition only if
    ``gamma/nu >= min_gamma_over_nu`` and Tc is interior to the grid.
    Returns ``Tc=None`` for no transition; raises :class:`RangeTooNarrow` when
    the signal sits on the edge of the scanned temperatures.
    """
    method = Method(method)
    if method is Method.BINDER_DEPARTURE:
        _, Nmax, T, U = _largest_curve(table, "binder")
        below = np.flatnonzero(U < threshold)
        if below.size == 0:
            return TcEstimate(method, None, None, {"N": int(Nmax)})
        k = int(below[-1])
        if k == T.size - 1:
            raise RangeTooNarrow(f"U < {threshold} at the highest scanned kT={T[k]}")
        return TcEstimate(method, float(T[k]), _half_spacing(T, k), {"N": int(Nmax), "U": float(U[k])})
    if method is Method.SUSCEPTIBILITY_PEAK:
        df, Nmax, T, chi = _largest_curve(table, "chi")
        k = int(np.argmax(chi))
        chi_small = df[df["N"] == df["N"].min()]["chi"].max()
        details = {"N": int(Nmax), "chi_peak": float(chi[k]), "chi_smallest_N": float(chi_small)}
        if not chi[k] >= peak_growth * chi_small:
            return TcEstimate(method, None, None, details)
        if k == 0 or k == T.size - 1:
            raise RangeTooNarrow(f"chi is maximal at the edge kT={T[k]}")
        return TcEstimate(method, float(T[k]), _half_spacing(T, k), details)
    res = grid_search_exponents(table, grid, t_window=t_window)
    details = {"nu": res.nu, "gamma": res.gamma, "quality": res.quality}
    tcs = grid.axes()[0]
    if res.gamma / res.nu < min_gamma_over_nu:
        return TcEstimate(method, None, None, details)
    if res.Tc in (tcs[0], tcs[-1]):
        raise RangeTooNarrow(f"collapse minimum at the grid edge Tc={res.Tc}")
    return TcEstimate(method, res.Tc, 0.5 * grid.tc[2], details)


@dataclass
class PhasePoint:
    axis_name: str
    axis_value: float
    method: Method
    Tc: float | None
    no_transition: bool
    note: str = ""


def build_phase_diagram(
    table: pd.DataFrame,
    axis: str,
    methods=(Method.BINDER_DEPARTURE, Method.SUSCEPTIBILITY_PEAK),
    **kwargs,
) -> list[PhasePoint]:
    """Tc (or no transition) per value of ``axis`` ('q' or 't'), per method.

    A :class:`RangeTooNarrow` at one axis value is recorded in ``note`` and
    does not abort the diagram.
    """
    if axis not in ("q", "t"):
        raise ValueError("axis must be 'q' or 't'")
    others = [k for k in MODEL_KEYS if k != axis]
    if table[others].drop_duplicates().shape[0] != 1:
        raise ValueError(f"table mixes several values of {others}; filter it first")
    out = []
    for value, g in table.groupby(axis, sort=True):
        for m in methods:
            m = Method(m)
            try:
                est = estimate_critical_temperature(g, m, **kwargs)
                out.append(PhasePoint(axis, float(value), m, est.Tc, est.no_transition))
            except (RangeTooNarrow, InsufficientOverlap) as exc:
                out.append(PhasePoint(axis, float(value), m, None, False, note=f"{type(exc).__name__}: {exc}"))
    return out


@dataclass
class PowerLawRegion:
    """Longest run of consecutive ranks whose local log-log slope lies in a band."""

    rank_lo: int
    rank_hi: int
    decades: float
    slopes: np.ndarray = field(repr=False)


def zipf_local_slopes(ranks, freqs) -> np.ndarray:
    """Slope of log f against log r between each pair of consecutive ranks."""
    r = np.log(np.asarray(ranks, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.log(np.asarray(freqs, dtype=float))
        return np.diff(f) / np.diff(r)


def zipf_power_region(ranks, freqs, slope_range=(-3.0, -0.3)) -> PowerLawRegion:
    """Widest contiguous rank interval with every local slope inside ``slope_range``.

    Width is measured in decades, ``log10(rank_hi / rank_lo)``. Returns a
    zero-width region at rank 1 when no slope qualifies.
    """
    ranks = np.asarray(ranks, dtype=float)
    s = zipf_local_slopes(ranks, freqs)
    lo, hi = slope_range
    ok = (s >= lo) & (s <= hi)
    best = (0.0, 0, 0)
    start = None
    for k in range(ok.size + 1):
        if k < ok.size and ok[k]:
            if start is None:
                start = k
            continue
        if start is not None:
            width = math.log10(ranks[k] / ranks[start])
            if width > best[0]:
                best = (width, start, k)
            start = None
    width, a, b = best
    return PowerLawRegion(int(ranks[a]) if ranks.size else 1, int(ranks[b]) if ranks.size else 1, width, s)


def histogram_mode(edges, counts) -> float:
    """Centre of the most populated bin (the typical M); ties go to the lower bin."""
    counts = np.asarray(counts)
    k = int(np.argmax(counts))
    return 0.5 * (float(edges[k]) + float(edges[k + 1]))
