"""Dynamics analysis of spike logs.

Everything here is a pure function of a :class:`~loopsim.core.SpikeLog`:
avalanche decomposition on a binned population signal, discrete power-law
fitting (maximum likelihood with a Kolmogorov-Smirnov cutoff scan),
branching ratio, population synchrony, and spectral band power.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import (
    InsufficientDataError,
    ParameterError,
    SimTime,
    SpikeLog,
    UndefinedIndexError,
)

__all__ = [
    "AvalancheSet",
    "PowerLawFit",
    "default_bin_width",
    "detect_avalanches",
    "fit_power_law",
    "branching_ratio",
    "synchrony_index",
    "band_power",
    "population_rate",
]


@dataclass
class AvalancheSet:
    """Maximal runs of consecutive non-empty bins: one size (total spikes)
    and one duration (bin count) per run."""

    sizes: np.ndarray
    durations: np.ndarray
    bin_width: SimTime

    def __len__(self) -> int:
        return len(self.sizes)


@dataclass
class PowerLawFit:
    """Discrete power-law tail fit p(x) ~ x^-alpha for x >= xmin."""

    alpha: float
    xmin: int
    n_tail: int
    ks: float


def default_bin_width(log: SpikeLog) -> SimTime:
    """Mean inter-spike interval of the whole log (standard avalanche
    binning convention); 1 ps when degenerate."""
    if len(log) < 2:
        return 1
    t = np.sort(log.times)
    isi = float(np.diff(t).mean())
    return max(int(round(isi)), 1)


def _bin_runs(log: SpikeLog, bin_width: SimTime) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Occupied bins, their spike counts, and run-start flags (a run breaks
    where occupied bins are not adjacent)."""
    if bin_width <= 0:
        raise ParameterError(f"bin_width must be positive, got {bin_width}")
    bins = log.times // bin_width
    occupied, counts = np.unique(bins, return_counts=True)
    if len(occupied) == 0:
        return occupied, counts, np.empty(0, dtype=bool)
    starts = np.empty(len(occupied), dtype=bool)
    starts[0] = True
    starts[1:] = np.diff(occupied) > 1
    return occupied, counts, starts


def detect_avalanches(log: SpikeLog, bin_width: SimTime) -> AvalancheSet:
    """Bin the population spike train and cut it into avalanches: maximal
    runs of consecutive non-empty bins.  Size is the total spike count of a
    run, duration its bin count."""
    occupied, counts, starts = _bin_runs(log, bin_width)
    if len(occupied) == 0:
        empty = np.empty(0, dtype=np.int64)
        return AvalancheSet(sizes=empty, durations=empty.copy(), bin_width=bin_width)
    run_id = np.cumsum(starts) - 1
    n_runs = run_id[-1] + 1
    sizes = np.bincount(run_id, weights=counts).astype(np.int64)
    first = np.flatnonzero(starts)
    last = np.append(first[1:], len(occupied)) - 1
    durations = (occupied[last] - occupied[first] + 1).astype(np.int64)
    assert len(sizes) == n_runs
    return AvalancheSet(sizes=sizes, durations=durations, bin_width=bin_width)


def _mle_alpha(tail: np.ndarray, xmin: int) -> float:
    if tail[0] == tail[-1]:  # sorted: a point mass has no exponent
        raise InsufficientDataError(
            f"degenerate tail at xmin={xmin}: all {len(tail)} samples equal {tail[0]}"
        )
    denom = float(np.log(tail / (xmin - 0.5)).sum())
    if denom <= 0.0:
        raise InsufficientDataError(f"degenerate tail at xmin={xmin}: log-sum {denom}")
    return 1.0 + len(tail) / denom

MIN_TAIL = 50


def _ks_distance(tail_sorted: np.ndarray, alpha: float, xmin: int) -> float:
    """Two-sided Kolmogorov-Smirnov distance against the fitted discrete
    model.  In the half-integer continuum approximation the model mass of
    integer k spans [k-1/2, k+1/2), so P(X <= k) is the continuum CDF at
    k + 1/2; comparing at those offsets keeps a perfect discrete fit at the
    sampling-noise floor."""
    values, counts = np.unique(tail_sorted, return_counts=True)
    cum = np.cumsum(counts)
    n = cum[-1]
    ecdf_hi = cum / n
    ecdf_lo = (cum - counts) / n
    scale = xmin - 0.5
    model_hi = 1.0 - ((values + 0.5) / scale) ** (1.0 - alpha)
    model_lo = 1.0 - ((values - 0.5) / scale) ** (1.0 - alpha)
    return float(
        np.maximum(np.abs(ecdf_hi - model_hi), np.abs(ecdf_lo - model_lo)).max()
    )


def fit_power_law(
    samples: Sequence[int], xmin: Optional[int] = None, max_candidates: int = 256
) -> PowerLawFit:
    """Discrete maximum-likelihood power-law fit.

    alpha = 1 + n / sum(ln(x_i / (xmin - 1/2))) over the tail x >= xmin.
    With ``xmin`` unset, candidate cutoffs are scanned and the one with the
    smallest Kolmogorov-Smirnov distance wins (large candidate sets are
    thinned to ``max_candidates`` quantile-spaced values).  Requires at
    least 50 tail samples.
    """
    x = np.asarray(samples, dtype=np.int64)
    if len(x) and x.min() < 1:
        raise ParameterError("power-law samples must be positive integers")
    if xmin is not None:
        tail = np.sort(x[x >= xmin])
        if len(tail) < MIN_TAIL:
            raise InsufficientDataError(
                f"{len(tail)} samples >= xmin={xmin}; need at least {MIN_TAIL}"
            )
        alpha = _mle_alpha(tail, xmin)
        return PowerLawFit(
            alpha=alpha, xmin=int(xmin), n_tail=len(tail),
            ks=_ks_distance(tail, alpha, xmin),
        )

    xs = np.sort(x)
    candidates = np.unique(xs)
    # a candidate needs MIN_TAIL samples at or above it
    candidates = candidates[np.searchsorted(xs, candidates) <= len(xs) - MIN_TAIL]
    if len(candidates) == 0:
        raise InsufficientDataError(
            f"no cutoff leaves {MIN_TAIL} tail samples (n={len(xs)})"
        )
    if len(candidates) > max_candidates:
        idx = np.unique(np.linspace(0, len(candidates) - 1, max_candidates).astype(int))
        candidates = candidates[idx]
    best: Optional[PowerLawFit] = None
    for c in candidates:
        tail = xs[np.searchsorted(xs, c):]
        try:
            alpha = _mle_alpha(tail, int(c))
        except InsufficientDataError:
            continue
        ks = _ks_distance(tail, alpha, int(c))
        if best is None or ks < best.ks:
            best = PowerLawFit(alpha=alpha, xmin=int(c), n_tail=len(tail), ks=ks)
    if best is None:
        raise InsufficientDataError("every candidate cutoff was degenerate")
    return best


def branching_ratio(log: SpikeLog, bin_width: SimTime) -> float:
    """Mean of (spikes in bin t+1) / (spikes in bin t) over adjacent bin
    pairs anchored inside avalanches; 1.0 marks the critical point.

    Every in-avalanche bin except the final occupied bin of the record
    contributes one pair; a successor bin that is empty counts as ratio 0
    (the avalanche's death step), which keeps the estimator unbiased for a
    branching process instead of conditioning on survival.
    """
    occupied, counts, starts = _bin_runs(log, bin_width)
    if len(occupied) < 2 or not (~starts[1:]).any():
        raise InsufficientDataError("no avalanche with duration >= 2")
    adjacent = np.diff(occupied) == 1
    next_counts = np.where(adjacent, counts[1:], 0)
    ratios = next_counts / counts[:-1]
    return float(ratios.mean())


def _binned_counts(
    log: SpikeLog, bin_width: SimTime, neuron_ids: np.ndarray
) -> np.ndarray:
    """Per-neuron binned spike counts over the log's time extent
    (neurons x bins)."""
    t0 = int(log.times.min()) // bin_width
    t1 = int(log.times.max()) // bin_width
    n_bins = t1 - t0 + 1
    index = {int(nid): i for i, nid in enumerate(neuron_ids)}
    mat = np.zeros((len(neuron_ids), n_bins))
    rows = np.array([index.get(int(nid), -1) for nid in log.neurons])
    keep = rows >= 0
    cols = (log.times[keep] // bin_width - t0).astype(int)
    np.add.at(mat, (rows[keep], cols), 1.0)
    return mat


def synchrony_index(
    log: SpikeLog, bin_width: SimTime, neuron_ids: Optional[Sequence[int]] = None
) -> float:
    """Population coherence chi: variance of the mean binned signal over
    the mean single-train variance, square-rooted.

    1 for identical trains; approaches 0 like 1/sqrt(n) for independent
    trains.  Raises for silent or variance-free inputs.
    """
    if bin_width <= 0:
        raise ParameterError(f"bin_width must be positive, got {bin_width}")
    if len(log) == 0:
        raise UndefinedIndexError("empty spike log")
    ids = (
        np.unique(log.neurons)
        if neuron_ids is None
        else np.asarray(sorted(set(int(i) for i in neuron_ids)))
    )
    if len(ids) < 2:
        raise UndefinedIndexError("need at least 2 neurons")
    if neuron_ids is not None and not np.isin(log.neurons, ids).any():
        raise UndefinedIndexError("selected subset is silent")
    mat = _binned_counts(log, bin_width, ids)
    mean_var = float(mat.var(axis=1).mean())
    if mean_var == 0.0:
        raise UndefinedIndexError("no variance in any train at this bin width")
    pop = mat.mean(axis=0)
    return math.sqrt(float(pop.var()) / mean_var)


def population_rate(log: SpikeLog, bin_width: SimTime) -> tuple[np.ndarray, np.ndarray]:
    """Total spike count per bin over the log extent; returns (bin start
    times in ps, counts)."""
    if bin_width <= 0:
        raise ParameterError(f"bin_width must be positive, got {bin_width}")
    if len(log) == 0:
        return np.empty(0, dtype=np.int64), np.empty(0)
    t0 = int(log.times.min()) // bin_width
    t1 = int(log.times.max()) // bin_width
    counts = np.zeros(t1 - t0 + 1)
    np.add.at(counts, (log.times // bin_width - t0).astype(int), 1.0)
    times = (np.arange(t0, t1 + 1) * bin_width).astype(np.int64)
    return times, counts


def band_power(
    log: SpikeLog,
    bin_width: SimTime,
    bands: Sequence[tuple[float, float]],
) -> list[float]:
    """Fraction of spectral power per frequency band.

    The mean-subtracted population rate is Fourier transformed; each band
    [f_lo, f_hi) gets its summed squared magnitude normalized by the total
    non-DC power.  Band edges are in Hz and every f_lo must be resolvable:
    f_lo >= 2 / record_length.
    """
    for lo, hi in bands:
        if not 0 < lo < hi:
            raise ParameterError(f"bad band ({lo}, {hi})")
    if len(log) == 0:
        return [0.0 for _ in bands]
    _, counts = population_rate(log, bin_width)
    record_s = len(counts) * bin_width * 1e-12
    for lo, hi in bands:
        if lo < 2.0 / record_s:
            raise ParameterError(
                f"band ({lo}, {hi}) Hz below resolution 2/T = {2.0 / record_s:.3g} Hz"
            )
    spec = np.fft.rfft(counts - counts.mean())
    psd = np.abs(spec) ** 2
    freqs = np.fft.rfftfreq(len(counts), d=bin_width * 1e-12)
    total = float(psd[1:].sum())
    if total == 0.0:
        return [0.0 for _ in bands]
    out = []
    for lo, hi in bands:
        mask = (freqs >= lo) & (freqs < hi)
        out.append(float(psd[mask].sum()) / total)
    return out
