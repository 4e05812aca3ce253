"""Delay-coordinate reconstruction with data-driven lag and dimension selection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .trajectory import Trajectory


@dataclass(frozen=True)
class EmbeddingSpec:
    dimension: int
    lag: int

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self.lag < 1:
            raise ValueError("lag must be a positive integer (in samples)")


def _scalar_series(series) -> np.ndarray:
    if isinstance(series, Trajectory):
        if series.n_channels != 1:
            raise ValueError(f"need a scalar series, got {series.n_channels} channels")
        return series.samples[:, 0]
    arr = np.asarray(series, dtype=float)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 1:
        raise ValueError("need a scalar series")
    return arr


def delay_embed(series, spec: EmbeddingSpec) -> Trajectory:
    """Lift a scalar series into delay coordinates, newest value first.

    Row t of the output is (y_t, y_{t-lag}, ..., y_{t-(m-1)lag}); the first row
    corresponds to input index (m-1)*lag, so the output has T - (m-1)*lag rows.
    """
    y = _scalar_series(series)
    m, lag = spec.dimension, spec.lag
    T = y.size
    span = (m - 1) * lag
    if T <= span:
        raise ValueError(f"series of length {T} too short for m={m}, lag={lag}")
    cols = [y[span - k * lag : T - k * lag] for k in range(m)]
    emb = np.stack(cols, axis=1)
    if isinstance(series, Trajectory):
        return Trajectory(emb, series.dt, series.t0 + span * series.dt)
    return Trajectory(emb, 1.0, float(span))


def autocorrelation(y: np.ndarray, max_lag: int) -> np.ndarray:
    """Biased sample autocorrelation r_0..r_max_lag via FFT."""
    y = np.asarray(y, dtype=float)
    y = y - y.mean()
    var = np.dot(y, y)
    if var <= 0:
        raise ValueError("constant series: autocorrelation undefined")
    n = y.size
    nfft = 1 << int(np.ceil(np.log2(2 * n - 1)))
    f = np.fft.rfft(y, nfft)
    acf = np.fft.irfft(f * np.conj(f), nfft)[: max_lag + 1]
    return acf / var


def select_lag(series) -> int:
    """Smallest lag at which the autocorrelation has a local minimum (its first
    trough); falls back to the first zero crossing within T/2, then to T//10."""
    y = _scalar_series(series)
    T = y.size
    if T < 50:
        raise ValueError("need at least 50 samples to select a lag")
    max_lag = T // 2
    acf = autocorrelation(y, max_lag)
    for k in range(1, max_lag - 1):
        if acf[k] < acf[k - 1] and acf[k] < acf[k + 1]:
            return k
    below = np.nonzero(acf[1:] <= 0)[0]
    if below.size:
        return int(below[0]) + 1
    return max(1, T // 10)


def _embed_matrix(y: np.ndarray, m: int, lag: int) -> np.ndarray:
    span = (m - 1) * lag
    return np.stack([y[span - k * lag : y.size - k * lag] for k in range(m)], axis=1)


def false_nearest_neighbors(series, lag: int, m_max: int = 10, ratio_threshold: float = 10.0) -> int:
    """Embedding dimension by the false-nearest-neighbor criterion.

    A neighbor pair is false when the extra coordinate gained at dimension
    m + 1 stretches its distance by more than ratio_threshold AND by more than
    a small absolute floor (1e-8 of the series scale); the floor keeps exact
    orbit revisits in noise-free periodic data, whose distances sit at machine
    precision, from producing meaningless ratios. Returns the smallest m whose
    false fraction drops below 1% (m_max if none does). Neighbor search is
    exact, with temporal neighbors within ``lag`` excluded.
    """
    y = _scalar_series(series)
    if lag < 1 or m_max < 1:
        raise ValueError("lag and m_max must be positive")
    T = y.size
    if T <= m_max * lag + 10:
        raise ValueError(f"series of length {T} too short for m_max={m_max}, lag={lag}")
    if m_max == 1:
        return 1
    theiler = lag
    floor = 1e-8 * float(y.std())
    for m in range(1, m_max):
        emb_hi = _embed_matrix(y, m + 1, lag)
        n = emb_hi.shape[0]
        emb_lo = emb_hi[:, :m]  # same alignment: newest-first shares leading coords
        extra = emb_hi[:, m]
        nn_dist = np.full(n, np.inf)
        nn_idx = np.zeros(n, dtype=np.int64)
        chunk = max(1, 4_000_000 // max(n, 1))
        for i0 in range(0, n, chunk):
            block = emb_lo[i0 : i0 + chunk]
            d2 = ((block[:, None, :] - emb_lo[None, :, :]) ** 2).sum(axis=2)
            ii = np.arange(i0, i0 + block.shape[0])[:, None]
            jj = np.arange(n)[None, :]
            d2[np.abs(jj - ii) <= theiler] = np.inf
            nn_idx[i0 : i0 + chunk] = np.argmin(d2, axis=1)
            nn_dist[i0 : i0 + chunk] = np.sqrt(d2[np.arange(block.shape[0]), nn_idx[i0 : i0 + chunk]])
        usable = np.isfinite(nn_dist)
        if not usable.any():
            continue
        jump = np.abs(extra[usable] - extra[nn_idx[usable]])
        false = (jump > ratio_threshold * nn_dist[usable]) & (jump > floor)
        if float(np.mean(false)) < 0.01:
            return m
    return m_max
