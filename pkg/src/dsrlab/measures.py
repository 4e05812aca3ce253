"""Long-term evaluation measures for reconstructions: Lyapunov spectra, fractal
dimensions, state-space overlap, spectral distance, and forecast scores."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.ndimage import gaussian_filter1d
from scipy.special import logsumexp

from .trajectory import Trajectory
from . import systems


# ---------------------------------------------------------------------------
# Lyapunov spectra


@dataclass(frozen=True)
class LyapunovSpectrum:
    """Lyapunov exponents sorted descending, plus the estimation metadata."""

    exponents: np.ndarray
    n_steps_used: int
    renorm_interval: int

    def __post_init__(self):
        exps = np.asarray(self.exponents, dtype=float)
        if exps.ndim != 1 or exps.size == 0:
            raise ValueError("exponents must be a nonempty vector")
        if not np.all(np.isfinite(exps)):
            raise ValueError("exponents must be finite")
        if np.any(np.diff(exps) > 0):
            exps = np.sort(exps)[::-1]
        object.__setattr__(self, "exponents", exps)

    @property
    def lambda_max(self) -> float:
        return float(self.exponents[0])


class TangentCollapseError(RuntimeError):
    pass


def _qr_update(Q, logsum):
    Q, R = np.linalg.qr(Q)
    d = np.diagonal(R)
    if np.any(d == 0.0):
        raise TangentCollapseError("tangent space collapsed (zero R diagonal)")
    sign = np.sign(d)
    Q = Q * sign
    logsum += np.log(np.abs(d))
    return Q


def lyapunov_spectrum(
    jacobian_provider,
    z0,
    n_steps: int,
    renorm_interval: int = 10,
    dt: float = 1.0,
) -> LyapunovSpectrum:
    """Estimate the Lyapunov spectrum along an orbit by QR-reorthonormalized
    tangent propagation.

    ``jacobian_provider(z)`` must return ``(z_next, J)`` with J the one-step
    Jacobian at z. Exponents are per step for maps (dt=1) and per unit time if
    the step represents a time interval dt.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    z = np.asarray(z0, dtype=float)
    M = z.shape[0]
    Q = np.eye(M)
    logsum = np.zeros(M)
    for t in range(n_steps):
        z, J = jacobian_provider(z)
        Q = J @ Q
        if (t + 1) % renorm_interval == 0:
            Q = _qr_update(Q, logsum)
    if n_steps % renorm_interval != 0:
        Q = _qr_update(Q, logsum)
    exps = np.sort(logsum / (n_steps * dt))[::-1]
    return LyapunovSpectrum(exps, n_steps, renorm_interval)


def _rk4_tangent_maps_batch(f, jac, X: np.ndarray, dt: float) -> np.ndarray:
    """Exact one-step tangent maps of the RK4 integrator at a batch of states (T, M)."""
    M = X.shape[-1]
    I = np.eye(M)[None]
    k1 = f(X)
    x2 = X + 0.5 * dt * k1
    k2 = f(x2)
    x3 = X + 0.5 * dt * k2
    k3 = f(x3)
    x4 = X + dt * k3
    D1 = jac(X)
    D2 = jac(x2) @ (I + 0.5 * dt * D1)
    D3 = jac(x3) @ (I + 0.5 * dt * D2)
    D4 = jac(x4) @ (I + dt * D3)
    return I + (dt / 6.0) * (D1 + 2.0 * D2 + 2.0 * D3 + D4)


def lyapunov_spectrum_ode(
    system_id: str,
    params,
    x0,
    dt: float,
    n_steps: int,
    renorm_interval: int = 10,
    transient_steps: int = 10_000,
    chunk: int = 50_000,
) -> LyapunovSpectrum:
    """Lyapunov spectrum of a registered continuous-time system, per unit time.

    Propagates tangent vectors through the exact Jacobian of the RK4 step map,
    computed in vectorized chunks along the orbit.
    """
    dim, f, jac, _ = systems.SYSTEMS[system_id]
    fv = lambda X: f(X, params)
    jv = lambda X: jac(X, params)
    x = np.asarray(x0, dtype=float).copy()
    for _ in range(transient_steps):
        x = systems.rk4_step(fv, x, dt)
    Q = np.eye(dim)
    logsum = np.zeros(dim)
    done = 0
    states = np.empty((chunk, dim))
    while done < n_steps:
        m = min(chunk, n_steps - done)
        for i in range(m):
            states[i] = x
            x = systems.rk4_step(fv, x, dt)
        maps = _rk4_tangent_maps_batch(fv, jv, states[:m], dt)
        n_blocks = m // renorm_interval
        if n_blocks:
            blk = maps[: n_blocks * renorm_interval].reshape(n_blocks, renorm_interval, dim, dim)
            prod = blk[:, 0]
            for k in range(1, renorm_interval):
                prod = blk[:, k] @ prod
            for b in range(n_blocks):
                Q = prod[b] @ Q
                Q = _qr_update(Q, logsum)
        for t in range(n_blocks * renorm_interval, m):
            Q = maps[t] @ Q
        done += m
    if n_steps % renorm_interval != 0:
        Q = _qr_update(Q, logsum)
    exps = np.sort(logsum / (n_steps * dt))[::-1]
    return LyapunovSpectrum(exps, n_steps, renorm_interval)


def lyapunov_max(jacobian_provider, z0, n_steps: int, renorm_interval: int = 10, dt: float = 1.0) -> float:
    """Largest Lyapunov exponent only, via a single renormalized tangent vector.

    Avoids the full QR factorization, which matters for high-dimensional maps
    such as large reservoirs."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    z = np.asarray(z0, dtype=float)
    rng = np.random.default_rng(0)
    v = rng.standard_normal(z.shape[0])
    v /= np.linalg.norm(v)
    logsum = 0.0
    for t in range(n_steps):
        z, J = jacobian_provider(z)
        v = J @ v
        if (t + 1) % renorm_interval == 0:
            nrm = np.linalg.norm(v)
            if nrm == 0:
                raise TangentCollapseError("tangent vector collapsed to zero")
            logsum += np.log(nrm)
            v /= nrm
    nrm = np.linalg.norm(v)
    if nrm > 0:
        logsum += np.log(nrm)
    return float(logsum / (n_steps * dt))


def kaplan_yorke(spec: LyapunovSpectrum) -> float:
    """Fractal-dimension estimate j + (sum of the first j exponents) / |lambda_{j+1}|,
    with j the largest index whose partial sum is still nonnegative."""
    lams = spec.exponents
    if lams.size == 0:
        raise ValueError("empty spectrum")
    if lams[0] < 0:
        return 0.0
    csum = np.cumsum(lams)
    if csum[-1] >= 0:
        return float(lams.size)
    j = int(np.nonzero(csum >= 0)[0][-1]) + 1  # 1-based count of leading exponents
    return float(j + csum[j - 1] / abs(lams[j]))


# ---------------------------------------------------------------------------
# State-space overlap


def _as_points(X) -> np.ndarray:
    if isinstance(X, Trajectory):
        return X.samples
    X = np.asarray(X, dtype=float)
    return X[:, None] if X.ndim == 1 else X


def dstsp_binned(X, Xhat, m_bins: int = 30) -> float:
    """KL divergence of binned occupation frequencies, truth against generated.

    The bounding box comes from the true set, padded 5% per side, with m_bins
    per dimension; generated points land in the nearest edge bin if outside.
    Empty generated bins are floored at a count of 1 so that disjoint support
    stays finite while identical inputs give exactly zero.
    """
    P = _as_points(X)
    Q = _as_points(Xhat)
    if P.shape[1] != Q.shape[1]:
        raise ValueError("X and Xhat must have the same number of channels")
    N = P.shape[1]
    if N > 5:
        raise ValueError(
            f"binning over {N} dimensions is prohibitive (m_bins^N cells); use dstsp_gmm instead"
        )
    if m_bins < 2:
        raise ValueError("need at least 2 bins per dimension")
    lo = P.min(axis=0)
    hi = P.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    lo = lo - 0.05 * span
    hi = hi + 0.05 * span
    width = (hi - lo) / m_bins

    def counts(A):
        idx = np.floor((A - lo) / width).astype(np.int64)
        np.clip(idx, 0, m_bins - 1, out=idx)
        flat = np.ravel_multi_index(idx.T, (m_bins,) * N)
        return np.bincount(flat, minlength=m_bins**N).astype(float)

    cp = counts(P)
    cq = counts(Q)
    p = cp / cp.sum()
    q = np.maximum(cq, 1.0) / cq.sum()
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def scott_sigma(X) -> float:
    """Scott-style bandwidth T**(-1/(N+4)) intended for standardized data."""
    P = _as_points(X)
    T, N = P.shape
    return float(T ** (-1.0 / (N + 4)))


def _log_gmm_density_sq(points, centers, sigma, chunk=2_000_000):
    """log sum_j exp(-||x - c_j||^2 / (2 sigma^2)) for each x, without the
    mixture-weight and Gaussian normalization constants."""
    T = centers.shape[0]
    out = np.empty(points.shape[0])
    rows = max(1, chunk // T)
    for i0 in range(0, points.shape[0], rows):
        block = points[i0 : i0 + rows]
        d2 = ((block[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        out[i0 : i0 + rows] = logsumexp(-d2 / (2.0 * sigma**2), axis=1)
    return out


def dstsp_gmm(
    X,
    Xhat,
    sigma: float | None = None,
    mode: str = "variational",
    n_mc_samples: int = 1000,
    seed: int = 0,
) -> float:
    """KL divergence between Gaussian-mixture densities with one isotropic
    component of scale sigma per trajectory point.

    mode='variational' uses the closed-form pairwise-KL approximation (exact
    zero for identical inputs); mode='monte_carlo' averages the log density
    ratio over n_mc_samples draws from the truth-side mixture.
    """
    P = _as_points(X)
    Q = _as_points(Xhat)
    if P.shape[1] != Q.shape[1]:
        raise ValueError("X and Xhat must have the same number of channels")
    if sigma is None:
        sigma = scott_sigma(P)
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if mode == "variational":
        # pairwise Gaussian KLs reduce to squared distances over 2 sigma^2
        num = _log_gmm_density_sq(P, P, sigma) - np.log(P.shape[0])
        den = _log_gmm_density_sq(P, Q, sigma) - np.log(Q.shape[0])
        return float(np.mean(num - den))
    if mode == "monte_carlo":
        rng = np.random.default_rng(seed)
        comp = rng.integers(0, P.shape[0], size=n_mc_samples)
        draws = P[comp] + sigma * rng.standard_normal((n_mc_samples, P.shape[1]))
        logp = _log_gmm_density_sq(draws, P, sigma) - np.log(P.shape[0])
        logq = _log_gmm_density_sq(draws, Q, sigma) - np.log(Q.shape[0])
        return float(np.mean(logp - logq))
    raise ValueError(f"unknown mode {mode!r}")


def w1_1d(a, b) -> float:
    """Exact Wasserstein-1 distance between two 1D empirical distributions.

    Integrates |inverse CDF difference| over the merged quantile breakpoints,
    where both inverse CDFs are piecewise constant; for equal sample sizes this
    reduces to the sorted coupling.
    """
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("empty sample")
    qa = np.arange(1, a.size + 1) / a.size
    qb = np.arange(1, b.size + 1) / b.size
    edges = np.union1d(qa, qb)
    widths = np.diff(np.concatenate(([0.0], edges)))
    mids = edges - widths / 2.0
    ia = np.minimum((mids * a.size).astype(np.int64), a.size - 1)
    ib = np.minimum((mids * b.size).astype(np.int64), b.size - 1)
    return float(np.sum(widths * np.abs(a[ia] - b[ib])))


def sliced_w1(X, Xhat, n_projections: int = 1000, delta_q: float = 1e-3, seed: int = 0) -> float:
    """Sliced Wasserstein-1 distance: average exact 1D W1 over random unit
    directions (normalized Gaussian draws, seeded).

    The per-slice integral is evaluated exactly on the merged quantile grid of
    both empirical CDFs; delta_q bounds the quantile cell width from above and
    never coarsens it, so results are independent of delta_q.
    """
    P = _as_points(X)
    Q = _as_points(Xhat)
    if P.shape[1] != Q.shape[1]:
        raise ValueError("X and Xhat must have the same number of channels")
    if not (0 < delta_q <= 0.01):
        raise ValueError("delta_q must lie in (0, 0.01]")
    N = P.shape[1]
    if N == 1:
        return w1_1d(P[:, 0], Q[:, 0])
    rng = np.random.default_rng(seed)
    total = 0.0
    for _ in range(n_projections):
        xi = rng.standard_normal(N)
        xi /= np.linalg.norm(xi)
        total += w1_1d(P @ xi, Q @ xi)
    return total / n_projections


# ---------------------------------------------------------------------------
# Spectral distance


def _normalized_power_spectrum(x: np.ndarray, smoothing_sigma: float) -> np.ndarray:
    x = x - x.mean()
    power = np.abs(np.fft.rfft(x)) ** 2
    if smoothing_sigma > 0:
        power = gaussian_filter1d(power, smoothing_sigma)
    total = power.sum()
    if total <= 0:
        raise ValueError("constant channel has an empty power spectrum")
    return power / total


def hellinger_spectral(
    X, Xhat, smoothing_sigma: float = 20.0, log_power: bool = False, use_w1: bool = False
) -> float:
    """Discrepancy in frequency content between two equally sampled series.

    Per channel: mean-removed FFT periodogram, Gaussian smoothing over
    smoothing_sigma bins, normalization to unit mass, then the Hellinger
    distance (1/sqrt(2)) * ||sqrt(f) - sqrt(g)||_2; the result is the channel
    average, in [0, 1]. log_power compares log1p spectra instead; use_w1
    replaces Hellinger with the (unbounded) 1D Wasserstein distance between
    the normalized spectra along the frequency axis. Both default off.
    """
    P = _as_points(X)
    Q = _as_points(Xhat)
    if P.shape[1] != Q.shape[1]:
        raise ValueError("X and Xhat must have the same number of channels")
    T = min(P.shape[0], Q.shape[0])
    if T < 256:
        raise ValueError("need at least 256 rows for a stable spectrum")
    P, Q = P[:T], Q[:T]
    vals = []
    freqs = np.arange(T // 2 + 1)
    for c in range(P.shape[1]):
        f = _normalized_power_spectrum(P[:, c], smoothing_sigma)
        g = _normalized_power_spectrum(Q[:, c], smoothing_sigma)
        if log_power:
            f = np.log1p(f / f.max())
            g = np.log1p(g / g.max())
            f, g = f / f.sum(), g / g.sum()
        if use_w1:
            cf = np.cumsum(f)
            cg = np.cumsum(g)
            vals.append(float(np.sum(np.abs(cf - cg))))
        else:
            vals.append(float(np.linalg.norm(np.sqrt(f) - np.sqrt(g)) / np.sqrt(2.0)))
        _ = freqs
    return float(np.mean(vals))


# ---------------------------------------------------------------------------
# Fractal dimensions from point sets


def box_counting_curve(X, eps_grid, orbit_chords: bool = False):
    """Occupied-box counts over a grid of edge lengths, via integer-grid hashing.

    orbit_chords=True treats consecutive rows as densely sampled points along
    a continuous orbit and refines each chord to sub-eps resolution before
    hashing, so the count covers the underlying curve rather than the bare
    samples. Only meaningful for temporally ordered flow data.
    """
    P = _as_points(X)
    eps_grid = np.asarray(eps_grid, dtype=float)
    lo = P.min(axis=0)
    counts = np.empty(eps_grid.size, dtype=np.int64)
    for k, eps in enumerate(eps_grid):
        if orbit_chords:
            seg = np.linalg.norm(np.diff(P, axis=0), axis=1)
            nsub = np.maximum(1, np.ceil(seg / (0.5 * eps)).astype(np.int64))
            parts = [P]
            for s in range(1, int(nsub.max())):
                mask = nsub > s
                frac = (s / nsub[mask])[:, None]
                parts.append(P[:-1][mask] * (1.0 - frac) + frac * P[1:][mask])
            pts = np.vstack(parts)
        else:
            pts = P
        idx = np.floor((pts - lo) / eps).astype(np.int64)
        counts[k] = np.unique(idx, axis=0).shape[0]
    return eps_grid, counts


def default_eps_grid(X, n_levels: int = 8, coarse_div: float = 4.0, fine_div: float = 512.0):
    P = _as_points(X)
    extent = float((P.max(axis=0) - P.min(axis=0)).max())
    if extent <= 0:
        raise ValueError("degenerate point set (zero extent)")
    return np.geomspace(extent / coarse_div, extent / fine_div, n_levels)


def _fit_slope(log_eps, log_vals, fit_levels):
    if fit_levels is None:
        fit_levels = slice(1, -1) if log_eps.size > 4 else slice(None)
    le = log_eps[fit_levels]
    lv = log_vals[fit_levels]
    if le.size < 2:
        raise ValueError("need at least two levels in the fit region")
    return float(np.polyfit(le, lv, 1)[0])


def box_counting_dim(X, eps_grid=None, fit_levels=None, orbit_chords: bool = False) -> float:
    """Box-counting dimension: negative slope of log N_eps against log eps.

    The default fit region drops the coarsest and finest level of the grid,
    where boundary effects and undersampling bend the curve.
    """
    if eps_grid is None:
        eps_grid = default_eps_grid(X)
    eps_grid = np.asarray(eps_grid, dtype=float)
    if eps_grid.size < 6:
        raise ValueError("eps_grid needs at least 6 geometric levels")
    eps, counts = box_counting_curve(X, eps_grid, orbit_chords=orbit_chords)
    if counts.max() <= 1:
        raise ValueError("degenerate point set (all samples in one box)")
    return -_fit_slope(np.log(eps), np.log(counts), fit_levels)


def correlation_curve(X, eps_grid, theiler_w: int = 0, pair_chunk: int = 4_000_000):
    """Correlation sums C(eps): fraction of point pairs closer than eps,
    excluding temporal neighbors |i - j| <= theiler_w."""
    P = _as_points(X)
    eps_grid = np.asarray(eps_grid, dtype=float)
    T = P.shape[0]
    counts = np.zeros(eps_grid.size, dtype=np.int64)
    total = 0
    rows = max(1, pair_chunk // T)
    for i0 in range(0, T, rows):
        block = P[i0 : i0 + rows]
        d2 = ((block[:, None, :] - P[None, :, :]) ** 2).sum(axis=2)
        ii = np.arange(i0, i0 + block.shape[0])[:, None]
        jj = np.arange(T)[None, :]
        valid = (jj - ii) > theiler_w
        total += int(valid.sum())
        for k, eps in enumerate(eps_grid):
            counts[k] += int(((d2 < eps * eps) & valid).sum())
    if total == 0:
        raise ValueError("Theiler window excludes every pair")
    return eps_grid, counts / total, counts


def correlation_dim(X, eps_grid=None, theiler_w: int = 0, fit_levels=None) -> float:
    """Correlation dimension: slope of log C(eps) against log eps over the
    linear region, with temporal neighbors within theiler_w excluded.

    Levels whose raw pair count falls below 100 are dropped before fitting;
    if fewer than three levels survive the grid must be coarsened.
    """
    if eps_grid is None:
        eps_grid = default_eps_grid(X, n_levels=7, fine_div=256.0)
    eps_grid = np.asarray(eps_grid, dtype=float)
    eps, C, raw = correlation_curve(X, eps_grid, theiler_w=theiler_w)
    keep = raw >= 100
    if keep.sum() < 3:
        raise ValueError(
            "fewer than 100 pairs at most scales; enlarge the smallest eps or supply more data"
        )
    eps, C = eps[keep], C[keep]
    return _fit_slope(np.log(eps), np.log(C), fit_levels)


# ---------------------------------------------------------------------------
# Forecast scores


def pointwise_error(X, Xhat, kind: str = "nrmse") -> np.ndarray:
    P = _as_points(X)
    Q = _as_points(Xhat)
    if P.shape != Q.shape:
        raise ValueError("X and Xhat must have equal shapes")
    if kind == "nrmse":
        std = P.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        return np.sqrt(np.mean(((P - Q) / std) ** 2, axis=1))
    if kind == "smape":
        denom = np.abs(P) + np.abs(Q)
        denom = np.where(denom > 0, denom, 1.0)
        return np.mean(2.0 * np.abs(P - Q) / denom, axis=1)
    raise ValueError(f"unknown error kind {kind!r}")


def vpt(X, Xhat, epsilon: float = 0.3, error_kind: str = "nrmse") -> int:
    """Valid prediction time: number of leading steps whose pointwise error
    stays below epsilon (first-crossing convention; re-entries below epsilon
    after the first crossing do not count)."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    err = pointwise_error(X, Xhat, kind=error_kind)
    above = err >= epsilon
    if not above.any():
        return int(err.size)
    return int(np.argmax(above))


def mase(X_true, X_forecast, X_insample, seasonality: int = 1) -> float:
    """Mean absolute scaled error against the seasonal-naive in-sample baseline."""
    P = _as_points(X_true)
    Q = _as_points(X_forecast)
    R = _as_points(X_insample)
    if P.shape != Q.shape:
        raise ValueError("truth and forecast must have equal shapes")
    if seasonality < 1:
        raise ValueError("seasonality must be a positive integer")
    if R.shape[0] <= seasonality:
        raise ValueError("in-sample series must be longer than the seasonality")
    naive = np.abs(R[seasonality:] - R[:-seasonality]).mean(axis=0)
    if np.any(naive == 0):
        raise ValueError("constant in-sample channel: naive error denominator is zero")
    return float(np.mean(np.abs(P - Q).mean(axis=0) / naive))


# ---------------------------------------------------------------------------
# Config and report bundles


@dataclass(frozen=True)
class MeasureConfig:
    n_bins_per_dim: int = 30
    gmm_sigma: float | None = None  # None resolves to the Scott-style rule
    n_mc_samples: int = 1000
    n_projections: int = 1000
    quantile_resolution: float = 1e-3
    smoothing_sigma: float = 20.0
    theiler_window: int = 1
    vpt_epsilon: float = 0.3
    transient_discard: int = 1000
    log_power: bool = False
    spectral_w1: bool = False

    def __post_init__(self):
        if self.n_bins_per_dim < 2 or self.n_mc_samples < 1 or self.n_projections < 1:
            raise ValueError("counts must be positive")
        if not (0 < self.quantile_resolution <= 0.01):
            raise ValueError("quantile_resolution must lie in (0, 0.01]")
        if self.smoothing_sigma < 0 or self.theiler_window < 0 or self.transient_discard < 0:
            raise ValueError("nonnegative settings required")
        if self.vpt_epsilon <= 0:
            raise ValueError("vpt_epsilon must be positive")
        if self.gmm_sigma is not None and self.gmm_sigma <= 0:
            raise ValueError("gmm_sigma must be positive when given")


@dataclass
class EvalReport:
    """Measure bundle for one reconstruction; None marks a measure not computed.

    The VPT threshold is a subjective choice, so VPT values should be compared
    only across runs sharing the same epsilon and error kind.
    """

    d_stsp_binned: float | None = None
    d_stsp_gmm: float | None = None
    sw1: float | None = None
    d_h: float | None = None
    lambda_max: float | None = None
    d_ky: float | None = None
    vpt: int | None = None
    mase: float | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.d_h is not None and not (0.0 <= self.d_h <= 1.0 + 1e-12):
            raise ValueError(f"d_h out of [0, 1]: {self.d_h}")
        if self.sw1 is not None and self.sw1 < 0:
            raise ValueError("sw1 must be nonnegative")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls(**json.loads(text))
