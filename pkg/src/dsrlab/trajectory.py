"""Uniformly sampled multivariate time series: the common currency of the package."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Trajectory:
    """A uniformly sampled time series.

    samples: (T, N) float array, one row per time point.
    dt:      sampling interval (time units per row), > 0.
    t0:      time of the first row.
    """

    samples: np.ndarray
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim == 1:
            samples = samples[:, None]
        if samples.ndim != 2:
            raise ValueError(f"samples must be a (T, N) array, got shape {samples.shape}")
        if samples.shape[0] < 1 or samples.shape[1] < 1:
            raise ValueError(f"need T >= 1 and N >= 1, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            bad = np.argwhere(~np.isfinite(samples))[0]
            raise ValueError(f"non-finite sample at row {bad[0]}, column {bad[1]}")
        if not (self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "t0", float(self.t0))

    @property
    def n_steps(self) -> int:
        return self.samples.shape[0]

    @property
    def n_channels(self) -> int:
        return self.samples.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps)

    def channel(self, i: int) -> "Trajectory":
        """Single-channel view as a new Trajectory."""
        return Trajectory(self.samples[:, i : i + 1], self.dt, self.t0)

    def slice(self, start: int, stop: int | None = None) -> "Trajectory":
        sub = self.samples[start:stop]
        return Trajectory(sub, self.dt, self.t0 + self.dt * start)


def _format_float(v: float) -> str:
    return format(v, ".17g")


def write_csv(traj: Trajectory, path) -> None:
    """Export with header ``t,x1,...,xN``; floats at 17 significant digits (lossless round-trip)."""
    X = traj.samples
    t = traj.times
    with open(path, "w") as fh:
        fh.write("t," + ",".join(f"x{i+1}" for i in range(X.shape[1])) + "\n")
        for k in range(X.shape[0]):
            fh.write(_format_float(t[k]) + "," + ",".join(_format_float(v) for v in X[k]) + "\n")


def read_csv(path, dt: float | None = None) -> Trajectory:
    """Parse a trajectory CSV.

    Accepts the ``t,x1,...,xN`` schema written by :func:`write_csv`, or a
    headerless numeric file (every column a channel) if ``dt`` is given.
    Rejects NaN/Inf cells and non-uniform time stamps (1e-6 relative tolerance).
    """
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty file")

    first = lines[0].split(",")
    has_header = first[0].strip().lower() == "t"
    if not has_header and dt is None:
        raise ValueError(f"{path}: headerless file requires an explicit dt")

    rows = []
    start = 1 if has_header else 0
    for lineno, ln in enumerate(lines[start:], start=start + 1):
        cells = ln.split(",")
        try:
            vals = [float(c) for c in cells]
        except ValueError as exc:
            raise ValueError(f"{path}: parse failure at line {lineno}: {exc}") from None
        for col, v in enumerate(vals):
            if not np.isfinite(v):
                raise ValueError(f"{path}: non-finite value at line {lineno}, column {col + 1}")
        rows.append(vals)
    data = np.asarray(rows, dtype=float)
    if data.ndim != 2 or len({len(r) for r in rows}) != 1:
        raise ValueError(f"{path}: ragged rows")

    if has_header:
        t = data[:, 0]
        X = data[:, 1:]
        if X.shape[1] < 1:
            raise ValueError(f"{path}: no data channels")
        if len(t) > 1:
            steps = np.diff(t)
            dt_est = steps[0]
            scale = max(abs(dt_est), 1e-300)
            if np.any(np.abs(steps - dt_est) > 1e-6 * scale):
                k = int(np.argmax(np.abs(steps - dt_est)))
                raise ValueError(f"{path}: non-uniform sampling near line {k + 2}")
            if dt_est <= 0:
                raise ValueError(f"{path}: non-increasing time column")
        else:
            dt_est = dt if dt is not None else 1.0
        return Trajectory(X, float(dt_est), float(t[0]))

    return Trajectory(data, float(dt), 0.0)
