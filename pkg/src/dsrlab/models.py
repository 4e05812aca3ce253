"""Surrogate model families: almost-linear RNN, shallow PLRNN, reservoir computer.

All step maps and Jacobians broadcast over leading batch axes; parameter sets
are immutable values, so every function here is pure and thread-safe.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .trajectory import Trajectory
from .systems import DivergenceError, DIVERGENCE_BOUND


def _relu(x):
    return np.maximum(x, 0.0)


@dataclass(frozen=True)
class ALRNNParams:
    """z' = A z + W Phi(z) + h, with ReLU applied only to the last P units.

    A is diagonal (stored as a vector); the remaining M - P units pass through
    Phi unchanged, so the map is affine on each of at most 2**P sign regions.
    """

    A: np.ndarray
    W: np.ndarray
    h: np.ndarray
    P: int

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        W = np.asarray(self.W, dtype=float)
        h = np.asarray(self.h, dtype=float)
        M = A.shape[0]
        if A.ndim != 1 or W.shape != (M, M) or h.shape != (M,):
            raise ValueError("inconsistent AL-RNN shapes")
        if not (0 <= self.P <= M):
            raise ValueError(f"P must lie in [0, {M}]")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "h", h)

    @property
    def dim(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class ShPLRNNParams:
    """z' = A z + W1 relu(W2 z + h2) + h1 with an H-dimensional hidden expansion."""

    A: np.ndarray
    W1: np.ndarray
    W2: np.ndarray
    h1: np.ndarray
    h2: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        W1 = np.asarray(self.W1, dtype=float)
        W2 = np.asarray(self.W2, dtype=float)
        h1 = np.asarray(self.h1, dtype=float)
        h2 = np.asarray(self.h2, dtype=float)
        M = A.shape[0]
        H = W1.shape[1]
        if H < 1 or W1.shape != (M, H) or W2.shape != (H, M) or h1.shape != (M,) or h2.shape != (H,):
            raise ValueError("inconsistent shPLRNN shapes")
        for name, v in (("A", A), ("W1", W1), ("W2", W2), ("h1", h1), ("h2", h2)):
            object.__setattr__(self, name, v)

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @property
    def hidden(self) -> int:
        return self.W1.shape[1]


@dataclass(frozen=True)
class RCParams:
    """Leaky-tanh reservoir; only the linear readout W_out is ever trained."""

    alpha: float
    W: np.ndarray
    W_in: np.ndarray
    b: np.ndarray
    W_out: np.ndarray
    spectral_radius_target: float

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError("alpha must lie in [0, 1]")
        if self.spectral_radius_target <= 0:
            raise ValueError("spectral_radius_target must be positive")
        W = np.asarray(self.W, dtype=float)
        W_in = np.asarray(self.W_in, dtype=float)
        b = np.asarray(self.b, dtype=float)
        W_out = np.asarray(self.W_out, dtype=float)
        M = W.shape[0]
        N = W_in.shape[1]
        if W.shape != (M, M) or W_in.shape != (M, N) or b.shape != (M,) or W_out.shape != (N, M):
            raise ValueError("inconsistent reservoir shapes")
        for name, v in (("W", W), ("W_in", W_in), ("b", b), ("W_out", W_out)):
            object.__setattr__(self, name, v)

    @property
    def dim(self) -> int:
        return self.W.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.W_in.shape[1]


@dataclass(frozen=True)
class ObservationModel:
    """Linear latent-to-observation map x = B z with cached pseudo-inverse."""

    B: np.ndarray
    B_pinv: np.ndarray = None

    def __post_init__(self):
        B = np.asarray(self.B, dtype=float)
        if B.ndim != 2:
            raise ValueError("B must be a matrix")
        pinv = np.linalg.pinv(B) if self.B_pinv is None else np.asarray(self.B_pinv, dtype=float)
        if np.abs(B @ pinv @ B - B).max() > 1e-10 or np.abs(pinv @ B @ pinv - pinv).max() > 1e-10:
            raise ValueError("cached pseudo-inverse violates the Moore-Penrose axioms")
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "B_pinv", pinv)

    @property
    def n_obs(self) -> int:
        return self.B.shape[0]

    @property
    def n_latent(self) -> int:
        return self.B.shape[1]


def default_observation(n_obs: int, n_latent: int) -> ObservationModel:
    """B = [I_N | 0]: the first N latent units are read out directly."""
    if n_obs > n_latent:
        raise ValueError("need n_latent >= n_obs")
    B = np.zeros((n_obs, n_latent))
    B[:, :n_obs] = np.eye(n_obs)
    return ObservationModel(B)


def observe(om: ObservationModel, z) -> np.ndarray:
    return np.asarray(z, dtype=float) @ om.B.T


def infer_state(om: ObservationModel, x) -> np.ndarray:
    """Data-inferred latent state B^+ x, the forcing signal used in training."""
    return np.asarray(x, dtype=float) @ om.B_pinv.T


def partial_relu(z, P: int) -> np.ndarray:
    """Identity on the leading units, ReLU on the trailing P units."""
    z = np.asarray(z, dtype=float)
    if P == 0:
        return z.copy()
    out = z.copy()
    out[..., z.shape[-1] - P :] = _relu(z[..., z.shape[-1] - P :])
    return out


def alrnn_step(p: ALRNNParams, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return p.A * z + partial_relu(z, p.P) @ p.W.T + p.h


def shplrnn_step(p: ShPLRNNParams, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return p.A * z + _relu(z @ p.W2.T + p.h2) @ p.W1.T + p.h1


def rc_step(p: RCParams, r, u) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    u = np.asarray(u, dtype=float)
    pre = r @ p.W.T + u @ p.W_in.T + p.b
    return p.alpha * r + (1.0 - p.alpha) * np.tanh(pre)


def rc_readout(p: RCParams, r) -> np.ndarray:
    return np.asarray(r, dtype=float) @ p.W_out.T


def step(model, z, u=None) -> np.ndarray:
    if isinstance(model, ALRNNParams):
        return alrnn_step(model, z)
    if isinstance(model, ShPLRNNParams):
        return shplrnn_step(model, z)
    if isinstance(model, RCParams):
        return rc_step(model, z, u)
    raise TypeError(f"unknown model type {type(model).__name__}")


def _alrnn_gate(p: ALRNNParams, z) -> np.ndarray:
    """Diagonal of dPhi/dz: ones on linear units, indicator(z > 0) on ReLU units.

    The derivative of max(0, .) at exactly 0 is taken as 0 (fixed convention)."""
    z = np.asarray(z, dtype=float)
    D = np.ones_like(z)
    if p.P > 0:
        D[..., z.shape[-1] - p.P :] = (z[..., z.shape[-1] - p.P :] > 0).astype(float)
    return D


def model_jacobian(model, z, u=None) -> np.ndarray:
    """One-step Jacobian d step / d z at a state (off switching boundaries for
    the piecewise-linear families)."""
    if isinstance(model, ALRNNParams):
        D = _alrnn_gate(model, z)
        return np.diag(model.A) + model.W * D[..., None, :]
    if isinstance(model, ShPLRNNParams):
        z = np.asarray(z, dtype=float)
        a = z @ model.W2.T + model.h2
        D = (a > 0).astype(float)
        return np.diag(model.A) + (model.W1 * D[..., None, :]) @ model.W2
    if isinstance(model, RCParams):
        r = np.asarray(z, dtype=float)
        if u is None:
            raise ValueError("the reservoir Jacobian needs the input u")
        pre = r @ model.W.T + np.asarray(u, dtype=float) @ model.W_in.T + model.b
        g = 1.0 - np.tanh(pre) ** 2
        return model.alpha * np.eye(model.dim) + (1.0 - model.alpha) * g[..., :, None] * model.W
    raise TypeError(f"unknown model type {type(model).__name__}")


def rc_closed_loop_jacobian(p: RCParams, r) -> np.ndarray:
    """Jacobian of the autonomous test-time map r -> rc_step(r, W_out r)."""
    r = np.asarray(r, dtype=float)
    u = rc_readout(p, r)
    pre = r @ p.W.T + u @ p.W_in.T + p.b
    g = 1.0 - np.tanh(pre) ** 2
    W_eff = p.W + p.W_in @ p.W_out
    return p.alpha * np.eye(p.dim) + (1.0 - p.alpha) * g[..., :, None] * W_eff


def _guard(z, step_idx):
    if not np.all(np.isfinite(z)) or np.any(np.abs(z) > DIVERGENCE_BOUND):
        raise DivergenceError(step_idx, z)


def generate(model, om: ObservationModel | None, z0, n_steps: int, dt: float = 1.0):
    """Free-running autoregressive roll-out.

    Returns (latent Trajectory, observed Trajectory). The reservoir runs closed
    loop with u_t = W_out r_{t-1} and observes through its own readout; the RNN
    families observe through ``om``. Divergence raises with the step index.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    z = np.asarray(z0, dtype=float).copy()
    _guard(z, 0)
    is_rc = isinstance(model, RCParams)
    if not is_rc and om is None:
        raise ValueError("RNN roll-outs need an observation model")
    Z = np.empty((n_steps, z.shape[0]))
    for t in range(n_steps):
        if is_rc:
            z = rc_step(model, z, rc_readout(model, z))
        else:
            z = step(model, z)
        _guard(z, t + 1)
        Z[t] = z
    X = rc_readout(model, Z) if is_rc else observe(om, Z)
    return Trajectory(Z, dt), Trajectory(X, dt)


def spectral_radius(W: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(W))))


def init_model(
    family: str,
    M: int,
    N: int,
    P: int | None = None,
    H: int | None = None,
    seed: int = 0,
    init_scheme: str = "default",
    w_gain: float = 0.4,
    rc_spectral_radius: float = 0.95,
    rc_sparsity: float = 0.1,
    rc_input_scale: float = 0.1,
    rc_alpha: float = 0.2,
    rc_bias_scale: float = 0.0,
):
    """Seeded construction of a model family.

    RNN families draw the diagonal of A uniformly from [0.5, 0.95] and the
    off-diagonal weights as Gaussians scaled by w_gain over the square root of
    the fan-in, with zero biases; the default gain keeps fresh models inside
    the stable regime so that free roll-outs stay bounded before training.
    init_scheme='integrator' instead pins the diagonal near 1 (slow linear
    units), which suits densely sampled flows where the one-step map is close
    to the identity. The reservoir gets a sparse Gaussian W rescaled to
    exactly the target spectral radius, uniform W_in, and a zero readout.
    """
    if M < 1 or N < 1:
        raise ValueError("M and N must be positive")
    if init_scheme not in ("default", "integrator"):
        raise ValueError(f"unknown init_scheme {init_scheme!r}")
    rng = np.random.default_rng(seed)

    def diag_part():
        if init_scheme == "integrator":
            return np.full(M, 0.99)
        return rng.uniform(0.5, 0.95, size=M)

    if family == "alrnn":
        P = 3 if P is None else P
        if not (0 <= P <= M):
            raise ValueError(f"P must lie in [0, {M}]")
        A = diag_part()
        W = rng.standard_normal((M, M)) * (w_gain / np.sqrt(M))
        return ALRNNParams(A, W, np.zeros(M), P)
    if family == "shplrnn":
        H = 50 if H is None else H
        if H < 1:
            raise ValueError("H must be >= 1")
        A = diag_part()
        W1 = rng.standard_normal((M, H)) * (w_gain / np.sqrt(H))
        W2 = rng.standard_normal((H, M)) * (w_gain / np.sqrt(M))
        return ShPLRNNParams(A, W1, W2, np.zeros(M), np.zeros(H))
    if family == "rc":
        density = rc_sparsity
        while True:
            mask = rng.random((M, M)) < density
            W = rng.standard_normal((M, M)) * mask
            rho = spectral_radius(W)
            if rho > 1e-12:
                break
            if density >= 1.0:
                raise ValueError("reservoir draw has zero spectral radius")
            density = min(1.0, 2 * density)  # tiny sparse draws can be nilpotent
        W = W * (rc_spectral_radius / rho)
        W_in = rng.uniform(-1.0, 1.0, size=(M, N)) * rc_input_scale
        b = rng.uniform(-1.0, 1.0, size=M) * rc_bias_scale
        return RCParams(rc_alpha, W, W_in, b, np.zeros((N, M)), rc_spectral_radius)
    raise ValueError(f"unknown family {family!r}; expected alrnn, shplrnn, or rc")


# ---------------------------------------------------------------------------
# Checkpoints


def _meta(seed):
    return {"created_unix": time.time(), "seed": seed}


def save_checkpoint(model, path, om: ObservationModel | None = None, seed: int | None = None, extra: dict | None = None):
    """Self-describing JSON checkpoint: family tag, dimensions, row-major weights."""
    doc = {"meta": {**_meta(seed), **(extra or {})}}
    if isinstance(model, ALRNNParams):
        doc.update(
            family="alrnn", M=model.dim, P=model.P,
            A=model.A.tolist(), W=model.W.ravel().tolist(), h=model.h.tolist(),
        )
    elif isinstance(model, ShPLRNNParams):
        doc.update(
            family="shplrnn", M=model.dim, H=model.hidden,
            A=model.A.tolist(), W1=model.W1.ravel().tolist(), W2=model.W2.ravel().tolist(),
            h1=model.h1.tolist(), h2=model.h2.tolist(),
        )
    elif isinstance(model, RCParams):
        doc.update(
            family="rc", M=model.dim, N=model.n_inputs, alpha=model.alpha,
            spectral_radius_target=model.spectral_radius_target,
            W=model.W.ravel().tolist(), W_in=model.W_in.ravel().tolist(),
            b=model.b.tolist(), W_out=model.W_out.ravel().tolist(),
        )
    else:
        raise TypeError(f"unknown model type {type(model).__name__}")
    if om is not None:
        doc["observation"] = {"N": om.n_obs, "M": om.n_latent, "B": om.B.ravel().tolist()}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)


def load_checkpoint(path):
    """Returns (model, observation_model_or_None, meta)."""
    with open(path) as fh:
        doc = json.load(fh)
    fam = doc["family"]
    if fam == "alrnn":
        M = doc["M"]
        model = ALRNNParams(np.array(doc["A"]), np.array(doc["W"]).reshape(M, M), np.array(doc["h"]), doc["P"])
    elif fam == "shplrnn":
        M, H = doc["M"], doc["H"]
        model = ShPLRNNParams(
            np.array(doc["A"]), np.array(doc["W1"]).reshape(M, H),
            np.array(doc["W2"]).reshape(H, M), np.array(doc["h1"]), np.array(doc["h2"]),
        )
    elif fam == "rc":
        M, N = doc["M"], doc["N"]
        model = RCParams(
            doc["alpha"], np.array(doc["W"]).reshape(M, M), np.array(doc["W_in"]).reshape(M, N),
            np.array(doc["b"]), np.array(doc["W_out"]).reshape(N, M), doc["spectral_radius_target"],
        )
    else:
        raise ValueError(f"unknown family {fam!r} in checkpoint")
    om = None
    if "observation" in doc:
        o = doc["observation"]
        om = ObservationModel(np.array(o["B"]).reshape(o["N"], o["M"]))
    return model, om, doc.get("meta", {})
