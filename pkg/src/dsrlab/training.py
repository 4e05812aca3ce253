"""Training algorithms: BPTT with sparse or generalized teacher forcing,
multiple-shooting regularization, and closed-form ridge readout training.

Gradients are computed by hand (no autodiff) so that the forcing-specific
Jacobian structure — truncation through forced coordinates under sparse
forcing, the (1 - alpha) factor under interpolated forcing — is explicit
and testable against finite differences.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve as sp_solve

from .trajectory import Trajectory
from .models import (
    ALRNNParams,
    ShPLRNNParams,
    RCParams,
    ObservationModel,
    infer_state,
    partial_relu,
    rc_step,
    _relu,
)


class TrainingDivergedError(RuntimeError):
    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history or {}


@dataclass(frozen=True)
class STFConfig:
    tau: int = 25
    partial_k: int | None = None  # None resolves to the observation dimension
    sequence_length: int = 200
    learning_rate: float = 1e-3
    n_epochs: int = 100
    batch_size: int = 16
    seed: int = 0
    grad_clip: float = 10.0
    patience: int = 5
    lr_decay_at: float = 0.7  # fraction of epochs after which the rate drops
    lr_decay_factor: float = 0.1
    forcing_noise_std: float = 0.0  # noisy-teacher jitter on forcing signals
    select_by_geometry: bool = False  # keep the checkpoint with the best validation D_stsp
    eval_every: int = 50
    val_fraction: float = 0.15
    val_rollout_steps: int = 5000

    def __post_init__(self):
        if self.tau < 1:
            raise ValueError("tau must be >= 1")
        if self.sequence_length < self.tau:
            raise ValueError("sequence_length must be >= tau")
        if self.partial_k is not None and self.partial_k < 0:
            raise ValueError("partial_k must be nonnegative")
        if self.forcing_noise_std < 0:
            raise ValueError("forcing_noise_std must be nonnegative")


@dataclass(frozen=True)
class GTFConfig:
    alpha: float | None = None  # None means per-batch adaptive alpha
    sequence_length: int = 200
    learning_rate: float = 1e-3
    n_epochs: int = 100
    batch_size: int = 16
    seed: int = 0
    grad_clip: float = 10.0
    patience: int = 5
    lr_decay_at: float = 0.7
    lr_decay_factor: float = 0.1
    track_jacobian_products: bool = False
    select_by_geometry: bool = False
    eval_every: int = 50
    val_fraction: float = 0.15
    val_rollout_steps: int = 5000

    def __post_init__(self):
        if self.alpha is not None and not (0.0 <= self.alpha <= 1.0):
            raise ValueError("alpha must lie in [0, 1]")


@dataclass(frozen=True)
class MSConfig:
    subsequence_length: int = 50
    lambda_ms: float = 1.0
    learning_rate: float = 1e-3
    n_epochs: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.subsequence_length < 2:
            raise ValueError("subsequence_length must be >= 2")
        if self.lambda_ms < 0:
            raise ValueError("lambda_ms must be nonnegative")


def predictability_time(lambda_max: float) -> float:
    """Forcing-interval heuristic ln(2) / lambda_max, in the exponent's time units."""
    if lambda_max <= 0:
        raise ValueError("lambda_max must be positive")
    return float(np.log(2.0) / lambda_max)


def forcing_interval_steps(lambda_max: float, dt: float = 1.0) -> int:
    """predictability_time rounded to the nearest whole step count, at least 1."""
    return max(1, int(round(predictability_time(lambda_max) / dt)))


# ---------------------------------------------------------------------------
# Forced forward / backward passes


def _param_dict(model):
    if isinstance(model, ALRNNParams):
        return {"A": model.A, "W": model.W, "h": model.h}
    if isinstance(model, ShPLRNNParams):
        return {"A": model.A, "W1": model.W1, "W2": model.W2, "h1": model.h1, "h2": model.h2}
    raise TypeError(f"gradient training supports the RNN families, not {type(model).__name__}")


def _with_params(model, params: dict):
    return dataclasses.replace(model, **params)


def _zero_grads(model):
    return {k: np.zeros_like(v) for k, v in _param_dict(model).items()}


def _step_batch(model, s):
    if isinstance(model, ALRNNParams):
        return model.A * s + partial_relu(s, model.P) @ model.W.T + model.h
    a = s @ model.W2.T + model.h2
    return model.A * s + _relu(a) @ model.W1.T + model.h1


def _step_backward(model, s, delta_next):
    """Immediate parameter gradients and the pull-back of delta_next through one step.

    s: (B, M) input state of the step, delta_next: (B, M) = dL/dz_{t+1}.
    Returns (grads, delta_s) with delta_s = (dF/ds)^T delta_next.
    """
    if isinstance(model, ALRNNParams):
        phi = partial_relu(s, model.P)
        gate = np.ones_like(s)
        if model.P > 0:
            gate[..., s.shape[-1] - model.P :] = (s[..., s.shape[-1] - model.P :] > 0).astype(float)
        grads = {
            "A": (delta_next * s).sum(axis=0),
            "W": delta_next.T @ phi,
            "h": delta_next.sum(axis=0),
        }
        delta_s = model.A * delta_next + gate * (delta_next @ model.W)
        return grads, delta_s
    a = s @ model.W2.T + model.h2
    act = _relu(a)
    mask = (a > 0).astype(float)
    delta_a = (delta_next @ model.W1) * mask
    grads = {
        "A": (delta_next * s).sum(axis=0),
        "W1": delta_next.T @ act,
        "W2": delta_a.T @ s,
        "h1": delta_next.sum(axis=0),
        "h2": delta_a.sum(axis=0),
    }
    delta_s = model.A * delta_next + delta_a @ model.W2
    return grads, delta_s


def bptt_gradients(
    model,
    om: ObservationModel,
    data_segment,
    forcing_mode: str = "free",
    tau: int = 1,
    alpha: float = 0.0,
    partial_k: int | None = None,
    return_states: bool = False,
    forcing_noise: np.ndarray | None = None,
):
    """Exact gradients of the summed observation loss sum_t ||x_t - B z_t||^2
    over a (batch of) segment(s), under free-running, sparse-forced, or
    interpolation-forced dynamics.

    data_segment: (S, N) or (batch, S, N) array of observations. The roll starts
    from the data-inferred state at index 0; the loss runs over indices 1..S-1.
    Under 'stf' the state is re-forced every tau steps on the first partial_k
    coordinates, cutting the gradient path through them; under 'gtf' every step
    interpolates with strength alpha, multiplying each Jacobian by (1 - alpha).
    forcing_noise, when given, perturbs the data-inferred states used as
    forcing signals (noisy-teacher regularization); loss targets are untouched.
    """
    xs = np.asarray(data_segment, dtype=float)
    if xs.ndim == 2:
        xs = xs[None]
    B_batch, S, N = xs.shape
    if S < 2:
        raise ValueError("segment must contain at least 2 time points")
    if forcing_mode not in ("free", "stf", "gtf"):
        raise ValueError(f"unknown forcing mode {forcing_mode!r}")
    M = model.dim
    k = om.n_obs if partial_k is None else partial_k
    if not (0 <= k <= M):
        raise ValueError(f"partial_k must lie in [0, {M}]")

    zhat = infer_state(om, xs)  # (B, S, M)
    if forcing_noise is not None:
        zhat = zhat + forcing_noise
    z = zhat[:, 0].copy()
    states_in = np.empty((S - 1, B_batch, M))  # forced input state of each step
    states_out = np.empty((S - 1, B_batch, M))
    forced = np.zeros(S - 1, dtype=bool)
    for t in range(S - 1):
        if forcing_mode == "stf" and t % tau == 0:
            s = z.copy()
            s[:, :k] = zhat[:, t, :k]
            forced[t] = True
        elif forcing_mode == "gtf":
            s = (1.0 - alpha) * z + alpha * zhat[:, t]
        else:
            s = z
        z = _step_batch(model, s)
        states_in[t] = s
        states_out[t] = z

    resid = states_out @ om.B.T - xs[:, 1:].transpose(1, 0, 2)  # (S-1, B, N)
    loss = float(np.sum(resid**2))
    if not np.isfinite(loss):
        raise TrainingDivergedError("non-finite loss in BPTT forward pass")

    grads = _zero_grads(model)
    delta = np.zeros((B_batch, M))
    for t in range(S - 2, -1, -1):
        delta = delta + 2.0 * (resid[t] @ om.B)
        g, delta_s = _step_backward(model, states_in[t], delta)
        for key in grads:
            grads[key] += g[key]
        if forcing_mode == "stf":
            if forced[t]:
                delta_s = delta_s.copy()
                delta_s[:, :k] = 0.0
        elif forcing_mode == "gtf":
            delta_s = (1.0 - alpha) * delta_s
        delta = delta_s

    for key, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingDivergedError(f"non-finite gradient for parameter {key!r}")
    if return_states:
        return loss, grads, states_in, states_out
    return loss, grads


# ---------------------------------------------------------------------------
# Optimizer


class Adam:
    def __init__(self, shapes: dict, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros(s) for k, s in shapes.items()}
        self.v = {k: np.zeros(s) for k, s in shapes.items()}
        self.t = 0

    def update(self, params: dict, grads: dict) -> dict:
        self.t += 1
        out = {}
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for k, p in params.items():
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g**2
            out[k] = p - self.lr * (self.m[k] / b1c) / (np.sqrt(self.v[k] / b2c) + self.eps)
        return out


def _clip_global(grads: dict, max_norm: float) -> dict:
    total = np.sqrt(sum(float(np.sum(g**2)) for g in grads.values()))
    if total > max_norm and total > 0:
        scale = max_norm / total
        return {k: g * scale for k, g in grads.items()}
    return grads


def config_hash(cfg) -> str:
    blob = json.dumps(dataclasses.asdict(cfg), sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _sample_batch(rng, T, S, batch_size):
    starts = rng.integers(0, T - S + 1, size=batch_size)
    return starts


def _geometry_score(model, om, z0, val_X, n_steps, m_bins=30):
    """Validation roll-out geometry: binned occupation KL against a held-back
    slice of the training data; inf when the roll-out diverges."""
    from .measures import dstsp_binned  # local import keeps module load light

    z = np.asarray(z0, dtype=float).copy()
    out = np.empty((n_steps, z.shape[0]))
    for t in range(n_steps):
        z = _step_batch(model, z[None])[0]
        if not np.all(np.isfinite(z)) or np.abs(z).max() > 1e8:
            return np.inf
        out[t] = z
    gen = out[n_steps // 10 :] @ om.B.T
    return float(dstsp_binned(val_X, gen, m_bins))


def _run_epochs(model, om, X, cfg, mode, epoch_fn):
    """Shared epoch loop: batching, Adam, clipping, divergence patience, logging.

    With cfg.select_by_geometry the tail val_fraction of the data is held back
    from batching; every eval_every epochs the current model free-runs from the
    end of the fit portion and its state-space overlap with the held-back slice
    is scored, and the best-scoring parameters are what training returns.
    """
    T_all = X.shape[0]
    S = cfg.sequence_length
    select = getattr(cfg, "select_by_geometry", False)
    T = int(T_all * (1.0 - cfg.val_fraction)) if select else T_all
    if T < 10 * S:
        raise ValueError(f"need T >= 10 * sequence_length, got T={T}, S={S}")
    val_X = X[T:] if select else None
    rng = np.random.default_rng(cfg.seed)
    params = {k: v.copy() for k, v in _param_dict(model).items()}
    opt = Adam({k: v.shape for k, v in params.items()}, cfg.learning_rate)
    batches = max(1, T // (S * cfg.batch_size))
    history = {"loss": [], "config_hash": config_hash(cfg), "seed": cfg.seed, "mode": mode}
    bad_epochs = 0
    decay_epoch = int(cfg.lr_decay_at * cfg.n_epochs)
    best_params, best_score = None, np.inf
    t_start = time.time()
    for epoch in range(cfg.n_epochs):
        if epoch == decay_epoch and cfg.lr_decay_factor < 1.0:
            opt.lr = cfg.learning_rate * cfg.lr_decay_factor
        epoch_losses = []
        for _ in range(batches):
            starts = _sample_batch(rng, T, S, cfg.batch_size)
            segs = np.stack([X[s0 : s0 + S] for s0 in starts])
            cur = _with_params(model, params)
            loss, grads = epoch_fn(cur, segs, history, rng)
            scale = 1.0 / (cfg.batch_size * (S - 1) * X.shape[1])
            grads = {k: g * scale for k, g in grads.items()}
            grads = _clip_global(grads, cfg.grad_clip)
            params = opt.update(params, grads)
            epoch_losses.append(loss * scale)
        mean_loss = float(np.mean(epoch_losses))
        history["loss"].append(mean_loss)
        if select and (epoch + 1) % cfg.eval_every == 0:
            cur = _with_params(model, params)
            z0 = infer_state(om, X[T - 1])
            score = _geometry_score(cur, om, z0, val_X, cfg.val_rollout_steps)
            history.setdefault("val_geometry", []).append(score)
            if score < best_score:
                best_score = score
                best_params = {k: v.copy() for k, v in params.items()}
        if not np.isfinite(mean_loss) or mean_loss > 1e12:
            bad_epochs += 1
            if bad_epochs > cfg.patience:
                raise TrainingDivergedError(
                    f"loss diverged for more than {cfg.patience} epochs (epoch {epoch}, loss {mean_loss})",
                    history,
                )
        else:
            bad_epochs = 0
    history["wall_clock_s"] = time.time() - t_start
    if select and best_params is not None and np.isfinite(best_score):
        params = best_params
        history["best_val_geometry"] = best_score
    trained = _with_params(model, params)
    for v in _param_dict(trained).values():
        if not np.all(np.isfinite(v)):
            raise TrainingDivergedError("trained parameters are non-finite", history)
    return trained, history


def train_stf(model, om: ObservationModel, data, cfg: STFConfig):
    """Mini-batch Adam on randomly sampled segments under sparse teacher forcing.

    Expects standardized data. Returns (trained model, history dict with
    per-epoch loss, settings, seed, config hash, wall clock).
    """
    X = data.samples if isinstance(data, Trajectory) else np.asarray(data, dtype=float)
    k = om.n_obs if cfg.partial_k is None else cfg.partial_k

    def epoch_fn(cur, segs, history, rng):
        noise = None
        if cfg.forcing_noise_std > 0:
            noise = cfg.forcing_noise_std * rng.standard_normal(segs.shape[:2] + (cur.dim,))
        return bptt_gradients(cur, om, segs, "stf", tau=cfg.tau, partial_k=k, forcing_noise=noise)

    trained, history = _run_epochs(model, om, X, cfg, "stf", epoch_fn)
    history["tau"] = cfg.tau
    history["partial_k"] = k
    return trained, history


def _batch_sigma_max(model, states_in):
    """Largest singular value over the free-running step Jacobians at the
    visited (forced) states of a batch."""
    s = states_in.reshape(-1, states_in.shape[-1])
    if isinstance(model, ALRNNParams):
        gate = np.ones_like(s)
        if model.P > 0:
            gate[:, s.shape[1] - model.P :] = (s[:, s.shape[1] - model.P :] > 0).astype(float)
        J = np.diag(model.A)[None] + model.W[None] * gate[:, None, :]
    else:
        a = s @ model.W2.T + model.h2
        mask = (a > 0).astype(float)
        J = np.diag(model.A)[None] + (model.W1[None] * mask[:, None, :]) @ model.W2
    return float(np.linalg.svd(J, compute_uv=False)[:, 0].max()), J


def _max_product_norm(J_seq):
    """Largest singular value of the full sequence product of (T, M, M) Jacobians."""
    P = np.eye(J_seq.shape[-1])
    for Jt in J_seq:
        P = Jt @ P
    return float(np.linalg.svd(P, compute_uv=False)[0])


def train_gtf(model, om: ObservationModel, data, cfg: GTFConfig):
    """Adam under generalized (interpolating) teacher forcing.

    With cfg.alpha None the forcing strength is adapted per batch to
    1 - 1/sigma_max, clamped to [0, 1), where sigma_max is the largest singular
    value over that batch's step Jacobians. History records the alpha sequence
    and, when requested, the norm of each batch's training Jacobian product.
    """
    X = data.samples if isinstance(data, Trajectory) else np.asarray(data, dtype=float)
    adaptive = cfg.alpha is None
    state = {"alpha": 0.0 if adaptive else cfg.alpha}

    def epoch_fn(cur, segs, history, rng):
        if adaptive:
            # measure on a probe pass at the current alpha, then re-run the batch
            _, _, probe_in, _ = bptt_gradients(
                cur, om, segs, "gtf", alpha=state["alpha"], return_states=True
            )
            sigma_max, _ = _batch_sigma_max(cur, probe_in)
            state["alpha"] = min(max(1.0 - 1.0 / sigma_max, 0.0), 1.0 - 1e-9)
        alpha = state["alpha"]
        if cfg.track_jacobian_products:
            loss, grads, st_in, _ = bptt_gradients(cur, om, segs, "gtf", alpha=alpha, return_states=True)
            _, J = _batch_sigma_max(cur, st_in)
            T_steps, B = st_in.shape[0], st_in.shape[1]
            J = J.reshape(T_steps, B, *J.shape[-2:])
            norms = [
                _max_product_norm((1.0 - alpha) * J[:, b]) for b in range(B)
            ]
            history.setdefault("jacobian_product_norms", []).append(float(np.max(norms)))
        else:
            loss, grads = bptt_gradients(cur, om, segs, "gtf", alpha=alpha)
        history.setdefault("alpha", []).append(alpha)
        return loss, grads

    trained, history = _run_epochs(model, om, X, cfg, "gtf", epoch_fn)
    return trained, history


# ---------------------------------------------------------------------------
# Multiple shooting


def multiple_shooting_loss(model, om: ObservationModel, segments, mu0, lambda_ms: float):
    """Summed MSE of free roll-outs from trainable per-segment initial
    conditions, plus the continuity penalty tying each segment's end to the
    next segment's initial condition.

    segments: (n, L, N) contiguous partition of the data; mu0: (n, M).
    """
    segs = np.asarray(segments, dtype=float)
    mu0 = np.asarray(mu0, dtype=float)
    if segs.ndim != 3:
        raise ValueError("segments must be a (n, L, N) array")
    n, L, _ = segs.shape
    if mu0.shape[0] != n:
        raise ValueError(f"{n} segments but {mu0.shape[0]} initial conditions")
    z = mu0.copy()  # (n, M), rolled in parallel
    loss = 0.0
    ends = None
    for t in range(L):
        loss += float(np.sum((z @ om.B.T - segs[:, t]) ** 2))
        z = _step_batch(model, z)
        if t == L - 1:
            ends = z
    penalty = float(np.sum((ends[:-1] - mu0[1:]) ** 2)) if n > 1 else 0.0
    return loss + lambda_ms * penalty


# ---------------------------------------------------------------------------
# Reservoir ridge training


def drive_reservoir(rc: RCParams, X: np.ndarray, r0=None) -> np.ndarray:
    """Open-loop reservoir states with inputs u_t = x_{t-1}; row t is r_t."""
    T = X.shape[0]
    r = np.zeros(rc.dim) if r0 is None else np.asarray(r0, dtype=float)
    R = np.empty((T, rc.dim))
    R[0] = r
    for t in range(1, T):
        r = rc_step(rc, r, X[t - 1])
        R[t] = r
    return R


def train_rc_ridge(rc: RCParams, data, ridge_lambda: float = 1e-6, washout: int = 100) -> RCParams:
    """Closed-form ridge readout W_out = X R^T (R R^T + lambda I)^{-1}.

    The reservoir is driven open loop by the lagged data, the first ``washout``
    states are discarded, and the symmetric system is solved directly (no
    explicit inverse). Raises if the normal matrix is ill-conditioned, in which
    case a larger ridge_lambda is needed.
    """
    X = data.samples if isinstance(data, Trajectory) else np.asarray(data, dtype=float)
    T = X.shape[0]
    if T <= washout + rc.dim:
        raise ValueError(f"need T > washout + M = {washout + rc.dim}, got {T}")
    if ridge_lambda < 0:
        raise ValueError("ridge_lambda must be nonnegative")
    R = drive_reservoir(rc, X)[washout:]
    Y = X[washout:]
    G = R.T @ R + ridge_lambda * np.eye(rc.dim)
    cond = np.linalg.cond(G)
    if cond > 1e12:
        raise ValueError(
            f"normal matrix condition number {cond:.3e} exceeds 1e12; increase ridge_lambda"
        )
    W_out = sp_solve(G, R.T @ Y, assume_a="pos").T
    return dataclasses.replace(rc, W_out=W_out)
