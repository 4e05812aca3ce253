"""Ground-truth benchmark systems: vector fields, Jacobians, RK4 integration, tipping ramps."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .trajectory import Trajectory

DIVERGENCE_BOUND = 1e8


class DivergenceError(RuntimeError):
    """Raised when an integrated state leaves the sane region; carries the step index."""

    def __init__(self, step: int, state):
        self.step = step
        super().__init__(f"state diverged at step {step}: {np.asarray(state)}")


@dataclass(frozen=True)
class LorenzParams:
    sigma: float = 10.0
    rho: float = 28.0
    beta: float = 8.0 / 3.0

    def __post_init__(self):
        if not (self.sigma > 0 and self.rho > 0 and self.beta > 0):
            raise ValueError("sigma, rho, beta must all be strictly positive")


@dataclass(frozen=True)
class NeuronParams:
    """Conductance-based 3d neuron, native units (uA, uF, mS, mV, ms).

    State is (V, n, h): membrane potential plus fast and slow potassium gates.
    Defaults are the bursting regime used throughout the test scenarios.
    """

    I: float = 0.0
    C: float = 6.0
    gL: float = 8.0
    EL: float = -80.0
    gNa: float = 20.0
    ENa: float = 60.0
    VhNa: float = -20.0
    kNa: float = 15.0
    gK: float = 10.0
    EK: float = -90.0
    VhK: float = -25.0
    kK: float = 5.0
    tau_n: float = 1.0
    gM: float = 25.0
    VhM: float = -15.0
    kM: float = 5.0
    tau_h: float = 200.0
    gNMDA: float = 10.2
    ENMDA: float = 0.0

    def __post_init__(self):
        if not (self.C > 0 and self.tau_n > 0 and self.tau_h > 0):
            raise ValueError("C, tau_n, tau_h must be positive")
        for name in ("gL", "gNa", "gK", "gM", "gNMDA"):
            if getattr(self, name) < 0:
                raise ValueError(f"conductance {name} must be nonnegative")


@dataclass(frozen=True)
class Neuron2DParams(NeuronParams):
    """Planar reduction of the neuron model with the slow gate pinned to ``h_fixed``."""

    h_fixed: float = 0.05


@dataclass(frozen=True)
class RampSpec:
    """Linear drift of one named parameter: held at start_value before start_time,
    at end_value after end_time, interpolated in between."""

    parameter_name: str
    start_value: float
    end_value: float
    start_time: float
    end_time: float

    def __post_init__(self):
        if not (self.end_time > self.start_time):
            raise ValueError("end_time must exceed start_time")

    def value_at(self, t: float) -> float:
        frac = (t - self.start_time) / (self.end_time - self.start_time)
        frac = min(max(frac, 0.0), 1.0)
        return self.start_value + (self.end_value - self.start_value) * frac


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def gate_inf(V, vh, k):
    """Steady-state sigmoid gate 1 / (1 + exp((vh - V)/k)); equals 1/2 at V = vh."""
    return _sigmoid((np.asarray(V, dtype=float) - vh) / k)


def nmda_gate(V):
    """Voltage dependence of the NMDA conductance, 1 / (1 + 0.33 exp(-0.0625 V))."""
    return 1.0 / (1.0 + 0.33 * np.exp(-0.0625 * np.asarray(V, dtype=float)))


def lorenz_vector_field(state, p: LorenzParams) -> np.ndarray:
    """dx/dt of the Lorenz-63 convection model; broadcasts over leading axes."""
    state = np.asarray(state, dtype=float)
    x1, x2, x3 = state[..., 0], state[..., 1], state[..., 2]
    return np.stack(
        [p.sigma * (x2 - x1), x1 * (p.rho - x3) - x2, x1 * x2 - p.beta * x3], axis=-1
    )


def lorenz_jacobian(state, p: LorenzParams) -> np.ndarray:
    state = np.asarray(state, dtype=float)
    x1, x2, x3 = state[..., 0], state[..., 1], state[..., 2]
    J = np.zeros(state.shape[:-1] + (3, 3))
    J[..., 0, 0] = -p.sigma
    J[..., 0, 1] = p.sigma
    J[..., 1, 0] = p.rho - x3
    J[..., 1, 1] = -1.0
    J[..., 1, 2] = -x1
    J[..., 2, 0] = x2
    J[..., 2, 1] = x1
    J[..., 2, 2] = -p.beta
    return J


def _membrane_current(V, n, h, p: NeuronParams):
    m = gate_inf(V, p.VhNa, p.kNa)
    s = nmda_gate(V)
    return (
        p.I
        - p.gL * (V - p.EL)
        - p.gNa * m * (V - p.ENa)
        - p.gK * n * (V - p.EK)
        - p.gM * h * (V - p.EK)
        - p.gNMDA * s * (V - p.ENMDA)
    )


def neuron_vector_field(state, p: NeuronParams) -> np.ndarray:
    """(dV/dt, dn/dt, dh/dt) of the 3d neuron model; broadcasts over leading axes."""
    state = np.asarray(state, dtype=float)
    V, n, h = state[..., 0], state[..., 1], state[..., 2]
    dV = _membrane_current(V, n, h, p) / p.C
    dn = (gate_inf(V, p.VhK, p.kK) - n) / p.tau_n
    dh = (gate_inf(V, p.VhM, p.kM) - h) / p.tau_h
    return np.stack([dV, dn, dh], axis=-1)


def _neuron_jacobian_entries(V, n, h, p: NeuronParams):
    m = gate_inf(V, p.VhNa, p.kNa)
    s = nmda_gate(V)
    dm = m * (1.0 - m) / p.kNa
    ds = 0.0625 * s * (1.0 - s)
    dV_dV = (
        -p.gL
        - p.gNa * (dm * (V - p.ENa) + m)
        - p.gK * n
        - p.gM * h
        - p.gNMDA * (ds * (V - p.ENMDA) + s)
    ) / p.C
    dV_dn = -p.gK * (V - p.EK) / p.C
    dV_dh = -p.gM * (V - p.EK) / p.C
    ninf = gate_inf(V, p.VhK, p.kK)
    hinf = gate_inf(V, p.VhM, p.kM)
    dn_dV = ninf * (1.0 - ninf) / (p.kK * p.tau_n)
    dh_dV = hinf * (1.0 - hinf) / (p.kM * p.tau_h)
    return dV_dV, dV_dn, dV_dh, dn_dV, dh_dV


def neuron_jacobian(state, p: NeuronParams) -> np.ndarray:
    state = np.asarray(state, dtype=float)
    V, n, h = state[..., 0], state[..., 1], state[..., 2]
    dV_dV, dV_dn, dV_dh, dn_dV, dh_dV = _neuron_jacobian_entries(V, n, h, p)
    J = np.zeros(state.shape[:-1] + (3, 3))
    J[..., 0, 0] = dV_dV
    J[..., 0, 1] = dV_dn
    J[..., 0, 2] = dV_dh
    J[..., 1, 0] = dn_dV
    J[..., 1, 1] = -1.0 / p.tau_n
    J[..., 2, 0] = dh_dV
    J[..., 2, 2] = -1.0 / p.tau_h
    return J


def neuron2d_vector_field(state, p: Neuron2DParams) -> np.ndarray:
    state = np.asarray(state, dtype=float)
    V, n = state[..., 0], state[..., 1]
    h = np.broadcast_to(p.h_fixed, V.shape) if V.ndim else p.h_fixed
    dV = _membrane_current(V, n, h, p) / p.C
    dn = (gate_inf(V, p.VhK, p.kK) - n) / p.tau_n
    return np.stack([dV, dn], axis=-1)


def neuron2d_jacobian(state, p: Neuron2DParams) -> np.ndarray:
    state = np.asarray(state, dtype=float)
    V, n = state[..., 0], state[..., 1]
    dV_dV, dV_dn, _, dn_dV, _ = _neuron_jacobian_entries(V, n, p.h_fixed, p)
    J = np.zeros(state.shape[:-1] + (2, 2))
    J[..., 0, 0] = dV_dV
    J[..., 0, 1] = dV_dn
    J[..., 1, 0] = dn_dV
    J[..., 1, 1] = -1.0 / p.tau_n
    return J


SYSTEMS = {
    "lorenz": (3, lorenz_vector_field, lorenz_jacobian, LorenzParams),
    "neuron": (3, neuron_vector_field, neuron_jacobian, NeuronParams),
    "neuron2d": (2, neuron2d_vector_field, neuron2d_jacobian, Neuron2DParams),
}


def system_dim(system_id: str) -> int:
    _check_system(system_id)
    return SYSTEMS[system_id][0]


def default_params(system_id: str):
    _check_system(system_id)
    return SYSTEMS[system_id][3]()


def _check_system(system_id):
    if system_id not in SYSTEMS:
        raise KeyError(f"unknown system id {system_id!r}; known: {sorted(SYSTEMS)}")


def jacobian_analytic(system_id: str, state, params) -> np.ndarray:
    """Exact partial-derivative matrix of the system's vector field at ``state``."""
    _check_system(system_id)
    return SYSTEMS[system_id][2](state, params)


def rk4_step(f, x: np.ndarray, dt: float) -> np.ndarray:
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_tangent_step(f, jac, x: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """One RK4 step together with the exact Jacobian of the step map itself.

    The returned matrix is d(x_next)/d(x), obtained by differentiating the
    four-stage update, so tangent vectors propagated with it see exactly the
    discrete map that the integrator realizes.
    """
    x = np.asarray(x, dtype=float)
    M = x.shape[-1]
    I = np.eye(M)
    k1 = f(x)
    x2 = x + 0.5 * dt * k1
    k2 = f(x2)
    x3 = x + 0.5 * dt * k2
    k3 = f(x3)
    x4 = x + dt * k3
    k4 = f(x4)
    D1 = jac(x)
    D2 = jac(x2) @ (I + 0.5 * dt * D1)
    D3 = jac(x3) @ (I + 0.5 * dt * D2)
    D4 = jac(x4) @ (I + dt * D3)
    x_next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    step_jac = I + (dt / 6.0) * (D1 + 2.0 * D2 + 2.0 * D3 + D4)
    return x_next, step_jac


def _guard(x: np.ndarray, step: int):
    if not np.all(np.isfinite(x)) or np.any(np.abs(x) > DIVERGENCE_BOUND):
        raise DivergenceError(step, x)


def integrate(
    system_id: str,
    params,
    x0,
    dt: float,
    n_steps: int,
    noise_std=0.0,
    ramp: RampSpec | None = None,
    seed: int = 0,
    t0: float = 0.0,
) -> Trajectory:
    """Fixed-step RK4 roll-out of a registered system.

    noise_std > 0 adds Gaussian increments ``noise_std * sqrt(dt) * xi`` to the
    state after each step (scalar or per-channel array). A ramp linearly drifts
    one named parameter, evaluated at the start of each step. Deterministic for
    a given seed. Raises DivergenceError (with the step index) if the state
    leaves |x| <= 1e8 or turns non-finite.
    """
    _check_system(system_id)
    if dt <= 0:
        raise ValueError("dt must be positive")
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    dim, f, _, _ = SYSTEMS[system_id]
    x = np.asarray(x0, dtype=float).copy()
    if x.shape != (dim,):
        raise ValueError(f"x0 must have shape ({dim},) for system {system_id!r}")
    noise = np.asarray(noise_std, dtype=float)
    if np.any(noise < 0):
        raise ValueError("noise_std must be nonnegative")
    noisy = bool(np.any(noise > 0))
    rng = np.random.default_rng(seed)
    sqrt_dt = np.sqrt(dt)

    if ramp is not None and not hasattr(params, ramp.parameter_name):
        raise ValueError(f"parameter {ramp.parameter_name!r} not present on {type(params).__name__}")

    out = np.empty((n_steps, dim))
    _guard(x, 0)
    for i in range(n_steps):
        out[i] = x
        p_i = params
        if ramp is not None:
            p_i = dataclasses.replace(params, **{ramp.parameter_name: ramp.value_at(t0 + i * dt)})
        x = rk4_step(lambda s: f(s, p_i), x, dt)
        if noisy:
            x = x + noise * sqrt_dt * rng.standard_normal(dim)
        _guard(x, i + 1)
    return Trajectory(out, dt, t0)


def classify_limit_behavior(traj: Trajectory, tail_fraction: float = 0.25, tol: float = 1e-3) -> str:
    """Label the tail of a trajectory as 'fixed_point', 'oscillation', or 'unresolved'.

    fixed_point: tail peak-to-peak amplitude below tol in every channel.
    oscillation: every channel shows >= 3 crossings of its tail mean and
    amplitude >= tol. Anything else is unresolved.
    """
    n_tail = int(np.floor(traj.n_steps * tail_fraction))
    if n_tail < 100:
        raise ValueError(f"tail has {n_tail} samples; need >= 100 (trajectory too short)")
    tail = traj.samples[-n_tail:]
    ptp = tail.max(axis=0) - tail.min(axis=0)
    if np.all(ptp < tol):
        return "fixed_point"
    centered = tail - tail.mean(axis=0)
    sign = np.sign(centered)
    sign[sign == 0] = 1.0
    crossings = (np.diff(sign, axis=0) != 0).sum(axis=0)
    if np.all(crossings >= 3) and np.all(ptp >= tol):
        return "oscillation"
    return "unresolved"
