"""Experiment orchestration: configuration, ingestion, standardization, the
simulate -> embed -> train -> roll out -> measure pipeline, and scenario data."""

from __future__ import annotations

import dataclasses
import json
import os
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import jsonschema

from .trajectory import Trajectory, read_csv, write_csv
from . import systems, embedding, models, training, measures

ingest_csv = read_csv  # the CSV reader already enforces the ingestion contract


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Standardization and splitting


def standardize(traj: Trajectory, stats=None):
    """Per-channel z-scoring.

    stats=None fits mean/std on this trajectory; otherwise applies the supplied
    (mean, std) — e.g. training-split statistics, so test data never leaks into
    the fit. Returns (standardized Trajectory, mean, std).
    """
    X = traj.samples
    if stats is None:
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        if np.any(std <= 1e-12):
            bad = int(np.argmin(std))
            raise ValueError(f"channel {bad} is constant (std <= 1e-12); cannot standardize")
    else:
        mean, std = (np.asarray(s, dtype=float) for s in stats)
    return Trajectory((X - mean) / std, traj.dt, traj.t0), mean, std


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    test_fraction: float = 0.3

    def __post_init__(self):
        if not (0 < self.train_fraction < 1) or not (0 < self.test_fraction < 1):
            raise ConfigError("split fractions must lie in (0, 1)")
        if self.train_fraction + self.test_fraction > 1.0 + 1e-12:
            raise ConfigError("split fractions must sum to at most 1")

    def split(self, traj: Trajectory):
        """Contiguous head/tail split; time series are never shuffled."""
        T = traj.n_steps
        n_train = int(round(T * self.train_fraction))
        n_test = int(round(T * self.test_fraction))
        if n_train < 2 or n_test < 2:
            raise ConfigError("split leaves fewer than 2 samples in a partition")
        return traj.slice(0, n_train), traj.slice(n_train, n_train + n_test)


# ---------------------------------------------------------------------------
# Experiment configuration

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "master_seed": {"type": "integer", "minimum": 0},
        "data": {
            "type": "object",
            "properties": {
                "system": {"enum": ["lorenz", "neuron", "neuron2d"]},
                "csv": {"type": "string"},
                "csv_dt": {"type": "number", "exclusiveMinimum": 0},
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "n_steps": {"type": "integer", "minimum": 2},
                "x0": {"type": "array", "items": {"type": "number"}},
                "noise_std": {"type": "number", "minimum": 0},
                "observation_noise_pct": {"type": "number", "minimum": 0},
                "params": {"type": "object"},
                "ramp": {
                    "type": "object",
                    "properties": {
                        "parameter_name": {"type": "string"},
                        "start_value": {"type": "number"},
                        "end_value": {"type": "number"},
                        "start_time": {"type": "number"},
                        "end_time": {"type": "number"},
                    },
                    "required": ["parameter_name", "start_value", "end_value", "start_time", "end_time"],
                },
            },
        },
        "split": {
            "type": "object",
            "properties": {
                "train_fraction": {"type": "number"},
                "test_fraction": {"type": "number"},
            },
        },
        "embedding": {
            "type": "object",
            "properties": {
                "enabled": {"type": "boolean"},
                "channel": {"type": "integer", "minimum": 0},
                "lag": {"type": "integer", "minimum": 0},
                "dimension": {"type": "integer", "minimum": 0},
                "m_max": {"type": "integer", "minimum": 1},
            },
        },
        "model": {
            "type": "object",
            "properties": {
                "family": {"enum": ["alrnn", "shplrnn", "rc"]},
                "M": {"type": "integer", "minimum": 1},
                "P": {"type": "integer", "minimum": 0},
                "H": {"type": "integer", "minimum": 1},
                "rc_spectral_radius": {"type": "number", "exclusiveMinimum": 0},
                "rc_sparsity": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "rc_input_scale": {"type": "number", "exclusiveMinimum": 0},
                "rc_alpha": {"type": "number", "minimum": 0, "maximum": 1},
                "rc_bias_scale": {"type": "number", "minimum": 0},
            },
        },
        "training": {
            "type": "object",
            "properties": {
                "method": {"enum": ["stf", "gtf", "ridge"]},
                "tau": {"type": "integer", "minimum": 0},
                "lambda_max": {"type": "number"},
                "alpha": {"type": "number", "maximum": 1},
                "sequence_length": {"type": "integer", "minimum": 2},
                "learning_rate": {"type": "number", "exclusiveMinimum": 0},
                "n_epochs": {"type": "integer", "minimum": 1},
                "batch_size": {"type": "integer", "minimum": 1},
                "ridge_lambda": {"type": "number", "minimum": 0},
                "washout": {"type": "integer", "minimum": 0},
            },
        },
        "rollout": {
            "type": "object",
            "properties": {"n_steps": {"type": "integer", "minimum": 10}},
        },
        "measures": {
            "type": "object",
            "properties": {
                "n_bins_per_dim": {"type": "integer", "minimum": 2},
                "gmm_sigma": {"type": "number", "exclusiveMinimum": 0},
                "n_mc_samples": {"type": "integer", "minimum": 1},
                "n_projections": {"type": "integer", "minimum": 1},
                "quantile_resolution": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.01},
                "smoothing_sigma": {"type": "number", "minimum": 0},
                "theiler_window": {"type": "integer", "minimum": 0},
                "vpt_epsilon": {"type": "number", "exclusiveMinimum": 0},
                "transient_discard_fraction": {"type": "number", "minimum": 0, "maximum": 0.9},
                "log_power": {"type": "boolean"},
                "spectral_w1": {"type": "boolean"},
            },
        },
    },
    "required": ["data", "model", "training"],
}


REPORT_SCHEMA = {
    "type": "object",
    "properties": {
        "d_stsp_binned": {"type": ["number", "null"]},
        "d_stsp_gmm": {"type": ["number", "null"]},
        "sw1": {"type": ["number", "null"], "minimum": 0},
        "d_h": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
        "lambda_max": {"type": ["number", "null"]},
        "d_ky": {"type": ["number", "null"], "minimum": 0},
        "vpt": {"type": ["integer", "null"], "minimum": 0},
        "mase": {"type": ["number", "null"], "minimum": 0},
        "provenance": {
            "type": "object",
            "properties": {
                "measure_config": {
                    "type": "object",
                    "required": [
                        "n_bins_per_dim", "gmm_sigma", "n_mc_samples", "n_projections",
                        "quantile_resolution", "smoothing_sigma", "theiler_window",
                        "vpt_epsilon", "transient_discard", "log_power", "spectral_w1",
                    ],
                },
                "master_seed": {"type": "integer"},
            },
            "required": ["measure_config", "master_seed"],
        },
    },
    "required": ["provenance"],
}


@dataclass
class ExperimentConfig:
    """Validated, fully resolved experiment description.

    Stage seeds derive from the master seed (data +0, model +1, training +2,
    measures +3) so one integer pins the whole pipeline.
    """

    raw: dict

    def __post_init__(self):
        try:
            jsonschema.validate(self.raw, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ConfigError(f"config validation failed: {exc.message}") from None
        data = self.raw["data"]
        if ("system" in data) == ("csv" in data):
            raise ConfigError("exactly one data source required: data.system or data.csv")
        if "csv" in data and not os.path.exists(data["csv"]):
            raise ConfigError(f"dataset file not found: {data['csv']}")
        fam = self.raw["model"].get("family", "alrnn")
        method = self.raw["training"].get("method", "stf")
        if (fam == "rc") != (method == "ridge"):
            raise ConfigError("reservoir models pair with method='ridge' and RNN families with stf/gtf")
        if method == "stf" and self.raw["training"].get("tau", 0) == 0:
            if self.raw["training"].get("lambda_max", 0.0) <= 0:
                raise ConfigError("tau=0 (auto) requires a positive training.lambda_max")
        SplitSpec(**self.raw.get("split", {}))

    @property
    def master_seed(self) -> int:
        return int(self.raw.get("master_seed", 0))

    def section(self, name: str) -> dict:
        return dict(self.raw.get(name, {}))


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    return ExperimentConfig(raw)


def _atomic_write(path, text: str):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# Pipeline stages


class StageError(RuntimeError):
    def __init__(self, stage, cause):
        self.stage = stage
        super().__init__(f"stage {stage!r} failed: {cause}")


def _simulate_from_config(cfg: ExperimentConfig) -> Trajectory:
    d = cfg.section("data")
    if "csv" in d:
        return ingest_csv(d["csv"], dt=d.get("csv_dt"))
    system = d["system"]
    params = systems.default_params(system)
    if d.get("params"):
        params = dataclasses.replace(params, **d["params"])
    dim = systems.system_dim(system)
    dt = d.get("dt", 0.01 if system == "lorenz" else 0.05)
    n_steps = d.get("n_steps", 100_000)
    x0 = np.asarray(d.get("x0", _default_x0(system)), dtype=float)
    ramp = systems.RampSpec(**d["ramp"]) if "ramp" in d else None
    traj = systems.integrate(
        system, params, x0, dt, n_steps,
        noise_std=d.get("noise_std", 0.0), ramp=ramp, seed=cfg.master_seed,
    )
    pct = d.get("observation_noise_pct", 0.0)
    if pct > 0:
        rng = np.random.default_rng(cfg.master_seed + 10)
        std = traj.samples.std(axis=0)
        noisy = traj.samples + (pct / 100.0) * std * rng.standard_normal(traj.samples.shape)
        traj = Trajectory(noisy, traj.dt, traj.t0)
    return traj


def _default_x0(system):
    if system == "lorenz":
        return [1.0, 2.0, 3.0]
    if system == "neuron":
        return [-60.0, 0.001, 0.05]
    return [-60.0, 0.001]


def _measure_config(cfg_section: dict, rollout_steps: int) -> measures.MeasureConfig:
    frac = cfg_section.pop("transient_discard_fraction", 0.1)
    return measures.MeasureConfig(transient_discard=int(round(frac * rollout_steps)), **cfg_section)


def _model_lambda_max(model, om, rollout_latent: Trajectory, dt: float):
    """Lyapunov exponents of the trained map along its own roll-out, per unit time.

    Large reservoirs get only the leading exponent (single tangent vector);
    the RNN families get the full QR spectrum, which also feeds D_KY.
    """
    Z = rollout_latent.samples
    z0 = Z[0]
    n_steps = Z.shape[0] - 1
    if isinstance(model, models.RCParams):
        provider = lambda z: (
            models.rc_step(model, z, models.rc_readout(model, z)),
            models.rc_closed_loop_jacobian(model, z),
        )
        lam = measures.lyapunov_max(provider, z0, n_steps, renorm_interval=10, dt=dt)
        return None, lam
    provider = lambda z: (models.step(model, z), models.model_jacobian(model, z))
    spec = measures.lyapunov_spectrum(provider, z0, n_steps, renorm_interval=10, dt=dt)
    return spec, spec.lambda_max


def run_experiment(cfg: ExperimentConfig, out_dir, until: str = "measure") -> measures.EvalReport | None:
    """Execute the full pipeline and write manifest.json, model.json,
    rollout.csv, and report.json under out_dir.

    report.json carries no wall-clock fields, so a rerun from the same manifest
    is byte-identical. until='train' stops after the checkpoint is written
    (no roll-out or measures) and returns None.
    """
    os.makedirs(out_dir, exist_ok=True)
    t_start = time.time()
    stage = "validate"
    manifest = {
        "config": cfg.raw,
        "master_seed": cfg.master_seed,
        "stages": {},
        "artifacts": ["manifest.json", "model.json", "rollout.csv", "report.json"],
        "complete": False,
    }

    try:
        stage = "simulate"
        traj = _simulate_from_config(cfg)
        manifest["stages"]["simulate"] = {"n_steps": traj.n_steps, "n_channels": traj.n_channels, "dt": traj.dt}

        stage = "split"
        split = SplitSpec(**cfg.section("split"))
        train_raw, test_raw = split.split(traj)

        stage = "standardize"
        train, mean, std = standardize(train_raw)
        test, _, _ = standardize(test_raw, stats=(mean, std))
        manifest["stages"]["standardize"] = {"mean": mean.tolist(), "std": std.tolist()}

        stage = "embed"
        emb = cfg.section("embedding")
        if emb.get("enabled", False):
            ch = emb.get("channel", 0)
            lag = emb.get("lag", 0) or embedding.select_lag(train.channel(ch))
            dim = emb.get("dimension", 0) or embedding.false_nearest_neighbors(
                train.channel(ch), lag, m_max=emb.get("m_max", 10)
            )
            spec = embedding.EmbeddingSpec(dim, lag)
            train = embedding.delay_embed(train.channel(ch), spec)
            test = embedding.delay_embed(test.channel(ch), spec)
            manifest["stages"]["embed"] = {"lag": lag, "dimension": dim, "channel": ch}

        N = train.n_channels
        stage = "init_model"
        m = cfg.section("model")
        family = m.get("family", "alrnn")
        M = m.get("M", 500 if family == "rc" else 20)
        model = models.init_model(
            family, M, N, P=m.get("P"), H=m.get("H"), seed=cfg.master_seed + 1,
            **{k: m[k] for k in ("rc_spectral_radius", "rc_sparsity", "rc_input_scale", "rc_alpha", "rc_bias_scale") if k in m},
        )
        om = None if family == "rc" else models.default_observation(N, M)

        stage = "train"
        tr = cfg.section("training")
        method = tr.get("method", "stf")
        seed_train = cfg.master_seed + 2
        common = {
            k: tr[k]
            for k in ("sequence_length", "learning_rate", "n_epochs", "batch_size")
            if k in tr
        }
        if method == "stf":
            tau = tr.get("tau", 0)
            if tau == 0:
                tau = training.forcing_interval_steps(tr["lambda_max"], train.dt)
            stf_cfg = training.STFConfig(tau=tau, seed=seed_train, **common)
            model, history = training.train_stf(model, om, train, stf_cfg)
        elif method == "gtf":
            alpha = tr.get("alpha", -1.0)
            gtf_cfg = training.GTFConfig(alpha=None if alpha < 0 else alpha, seed=seed_train, **common)
            model, history = training.train_gtf(model, om, train, gtf_cfg)
        else:
            model = training.train_rc_ridge(
                model, train, ridge_lambda=tr.get("ridge_lambda", 1e-6), washout=tr.get("washout", 100)
            )
            history = {"mode": "ridge", "ridge_lambda": tr.get("ridge_lambda", 1e-6)}
        hist_path = os.path.join(out_dir, "training_log.json")
        _atomic_write(hist_path, json.dumps(history, indent=2, sort_keys=True, default=float))
        manifest["artifacts"].append("training_log.json")

        if until == "train":
            models.save_checkpoint(model, os.path.join(out_dir, "model.json"), om=om, seed=cfg.master_seed + 1)
            manifest["complete"] = True
            manifest["artifacts"] = ["manifest.json", "model.json", "training_log.json"]
            manifest["wall_clock_s"] = time.time() - t_start
            _atomic_write(os.path.join(out_dir, "manifest.json"), json.dumps(manifest, indent=2, sort_keys=True))
            return None

        stage = "rollout"
        ro = cfg.section("rollout")
        n_roll = ro.get("n_steps", 10_000)
        if family == "rc":
            R = training.drive_reservoir(model, train.samples)
            z_init = R[-1]
        else:
            z_init = models.infer_state(om, train.samples[-1])
        latent, observed = models.generate(model, om, z_init, n_roll, dt=train.dt)
        manifest["stages"]["rollout"] = {"n_steps": n_roll}

        stage = "measure"
        mc = _measure_config(cfg.section("measures"), n_roll)
        gen = observed.slice(mc.transient_discard)
        ref = test
        seed_meas = cfg.master_seed + 3
        sigma = mc.gmm_sigma if mc.gmm_sigma is not None else measures.scott_sigma(ref.samples)
        lam_spec, lam_max = _model_lambda_max(model, om, latent.slice(mc.transient_discard), train.dt)
        forecast_T = min(test.n_steps, n_roll)
        forecast = observed.slice(0, forecast_T)
        test_head = test.slice(0, forecast_T)
        report = measures.EvalReport(
            d_stsp_binned=(
                measures.dstsp_binned(ref.samples, gen.samples, mc.n_bins_per_dim) if N <= 5 else None
            ),
            d_stsp_gmm=measures.dstsp_gmm(
                _cap(ref.samples, 5000), _cap(gen.samples, 5000), sigma=sigma, mode="variational"
            ),
            sw1=measures.sliced_w1(
                ref.samples, gen.samples, n_projections=mc.n_projections,
                delta_q=mc.quantile_resolution, seed=seed_meas,
            ),
            d_h=measures.hellinger_spectral(
                ref.samples, gen.samples, smoothing_sigma=mc.smoothing_sigma,
                log_power=mc.log_power, use_w1=mc.spectral_w1,
            ),
            lambda_max=lam_max,
            d_ky=(measures.kaplan_yorke(lam_spec) if lam_spec is not None else None),
            vpt=measures.vpt(test_head.samples, forecast.samples, epsilon=mc.vpt_epsilon),
            mase=measures.mase(test_head.samples, forecast.samples, train.samples),
            provenance={
                "master_seed": cfg.master_seed,
                "measure_seed": seed_meas,
                "gmm_sigma": sigma,
                "measure_config": dataclasses.asdict(mc),
                "train_steps": train.n_steps,
                "test_steps": test.n_steps,
                "rollout_steps": n_roll,
                "model_family": family,
                "training_method": method,
            },
        )

        stage = "write"
        jsonschema.validate(json.loads(report.to_json()), REPORT_SCHEMA)
        models.save_checkpoint(model, os.path.join(out_dir, "model.json"), om=om, seed=cfg.master_seed + 1)
        write_csv(observed, os.path.join(out_dir, "rollout.csv"))
        _atomic_write(os.path.join(out_dir, "report.json"), report.to_json())
        manifest["complete"] = True
        manifest["wall_clock_s"] = time.time() - t_start
        _atomic_write(os.path.join(out_dir, "manifest.json"), json.dumps(manifest, indent=2, sort_keys=True))
        return report
    except Exception as exc:
        manifest["failed_stage"] = stage
        manifest["error"] = str(exc)
        manifest["wall_clock_s"] = time.time() - t_start
        _atomic_write(os.path.join(out_dir, "manifest.json"), json.dumps(manifest, indent=2, sort_keys=True, default=str))
        if isinstance(exc, (ConfigError, StageError)):
            raise
        raise StageError(stage, exc) from exc


def _cap(X: np.ndarray, n: int) -> np.ndarray:
    if X.shape[0] <= n:
        return X
    idx = np.linspace(0, X.shape[0] - 1, n).astype(int)
    return X[idx]


# ---------------------------------------------------------------------------
# Scenario bundles


def spike_times(V: np.ndarray, dt: float, threshold: float = -20.0) -> np.ndarray:
    """Upward threshold crossings of a voltage trace, in time units."""
    up = np.nonzero((V[:-1] < threshold) & (V[1:] >= threshold))[0]
    return up * dt


def isi_cv(spikes: np.ndarray) -> float:
    """Coefficient of variation of inter-spike intervals; high for bursting,
    near zero for regular spiking. NaN with fewer than 3 spikes."""
    if spikes.size < 3:
        return float("nan")
    isi = np.diff(spikes)
    return float(isi.std() / isi.mean())


BISTABLE_IC_FIXED_POINT = np.array([-70.0, 0.000123])  # left basin, converges to rest
BISTABLE_IC_CYCLE = np.array([-40.0, 0.047426])  # right basin, converges to the cycle


def scenario(name: str, seed: int = 0, noise_scale: float = 1.0, noise_pcts=(1.0, 10.0)) -> dict:
    """Reference ground-truth bundles for the tipping and noise demonstrations.

    bistable_neuron: the planar neuron from one initial condition per basin.
    n_tipping: the planar neuron started at rest with voltage noise that
        eventually kicks it across the basin boundary into the cycle.
    b_tipping: the 3d neuron with the NMDA conductance held, then ramped up
        through the bursting-to-spiking transition; training cut at ramp onset.
    lorenz_noisy: clean Lorenz plus observation-noise copies at each
        percentage in noise_pcts (relative to the per-channel std).
    """
    if name == "bistable_neuron":
        p = systems.Neuron2DParams(h_fixed=0.05)
        dt, n = 0.05, 8000
        left = systems.integrate("neuron2d", p, BISTABLE_IC_FIXED_POINT, dt, n, seed=seed)
        right = systems.integrate("neuron2d", p, BISTABLE_IC_CYCLE, dt, n, seed=seed)
        return {"name": name, "fixed_point": left, "oscillation": right, "params": p, "classify_tol": 0.05}
    if name == "n_tipping":
        p = systems.Neuron2DParams(h_fixed=0.05)
        dt, n = 0.05, 40_000
        noise = np.array([1.0 * noise_scale, 0.0])  # mV-scale kicks on V only
        traj = systems.integrate("neuron2d", p, BISTABLE_IC_FIXED_POINT, dt, n, noise_std=noise, seed=seed)
        return {"name": name, "trajectory": traj, "params": p, "noise_std": noise, "classify_tol": 0.05}
    if name == "b_tipping":
        p = systems.NeuronParams()
        dt, n = 0.05, 200_000
        ramp = systems.RampSpec("gNMDA", 10.2, 11.0, start_time=4000.0, end_time=8000.0)
        traj = systems.integrate("neuron", p, np.array([-60.0, 0.001, 0.05]), dt, n, ramp=ramp, seed=seed)
        train_cut = int(round(n * 0.4))  # training data ends at ramp onset
        return {
            "name": name, "trajectory": traj, "params": p, "ramp": ramp,
            "train": traj.slice(0, train_cut), "test": traj.slice(train_cut),
            "train_cut": train_cut,
        }
    if name == "lorenz_noisy":
        p = systems.LorenzParams()
        dt, n = 0.01, 100_000
        clean = systems.integrate("lorenz", p, np.array([1.0, 2.0, 3.0]), dt, n, seed=seed)
        rng = np.random.default_rng(seed + 1)
        std = clean.samples.std(axis=0)
        out = {"name": name, "clean": clean, "params": p}
        for pct in noise_pcts:
            noisy = clean.samples + (pct / 100.0) * std * rng.standard_normal(clean.samples.shape)
            out[f"noisy_{int(pct)}pct"] = Trajectory(noisy, dt)
        return out
    raise KeyError(f"unknown scenario {name!r}")


def chaos_divergence_demo(noise_pct: float = 1.0, n_steps: int = 30_000, dt: float = 0.01, seed: int = 0):
    """Two Lorenz runs from the same initial condition with small process noise.

    Returns (run_a, run_b, nrmse_per_step): the per-step NRMSE between the two
    runs, normalized by the per-channel std of the first.
    """
    p = systems.LorenzParams()
    x0 = np.array([1.0, 2.0, 3.0])
    ref = systems.integrate("lorenz", p, x0, dt, 20_000, seed=seed)
    std = ref.samples.std(axis=0)
    noise = (noise_pct / 100.0) * std
    a = systems.integrate("lorenz", p, ref.samples[-1], dt, n_steps, noise_std=noise, seed=seed + 1)
    b = systems.integrate("lorenz", p, ref.samples[-1], dt, n_steps, noise_std=noise, seed=seed + 2)
    err = measures.pointwise_error(a.samples, b.samples, kind="nrmse")
    return a, b, err
