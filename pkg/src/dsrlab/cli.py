"""Command-line entry points.

Exit codes: 0 on success, 2 on validation errors (bad config, bad arguments,
malformed input files), 1 on runtime failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import embedding, harness, measures, models, systems, training
from .trajectory import Trajectory, read_csv, write_csv


def _parse_floats(text):
    return np.array([float(v) for v in text.split(",")])


def _cmd_simulate(args):
    params = systems.default_params(args.system)
    if args.param:
        overrides = {}
        for kv in args.param:
            key, _, val = kv.partition("=")
            overrides[key] = float(val)
        params = dataclasses.replace(params, **overrides)
    ramp = None
    if args.ramp:
        name, v0, v1, t0, t1 = args.ramp.split(",")
        ramp = systems.RampSpec(name, float(v0), float(v1), float(t0), float(t1))
    x0 = _parse_floats(args.x0) if args.x0 else np.asarray(harness._default_x0(args.system), dtype=float)
    traj = systems.integrate(
        args.system, params, x0, args.dt, args.steps,
        noise_std=args.noise_std, ramp=ramp, seed=args.seed,
    )
    write_csv(traj, args.out)
    print(f"wrote {traj.n_steps} x {traj.n_channels} samples to {args.out}")


def _cmd_embed(args):
    traj = read_csv(args.input, dt=args.dt)
    series = traj.channel(args.channel)
    lag = args.lag or embedding.select_lag(series)
    dim = args.dim or embedding.false_nearest_neighbors(series, lag, m_max=args.m_max)
    emb = embedding.delay_embed(series, embedding.EmbeddingSpec(dim, lag))
    write_csv(emb, args.out)
    print(f"lag={lag} dimension={dim}; wrote {emb.n_steps} x {emb.n_channels} to {args.out}")


def _cmd_train(args):
    cfg = harness.load_config(args.config)
    harness.run_experiment(cfg, args.out, until="train")
    print(f"checkpoint and training log written under {args.out}")


def _cmd_rollout(args):
    model, om, _ = models.load_checkpoint(args.model)
    if args.init_csv:
        data = read_csv(args.init_csv, dt=args.dt)
        if isinstance(model, models.RCParams):
            z0 = training.drive_reservoir(model, data.samples)[-1]
        else:
            z0 = models.infer_state(om, data.samples[-1])
        dt = data.dt
    elif args.init_x:
        x = _parse_floats(args.init_x)
        if isinstance(model, models.RCParams):
            z0 = np.zeros(model.dim)
        else:
            z0 = models.infer_state(om, x)
        dt = args.dt or 1.0
    else:
        raise harness.ConfigError("rollout needs --init-csv or --init-x")
    _, observed = models.generate(model, om, z0, args.steps, dt=dt)
    write_csv(observed, args.out)
    print(f"wrote {observed.n_steps}-step roll-out to {args.out}")


def _cmd_measure(args):
    ref = read_csv(args.true, dt=args.dt)
    gen = read_csv(args.generated, dt=args.dt)
    mc = measures.MeasureConfig(
        n_bins_per_dim=args.bins,
        smoothing_sigma=args.smoothing_sigma,
        n_projections=args.projections,
        vpt_epsilon=args.vpt_epsilon,
        transient_discard=args.transient,
    )
    gen_tail = gen.slice(mc.transient_discard) if mc.transient_discard else gen
    N = ref.n_channels
    sigma = measures.scott_sigma(ref.samples)
    same_shape = ref.samples.shape == gen.samples.shape
    report = measures.EvalReport(
        d_stsp_binned=measures.dstsp_binned(ref.samples, gen_tail.samples, mc.n_bins_per_dim) if N <= 5 else None,
        d_stsp_gmm=measures.dstsp_gmm(
            harness._cap(ref.samples, 5000), harness._cap(gen_tail.samples, 5000), sigma=sigma
        ),
        sw1=measures.sliced_w1(ref.samples, gen_tail.samples, n_projections=mc.n_projections, seed=args.seed),
        d_h=measures.hellinger_spectral(ref.samples, gen_tail.samples, smoothing_sigma=mc.smoothing_sigma),
        vpt=measures.vpt(ref.samples, gen.samples, epsilon=mc.vpt_epsilon) if same_shape else None,
        mase=(
            measures.mase(ref.samples, gen.samples, read_csv(args.insample, dt=args.dt).samples)
            if (args.insample and same_shape) else None
        ),
        provenance={"measure_config": dataclasses.asdict(mc), "gmm_sigma": sigma, "seed": args.seed},
    )
    with open(args.out, "w") as fh:
        fh.write(report.to_json())
    print(report.to_json())


def _cmd_run(args):
    cfg = harness.load_config(args.config)
    report = harness.run_experiment(cfg, args.out)
    print(report.to_json())


def _cmd_scenario(args):
    bundle = harness.scenario(args.name, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    meta = {"name": args.name, "seed": args.seed}
    for key, val in bundle.items():
        if isinstance(val, Trajectory):
            path = os.path.join(args.out, f"{key}.csv")
            write_csv(val, path)
            meta[key] = os.path.basename(path)
        elif isinstance(val, (systems.RampSpec, systems.NeuronParams, systems.LorenzParams)):
            meta[key] = dataclasses.asdict(val)
        elif isinstance(val, np.ndarray):
            meta[key] = val.tolist()
        else:
            meta[key] = val
    with open(os.path.join(args.out, "scenario.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    print(f"scenario {args.name!r} written under {args.out}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dsrlab", description="dynamical-systems-reconstruction workbench")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate a benchmark system to CSV")
    p.add_argument("--system", required=True, choices=sorted(systems.SYSTEMS))
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--x0", help="comma-separated initial state")
    p.add_argument("--noise-std", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--param", action="append", help="override, e.g. --param rho=24.5")
    p.add_argument("--ramp", help="name,start_value,end_value,start_time,end_time")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("embed", help="delay-embed a scalar channel")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--dt", type=float, help="dt for headerless CSVs")
    p.add_argument("--channel", type=int, default=0)
    p.add_argument("--lag", type=int, default=0, help="0 = pick from the autocorrelation trough")
    p.add_argument("--dim", type=int, default=0, help="0 = pick by false nearest neighbors")
    p.add_argument("--m-max", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_embed)

    p = sub.add_parser("train", help="run the pipeline through training only")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("rollout", help="free-run a trained checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--init-csv", help="warm up from the tail of this trajectory")
    p.add_argument("--init-x", help="comma-separated observation to invert")
    p.add_argument("--dt", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_rollout)

    p = sub.add_parser("measure", help="compare two trajectory CSVs")
    p.add_argument("--true", required=True)
    p.add_argument("--generated", required=True)
    p.add_argument("--insample", help="training series for the MASE denominator")
    p.add_argument("--dt", type=float)
    p.add_argument("--bins", type=int, default=30)
    p.add_argument("--smoothing-sigma", type=float, default=20.0)
    p.add_argument("--projections", type=int, default=1000)
    p.add_argument("--vpt-epsilon", type=float, default=0.3)
    p.add_argument("--transient", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_measure)

    p = sub.add_parser("run", help="full pipeline from a TOML config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("scenario", help="emit a reference scenario bundle")
    p.add_argument("--name", required=True,
                   choices=["bistable_neuron", "n_tipping", "b_tipping", "lorenz_noisy"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_scenario)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        args.fn(args)
        return 0
    except (harness.ConfigError, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
