#!/usr/bin/env python3
"""Tipping points and the limits of predictability.

Three scenarios on the conductance-based neuron: coexisting attractors
(bistability), noise-driven basin crossing (N-tipping), and a slow parameter
ramp through the bursting-to-spiking bifurcation (B-tipping). Plus the Lorenz
demonstration that 1% process noise destroys pointwise predictability within a
few Lyapunov times.
"""

import numpy as np

from dsrlab import harness, systems

# ----- bistability ------------------------------------------------------------
bundle = harness.scenario("bistable_neuron")
for key in ("fixed_point", "oscillation"):
    traj = bundle[key]
    verdict = systems.classify_limit_behavior(traj.channel(1), 0.25, bundle["classify_tol"])
    V = traj.samples[:, 0]
    print(f"bistable start {key!r}: classified {verdict}, V tail range "
          f"[{V[-2000:].min():.1f}, {V[-2000:].max():.1f}] mV")

# ----- N-tipping ----------------------------------------------------------------
print("\nN-tipping: voltage noise kicks the resting neuron across the basin boundary")
for seed in range(3):
    bundle = harness.scenario("n_tipping", seed=seed)
    traj = bundle["trajectory"].channel(1)
    win = 5000
    labels = [
        systems.classify_limit_behavior(traj.slice(w, w + win), 1.0, bundle["classify_tol"])
        for w in range(0, traj.n_steps - win + 1, win)
    ]
    print(f"  seed {seed}: window labels {labels}")

# ----- B-tipping -----------------------------------------------------------------
print("\nB-tipping: the NMDA conductance ramps 10.2 -> 11.0 after 4000 ms")
bundle = harness.scenario("b_tipping")
traj = bundle["trajectory"]
V = traj.samples[:, 0]
win = int(1000.0 / traj.dt)
for w in range(0, traj.n_steps - win + 1, 2 * win):
    sp = harness.spike_times(V[w : w + win], traj.dt)
    cv = harness.isi_cv(sp)
    g = bundle["ramp"].value_at((w + win / 2) * traj.dt)
    regime = "bursting" if cv > 0.5 else "spiking"
    print(f"  t=[{w * traj.dt:6.0f},{(w + win) * traj.dt:6.0f}] ms  g_NMDA={g:5.2f}  "
          f"ISI CV={cv:5.2f}  -> {regime}")
print(f"training data ends at {bundle['train_cut'] * traj.dt:.0f} ms, before the transition")

# ----- chaos and the limits of prediction ---------------------------------------
print("\ntwo Lorenz runs, same initial condition, 1% process noise:")
a, b, err = harness.chaos_divergence_demo(noise_pct=1.0, n_steps=30_000, dt=0.01, seed=0)
t_cross = float(np.argmax(err > 1.0)) * 0.01
corr = np.corrcoef(a.samples[20_000:, 0], b.samples[20_000:, 0])[0, 1]
print(f"  per-channel NRMSE crosses 1.0 at t = {t_cross:.1f} time units")
print(f"  x-channel correlation over the final third: {corr:.3f}")
print("  pointwise forecasts are meaningless past a few Lyapunov times;")
print("  long-term statistics are the right target")
