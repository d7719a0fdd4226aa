"""Noise schedules: beta tables, cumulative alphas, and timestep sub-sampling.

The whole editing engine runs on a discrete diffusion schedule: a table of
per-step variances beta_t and their cumulative signal fractions abar_t.
Sampling never visits all 1000 training steps; instead a strictly increasing
map picks T of them with a uniform stride anchored at the earliest timestep.
"""

import tempfile
from pathlib import Path

import numpy as np

from latentedit import build_schedule, dump_schedule, load_schedule

sched = build_schedule(train_steps=1000, ddim_steps=50)
print(f"training steps: {sched.train_steps}, sub-sampled steps: {sched.ddim_steps}")
print(f"beta range: [{sched.betas[0]:.2e}, {sched.betas[-1]:.2e}] (linear)")
print(f"abar boundary value at t=0: {sched.alpha_bar(0)} (pinned to exactly 1)")
print(f"abar at t=1: {sched.alpha_bars[0]:.6f}   abar at t=1000: {sched.alpha_bars[-1]:.3e}")

print("\ntimestep map (first/last entries):", sched.timestep_map[:4], "...",
      sched.timestep_map[-3:])
strides = np.diff(sched.timestep_map)
print("uniform stride:", set(strides.tolist()))

# alphas decrease strictly; more steps cover the range more densely
coarse = build_schedule(1000, 10)
print("\nT=10 visits training timesteps:", coarse.timestep_map.tolist())

# the per-training-step table round-trips through a plain-text file
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "schedule.txt"
    dump_schedule(sched, path)
    print(f"\ndumped {sched.train_steps} rows to {path.name}; first two lines:")
    print("\n".join(path.read_text().splitlines()[:4]))
    loaded = load_schedule(path)
    assert np.array_equal(loaded.timestep_map, sched.timestep_map)
    assert np.allclose(loaded.alpha_bars, sched.alpha_bars, rtol=1e-12)
    print("reloaded table matches the original bit-for-bit in beta, 1e-12 in abar")
