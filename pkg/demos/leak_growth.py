"""Grow one leak, shoot it, and look at what the receivers see.

Run from the repository root:

    python demos/leak_growth.py [out.png]

Writes a figure with the velocity change at three years next to the
time-lapse difference of the middle shot gather.
"""
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from seismoaug.datagen import YEARS, GeneratorConfig, generate_dataset
from seismoaug.wavesim import SimConfig, propagate

cfg = GeneratorConfig().scaled_to(48, 48)
baseline, (scenario,) = generate_dataset(1, cfg, seed=11)
print("leak classes by year:", " ".join(c.name[0] for c in scenario.classes))

sim = SimConfig.surface_acquisition(48, 48, n_shots=3, nt=500)
picked = (YEARS[0], YEARS[9], YEARS[-1])
shots = {y: propagate(scenario.map_at(y), sim).traces[1] for y in picked}
reference = propagate(baseline.grid, sim).traces[1]

fig, axes = plt.subplots(2, 3, figsize=(11, 7))
for k, year in enumerate(picked):
    dv = scenario.map_at(year) - baseline.grid
    axes[0, k].imshow(dv, cmap="Blues_r")
    axes[0, k].set_title(f"year {year}: dv (m/s), min {dv.min():.0f}")
    diff = shots[year] - reference
    lim = np.abs(diff).max() or 1.0
    axes[1, k].imshow(diff.T, aspect="auto", cmap="seismic", vmin=-lim, vmax=lim)
    axes[1, k].set_title("gather minus baseline gather")
fig.tight_layout()
out = sys.argv[1] if len(sys.argv) > 1 else "leak_growth.png"
fig.savefig(out, dpi=100)
print("wrote", out)
