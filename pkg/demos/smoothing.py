"""Jittery per-frame estimates through a OneEuro filter."""
import numpy as np

from cliff_geom.smoothing import OneEuroConfig, smooth_sequence
from cliff_geom.synthetic import gen_sequence, perturb_params

seq = gen_sequence(0, 120)
rng = np.random.default_rng(0)
noisy = [perturb_params(p, 6.0, rng) for p in seq.params]
for cfg in (OneEuroConfig(), OneEuroConfig(min_cutoff=0.5), OneEuroConfig(min_cutoff=3.0)):
    r = smooth_sequence(noisy, cfg, seq.params)
    print(f"min_cutoff {cfg.min_cutoff:3g} Hz: accel {r.accel_before:8.0f} -> {r.accel_after:7.0f}"
          f" mm/s^2, MPJPE {r.mpjpe_before:5.1f} -> {r.mpjpe_after:5.1f} mm")
