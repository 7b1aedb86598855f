"""How much a wrong focal length hurts full-frame fitting.

Fits a handful of scenes with the focal scaled by each factor and prints
the resulting MPJPE curve.
"""
from cliff_geom.estimator.experiments import focal_sweep
from cliff_geom.synthetic import gen_dataset

scenes = gen_dataset(2022, 8)
res = focal_sweep(scenes, (0.4, 0.8, 1.0, 1.25, 3.0), sigma=2.0, prior_noise_deg=10.0)
base = res["mpjpe"][res["factors"].index(1.0)]
for f, e in zip(res["factors"], res["mpjpe"]):
    print(f"focal x{f:<5g} MPJPE {e:6.1f} mm  ({100 * (e / base - 1):+5.1f}%)")
