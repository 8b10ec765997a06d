"""Rooftop temperature error as at-sensor noise grows.

Noise is given as a fraction of the mean noise-free sensor exitance; each
level is repeated over several scene seeds.

    python scripts/noise_sweep.py --levels 0 0.005 0.01 0.02 0.04 --seeds 10
"""
import argparse

import numpy as np

from rooftemp.instrument import fit_all, session_from_readings
from rooftemp.pipeline import process, rmse_by_material
from rooftemp.radiometry import LWIR_DEVICE, LWIR_IMAGER, build_planck_table
from rooftemp.spectra import reference_table
from rooftemp.synth import generate_scene, random_scene_spec, simulate_images


def run(seed, frac, size, materials, img, dev):
    spec = random_scene_spec(64, 30, size, size, seed=seed)
    scene = generate_scene(spec, materials, dev)
    quiet = simulate_images(scene, spec, img)
    mean_sensor = float(np.mean([r.values[r.valid].mean() for r in quiet]))
    spec.atmosphere = {**spec.atmosphere, "noise_sigma": frac * mean_sensor}
    rasters = simulate_images(scene, spec, img)
    cals, _ = fit_all(session_from_readings(scene.calibration_readings), dev)
    res = process(rasters, scene.footprints, scene.readings, materials, img, dev, {c.instrument_id: c for c in cals})
    return rmse_by_material(res.validation)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--levels", type=float, nargs="+", default=[0.0, 0.005, 0.01, 0.02, 0.04])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--size", type=int, default=512)
    args = ap.parse_args()
    materials = reference_table()
    img, dev = build_planck_table(LWIR_IMAGER), build_planck_table(LWIR_DEVICE)
    print("noise/mean  material  RMSE mean  RMSE max  (K, over seeds)")
    for frac in args.levels:
        per = {}
        for seed in range(args.seeds):
            for mat, e in run(seed, frac, args.size, materials, img, dev).items():
                per.setdefault(mat, []).append(e.rmse)
        for mat, vals in sorted(per.items()):
            print(f"{frac:9.3f}  {mat:8s}  {np.mean(vals):9.3f}  {np.max(vals):8.3f}")


if __name__ == "__main__":
    main()
