"""Low-emissivity roofs under an ELC fitted on high-emissivity targets.

The simulator adds reflected background exitance, (1 - emissivity) times the
blackbody exitance of the surroundings, which the pipeline does not model.
Diffuse roofs see the surrounding ground; specular metal sees the cold sky.

    python scripts/metal_bias.py --sky 180 --seeds 3
"""
import argparse

import numpy as np

from rooftemp.instrument import fit_all, session_from_readings
from rooftemp.pipeline import process, rmse_by_material
from rooftemp.radiometry import LWIR_DEVICE, LWIR_IMAGER, build_planck_table
from rooftemp.spectra import reference_table
from rooftemp.synth import generate_scene, random_scene_spec, simulate_images


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sky", type=float, default=180.0, help="effective sky temperature seen by metal, K")
    ap.add_argument("--surround", type=float, default=271.66, help="temperature seen by diffuse surfaces, K")
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--size", type=int, default=512)
    args = ap.parse_args()
    materials = reference_table()
    img, dev = build_planck_table(LWIR_IMAGER), build_planck_table(LWIR_DEVICE)
    errors = {}
    for seed in range(args.seeds):
        spec = random_scene_spec(64, 30, args.size, args.size, seed=seed, target_materials=("asphalt", "concrete"))
        spec.reflection = {"surround_temp_K": args.surround, "sky_temp_K": args.sky, "specular_materials": ["metal"]}
        scene = generate_scene(spec, materials, dev)
        cals, _ = fit_all(session_from_readings(scene.calibration_readings), dev)
        res = process(simulate_images(scene, spec, img), scene.footprints, scene.readings, materials, img, dev,
                      {c.instrument_id: c for c in cals})
        for mat, e in rmse_by_material(res.validation).items():
            errors.setdefault(mat, []).append(e.mean_error)
    print(f"sky {args.sky} K, surround {args.surround} K")
    for mat, vals in sorted(errors.items()):
        eps = materials.get(mat, LWIR_IMAGER)
        print(f"{mat:8s} emissivity {eps:.3f}  mean error {np.mean(vals):+.2f} K  (per seed {', '.join(f'{v:+.2f}' for v in vals)})")


if __name__ == "__main__":
    main()
