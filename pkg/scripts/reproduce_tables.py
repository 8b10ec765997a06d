"""Band emissivity table for a folder of reflectance spectra, and the wind-gust overlap table.

    python scripts/reproduce_tables.py [SPECTRA_DIR]

Without a folder the bundled synthetic spectra are used. With the ASTER
JHU spectra (asphalt, concrete, tap water, grass) the printed values can be
compared with the reference column.
"""
import sys
from importlib import resources
from pathlib import Path

from rooftemp.pipeline import BuildingReport, overlap_report
from rooftemp.radiometry import LWIR_DEVICE, LWIR_IMAGER, kelvin
from rooftemp.spectra import band_emissivity, emissivity_curve, read_spectral_curve, reference_table

OVERLAP_CASES = {
    1: [("3749", "39", 5.85860), ("3750", "39", 5.65984)],
    2: [("3029", "32", -5.82849), ("3030", "32", -6.01958), ("3557", "37", -5.80157)],
    3: [("1440", "18", -6.19326), ("1441", "18", -6.69247)],
}


def main():
    folder = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(str(resources.files("rooftemp").joinpath("data", "spectra")))
    ref = reference_table()
    print(f"{'material':14s} {'8-9.2':>10s} {'8-14':>10s}   reference 8-9.2 / 8-14")
    for path in sorted(folder.glob("*.txt")):
        eps = emissivity_curve(read_spectral_curve(path))
        e1, e2 = band_emissivity(eps, LWIR_IMAGER), band_emissivity(eps, LWIR_DEVICE)
        known = f"{ref.get(path.stem, LWIR_IMAGER):.8f} / {ref.get(path.stem, LWIR_DEVICE):.8f}" if path.stem in ref else "-"
        print(f"{path.stem:14s} {e1:10.8f} {e2:10.8f}   {known}")

    print("\ncase  image_a  image_b  same line  delta (K)")
    for case, views in OVERLAP_CASES.items():
        reps = [BuildingReport(f"case{case}", "asphalt", img, 1, kelvin(t), kelvin(t), kelvin(t), fl) for img, fl, t in views]
        for row in overlap_report(reps):
            print(f"{case:4d}  {row.image_a:>7s}  {row.image_b:>7s}  {str(row.same_flight_line):>9s}  {row.delta:+.5f}")


if __name__ == "__main__":
    main()
