"""Independent high-precision values frozen into the test suite.

Uses mpmath quadrature of Planck's law at 30 digits, sharing no code with
rooftemp's trapezoid integration or its table inversion.

    python scripts/oracle_values.py
"""
import mpmath as mp

mp.mp.dps = 30
h = mp.mpf("6.62607015e-34")
c = mp.mpf("299792458")
k = mp.mpf("1.380649e-23")
C1 = 2 * mp.pi * h * c**2 * mp.mpf(10) ** 24  # W m^-2 um^4
C2 = h * c / k * mp.mpf(10) ** 6  # um K


def planck(lam, t):
    return C1 / lam**5 / mp.expm1(C2 / (lam * t))


def band(lo, hi, t):
    return mp.quad(lambda lam: planck(lam, t), [lo, hi])


def weighted_emissivity(eps, lo, hi, t):
    return mp.quad(lambda lam: eps(lam) * planck(lam, t), [lo, hi]) / band(lo, hi, t)


def invert(lo, hi, m):
    return mp.findroot(lambda t: band(lo, hi, t) - m, 280)


def main():
    print("spectral_exitance(10 um, 300 K)", mp.nstr(planck(10, 300), 15))
    print("band 8-14 @ 300 K", mp.nstr(band(8, 14, 300), 15))
    print("band 8-9.2 @ 300 K", mp.nstr(band(8, mp.mpf("9.2"), 300), 15))
    print("band 8-9.2 @ 276.15 K", mp.nstr(band(8, mp.mpf("9.2"), mp.mpf("276.15")), 15))

    # emissivity 1 - rho for the bundled ramp reflectance (0.10 at 8 um, 0.04 at 14 um)
    def ramp(lam):
        rho = mp.mpf("0.10") + (lam - 8) * (mp.mpf("0.04") - mp.mpf("0.10")) / 6
        return 1 - rho

    print("ramp emissivity 8-14 @ 300 K", mp.nstr(weighted_emissivity(ramp, 8, 14, 300), 15))

    # displayed 276.15 K, device setting 0.95, water 0.9838, 8-14 um
    m = band(8, 14, mp.mpf("276.15")) * mp.mpf("0.95") / mp.mpf("0.9838")
    print("radiant_to_kinetic(276.15, 0.95, 0.9838)", mp.nstr(invert(8, 14, m), 15))


if __name__ == "__main__":
    main()
