"""Physical constants and unit conversions.

Internal unit system (everything downstream assumes it):

==================  =========================
distance            Angstrom
time                millisecond
magnetic field      Gauss
energy / couplings  angular frequency, rad/ms
gyromagnetic ratio  rad / (ms * G)
==================  =========================

Couplings cross the I/O boundary in MHz (linear frequency) and are
converted on ingestion; nothing outside this module hardcodes a
conversion factor.
"""

import math

# SI values (CODATA); MU0_OVER_4PI uses the exact pre-2019 definition,
# which differs from the measured value by ~5e-10 relative.
HBAR_SI = 1.054571817e-34  # J s
BOHR_MAGNETON_SI = 9.2740100783e-24  # J / T
MU0_OVER_4PI_SI = 1e-7  # T^2 m^3 / J

#: Free-electron g factor used for default central-spin Zeeman terms.
FREE_ELECTRON_G = 2.002318

#: Bohr magneton over hbar, rad / (ms * G).  1 rad/(s T) = 1e-7 rad/(ms G).
MUB_OVER_HBAR = BOHR_MAGNETON_SI / HBAR_SI * 1e-7

#: Free-electron gyromagnetic ratio, rad / (ms * G), sign convention
#: H_Z = +gamma B.S (the sign lives in gamma).
ELECTRON_GAMMA = FREE_ELECTRON_G * MUB_OVER_HBAR

#: 1 MHz (linear frequency) expressed as angular frequency in rad/ms.
MHZ_TO_RADMS = 2e3 * math.pi
RADMS_TO_MHZ = 1.0 / MHZ_TO_RADMS

#: Point-dipole prefactor: coupling = DIPOLE_PREFACTOR * g1 * g2 / r^3 with
#: g in rad/(ms G) and r in Angstrom gives rad/ms.  Collapsing the SI unit
#: conversions leaves (mu0/4pi) * hbar * 1e41.
DIPOLE_PREFACTOR = MU0_OVER_4PI_SI * HBAR_SI * 1e41

#: Default minimum spin-spin separation (Angstrom) below which point-dipole
#: couplings are refused as coincident.
MIN_DIPOLE_DISTANCE = 0.1
