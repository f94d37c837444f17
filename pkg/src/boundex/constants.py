"""Physical constants and unit helpers (energies in eV, times in s)."""

import math

PLANCK_EV_S = 4.135667696e-15
HBAR_EV_S = PLANCK_EV_S / (2.0 * math.pi)

PS = 1e-12
NS = 1e-9
US = 1e-6
FS_PER_S = 10**15
