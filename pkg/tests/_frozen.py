"""Frozen regression values.

Regenerate with  python3 scripts/freeze_oracles.py  (independent quadrature /
closed-form / 10x-tolerance oracles; see that script for the derivations).
"""

# disk chord advances (radial quadrature oracle, epsrel 1e-14)
DISK_ADVANCE_P2 = 0.5764929932662148
DISK_ADVANCE_P8 = 0.047966063348740234

# concave-quartic boundary arclengths (10x-resolution quadrature oracle)
QUARTIC_L = 5.89322638111347
QUARTIC_Q_TOP = 1.4733065952783675
QUARTIC_Q_BOTTOM = 4.419919785835103

# eps whose fitted-circle launch gives disk advance exactly 2 pi / 8
DISK_RESONANT_EPS = 0.5434295686657606

# disk invariant-circle deviation: measured dev/eps^5 in [0.76, 0.85] over
# eps in [0.1, 0.25]; frozen bound with 2x margin
DISK_CIRCLE_DEV_C = 1.7

# adiabatic drift constants drift * p^3 (seed-0 jets): disk ~3.04e-6,
# quartic max 4.8e-3 at p = 8; frozen with ~2x margin
DISK_DRIFT_C = 6.5e-6
QUARTIC_DRIFT_C = 1.0e-2
