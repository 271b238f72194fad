"""Physical constants shared across the package (km, s, dB units)."""

EARTH_RADIUS_KM = 6371.0
MU_EARTH_KM3_S2 = 398600.4418
SPEED_OF_LIGHT_KM_S = 299792.458
EARTH_ROTATION_RAD_S = 7.2921159e-5
BOLTZMANN_DBW = -228.6  # dBW/K/Hz
