"""Physical constants (CODATA 2018, SI) and the default ion species."""

ELEMENTARY_CHARGE = 1.602176634e-19  # C, exact
EPSILON_0 = 8.8541878128e-12  # F/m
HBAR = 1.054571817e-34  # J s, exact
K_B = 1.380649e-23  # J/K, exact
AMU = 1.66053906660e-27  # kg

CA40_MASS_AMU = 39.9625909

