"""Named physical constants of the Sun-Jupiter system and the constants file.

All dynamical code receives mu/ecc explicitly; the values collected here are
the defaults used when nothing else is specified.  A small ``key = value``
text format lets a run override them from disk (see `load_constants`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict, replace

# Sun-Jupiter mass parameter m_J/(m_S + m_J).
MU_SUN_JUPITER = 9.53881e-4

# Eccentricity of Jupiter's orbit.
ECC_JUPITER = 0.04869

# Mean Sun-Jupiter distance in km, used to adimensionalise physical radii.
MEAN_DISTANCE_KM = 7.78479e8

# Physical radii in km.
RADIUS_SUN_KM = 696000.0
RADIUS_JUPITER_KM = 71492.0

# Gauss gravitational constant, AU^(3/2) / day / sqrt(solar mass).
GAUSS_K = 0.01720209895

# Routh critical mass ratio: triangular points are linearly stable below it.
MU_ROUTH = (1.0 - math.sqrt(69.0) / 9.0) / 2.0

# Escape radius (adimensional): trajectories beyond it are abandoned.
ESCAPE_RADIUS = 10.0


@dataclass(frozen=True)
class ConstantsTable:
    """Constants bundle used by the pipeline; the constants-file contents."""

    mu: float = MU_SUN_JUPITER
    ecc: float = ECC_JUPITER
    mean_distance_km: float = MEAN_DISTANCE_KM
    radius_sun_km: float = RADIUS_SUN_KM
    radius_jupiter_km: float = RADIUS_JUPITER_KM
    gauss_k: float = GAUSS_K
    escape_radius: float = ESCAPE_RADIUS

    @property
    def radius_sun(self) -> float:
        """Sun collision radius in adimensional units."""
        return self.radius_sun_km / self.mean_distance_km

    @property
    def radius_jupiter(self) -> float:
        """Jupiter collision radius in adimensional units."""
        return self.radius_jupiter_km / self.mean_distance_km

    @property
    def jupiter_mass_solar(self) -> float:
        """Jupiter mass in solar masses, consistent with mu."""
        return self.mu / (1.0 - self.mu)

    @property
    def mu_star(self) -> float:
        """Two-body gravitational parameter k^2 (m_S + m_J), AU^3/day^2."""
        return self.gauss_k ** 2 * (1.0 + self.jupiter_mass_solar)


DEFAULTS = ConstantsTable()

_FIELD_DOC = {
    "mu": "mass parameter m2/(m1+m2)",
    "ecc": "orbital eccentricity of the primaries",
    "mean_distance_km": "mean distance between the primaries (km)",
    "radius_sun_km": "physical radius of the first primary (km)",
    "radius_jupiter_km": "physical radius of the second primary (km)",
    "gauss_k": "Gauss gravitational constant (AU^1.5/day/sqrt(Msun))",
    "escape_radius": "adimensional radius beyond which integration stops",
}


def save_constants(table: ConstantsTable, path) -> None:
    """Write a constants file: '# comment' lines and 'key = value' pairs."""
    lines = ["# hildadyn constants file"]
    for key, value in asdict(table).items():
        lines.append(f"# {_FIELD_DOC[key]}")
        lines.append(f"{key} = {value!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_constants(path) -> ConstantsTable:
    """Read a constants file written by `save_constants`.

    Unknown keys raise; missing keys fall back to the defaults.
    """
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, _, text = line.partition("=")
            key = key.strip()
            if key not in _FIELD_DOC:
                raise ValueError(f"{path}:{lineno}: unknown constant {key!r}")
            values[key] = float(text)
    return replace(DEFAULTS, **values)
