"""Per-region poroelastic constants."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class MaterialRegion:
    """Isotropic linear poroelastic material, SI units throughout.

    ``inv_biot_modulus`` is 1/M in 1/Pa; an incompressible fluid and grain
    is 1/M = 0 with b = 1. ``solid_density`` is used as the bulk density of
    the saturated skeleton when a gravity body force is assembled.
    """

    young_modulus: float
    poisson_ratio: float
    biot_coefficient: float = 1.0
    inv_biot_modulus: float = 0.0
    permeability: float = 0.0
    viscosity: float = 1.0
    solid_density: float = 0.0
    fluid_density: float = 0.0

    def __post_init__(self):
        if not self.young_modulus > 0:
            raise ValueError(f"Young's modulus must be > 0, got {self.young_modulus}")
        if self.poisson_ratio == 0.5:
            raise ValueError("Poisson ratio 0.5 makes lambda and K_dr singular")
        if not 0 <= self.poisson_ratio < 0.5:
            raise ValueError(f"Poisson ratio must lie in [0, 0.5), got {self.poisson_ratio}")
        if not 0 <= self.biot_coefficient <= 1:
            raise ValueError(f"Biot coefficient must lie in [0, 1], got {self.biot_coefficient}")
        if self.inv_biot_modulus < 0:
            raise ValueError("1/M must be >= 0")
        if self.permeability < 0:
            raise ValueError("permeability must be >= 0")
        if not self.viscosity > 0:
            raise ValueError("viscosity must be > 0")

    @classmethod
    def from_bulk_modulus(cls, bulk_modulus: float, poisson_ratio: float, **kwargs) -> "MaterialRegion":
        """Build from the drained bulk modulus K_dr instead of E."""
        if not 0 <= poisson_ratio < 0.5:
            raise ValueError(f"Poisson ratio must lie in [0, 0.5), got {poisson_ratio}")
        return cls(young_modulus=3.0 * bulk_modulus * (1.0 - 2.0 * poisson_ratio), poisson_ratio=poisson_ratio, **kwargs)

    @property
    def shear_modulus(self) -> float:
        return self.young_modulus / (2.0 * (1.0 + self.poisson_ratio))

    @property
    def lame_lambda(self) -> float:
        nu = self.poisson_ratio
        return self.young_modulus * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))

    @property
    def bulk_modulus(self) -> float:
        return self.young_modulus / (3.0 * (1.0 - 2.0 * self.poisson_ratio))


def derived_moduli(m: MaterialRegion) -> tuple[float, float, float]:
    """Return (lambda, G, K_dr) in Pa."""
    return m.lame_lambda, m.shear_modulus, m.bulk_modulus


def young_poisson_from_lame(lam: float, shear: float) -> tuple[float, float]:
    """Inverse conversion (lambda, G) -> (E, nu)."""
    nu = lam / (2.0 * (lam + shear))
    young = shear * (3.0 * lam + 2.0 * shear) / (lam + shear)
    return young, nu


def optimal_tau(lam: float, shear: float) -> float:
    """Stabilization constant 9 / (32 (lambda + 4 G)) minimizing the local undrained Schur-complement condition number."""
    return 9.0 / (32.0 * (lam + 4.0 * shear))
