"""Field storage and material property containers.

All temperatures are kelvin internally; config parsing converts from
degrees Celsius where requested.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .mesh import Mesh

T_ZERO_C = 273.15
GRAVITY_DEFAULT = (0.0, -9.81, 0.0)


class FieldError(ValueError):
    pass


@dataclass
class Field:
    """Cell-centered scalar or 3-vector values over the whole grid.

    Values are zero in cells where the quantity carries no unknown
    (blanked cells always; solid cells for flow quantities).
    """

    name: str
    units: str
    data: np.ndarray

    def copy(self) -> "Field":
        return Field(self.name, self.units, self.data.copy())

    def check_finite(self):
        if not np.all(np.isfinite(self.data)):
            raise FieldError(f"field {self.name!r} contains NaN/Inf")


@dataclass
class FluidProps:
    """Constant-property fluid with Boussinesq expansivity."""

    rho_ref: float = 1.127          # kg/m3, dry air near 40 C
    mu0: float = 1.91e-5            # Pa s
    cp: float = 1005.0              # J/(kg K)
    lam: float = 0.027              # W/(m K)
    beta: float = 3.193e-3          # 1/K
    t_ref: float = 40.0 + T_ZERO_C  # K
    g: tuple = GRAVITY_DEFAULT

    def __post_init__(self):
        for nm in ("rho_ref", "mu0", "cp", "lam"):
            if getattr(self, nm) <= 0.0:
                raise FieldError(f"fluid property {nm} must be > 0")
        if self.beta < 0.0:
            raise FieldError("thermal expansivity must be >= 0")
        self.g = tuple(float(v) for v in self.g)

    @property
    def nu(self) -> float:
        return self.mu0 / self.rho_ref


@dataclass
class SolidProps:
    """Orthotropic conducting solid with a homogeneous volumetric source.

    ``lam_axial`` applies along ``axial_axis`` (default y, the winding axis);
    ``lam_radial`` along the two transverse axes.  ``rho_cp`` only scales
    false-time-step relaxation; the solve itself is steady.
    """

    name: str
    lam_axial: float
    lam_radial: float
    source: float = 0.0      # W/m3
    rho_cp: float = 2.0e6    # J/(m3 K)
    axial_axis: int = 1

    def __post_init__(self):
        if self.lam_axial <= 0.0 or self.lam_radial <= 0.0:
            raise FieldError(f"solid {self.name!r}: conductivities must be > 0")
        if self.source < 0.0:
            raise FieldError(f"solid {self.name!r}: volumetric source must be >= 0")

    def lam_by_axis(self):
        lam = [self.lam_radial] * 3
        lam[self.axial_axis] = self.lam_axial
        return tuple(lam)


@dataclass
class TurbConstants:
    """Standard k-epsilon closure constants (config-overridable)."""

    c_mu: float = 0.09
    c1: float = 1.44
    c2: float = 1.92
    pr_k: float = 1.0
    pr_eps: float = 1.3

    def __post_init__(self):
        for nm in ("c_mu", "c1", "c2", "pr_k", "pr_eps"):
            if getattr(self, nm) <= 0.0:
                raise FieldError(f"turbulence constant {nm} must be > 0")


@dataclass
class FieldSet:
    """All solved and derived fields of one case."""

    v: Field
    p: Field
    t: Field
    k: Field
    eps: Field
    mu_t: Field
    mu_eff: Field

    def all_fields(self):
        return [self.v, self.p, self.t, self.k, self.eps, self.mu_t, self.mu_eff]

    def copy(self) -> "FieldSet":
        return FieldSet(*[f.copy() for f in self.all_fields()])

    def check_finite(self):
        for f in self.all_fields():
            f.check_finite()


def init_stagnant(
    mesh: Mesh,
    props: FluidProps,
    t0: float,
    k_floor: float = 1e-4,
    eps_floor: float = 1e-4,
    turb: TurbConstants | None = None,
) -> FieldSet:
    """Stagnant start: V=0, gauge p=0, uniform T, k/eps at their floors."""
    if t0 <= 0.0:
        raise FieldError(f"initial temperature must be > 0 K, got {t0}")
    n = mesh.ncells
    v = Field("velocity", "m/s", np.zeros((n, 3)))
    p = Field("p", "Pa", np.zeros(n))
    t = Field("T", "K", np.where(mesh.live, t0, 0.0))
    k = Field("k", "m2/s2", np.where(mesh.fluid, k_floor, 0.0))
    eps = Field("eps", "m2/s3", np.where(mesh.fluid, eps_floor, 0.0))
    c_mu = (turb or TurbConstants()).c_mu
    mu_t0 = c_mu * props.rho_ref * k_floor**2 / eps_floor
    mu_t = Field("mu_t", "Pa s", np.where(mesh.fluid, mu_t0, 0.0))
    mu_eff = Field("mu_eff", "Pa s", np.where(mesh.fluid, props.mu0 + mu_t0, 0.0))
    return FieldSet(v, p, t, k, eps, mu_t, mu_eff)


def enthalpy(t, cp: float):
    """Static enthalpy h = cp * T for a constant-cp fluid."""
    return cp * np.asarray(t, dtype=float)


def total_enthalpy(t, v, cp: float):
    """h_tot = cp*T + |V|^2/2 (derived output; the energy solve drops the
    kinetic part, which is sub-0.05 K-equivalent at indoor-air speeds)."""
    vv = np.asarray(v, dtype=float)
    return enthalpy(t, cp) + 0.5 * np.einsum("ij,ij->i", vv, vv)
