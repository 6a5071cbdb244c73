"""Boundary-condition catalog and its per-face materialization.

Conjugate fluid/solid interfaces are *not* boundary conditions here: solids
are resolved cells, so those faces stay interior to the energy equation and
act as no-slip walls for the flow equations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .mesh import Mesh


class BoundaryError(ValueError):
    pass


class FaceKind(IntEnum):
    WALL = 0
    INLET = 1
    OUTLET = 2
    SYMMETRY = 3


class ThermalMode(IntEnum):
    ADIABATIC = 0
    FIXED_FLUX = 1
    FIXED_T = 2


@dataclass
class VelocityInlet:
    velocity: tuple
    temperature: float
    k: float
    eps: float


@dataclass
class OutletFlow:
    """Outflow patch; ``flow`` is the outward volumetric rate in m3/s.
    ``None`` means zero-gradient outflow balancing the remaining inflow."""

    flow: float | None = None


@dataclass
class Wall:
    thermal: str = "adiabatic"       # adiabatic | fixed_flux | fixed_temperature | conjugate
    heat_flux: float = 0.0           # W/m2, positive into the domain
    temperature: float | None = None  # K, for fixed_temperature
    velocity: tuple = (0.0, 0.0, 0.0)  # tangential wall motion


@dataclass
class Symmetry:
    pass


@dataclass
class BoundarySpec:
    patch: str
    kind: object  # VelocityInlet | OutletFlow | Wall | Symmetry


@dataclass
class FaceValues:
    """Materialized boundary-face values for one solver iteration."""

    v: np.ndarray        # (nbf, 3) face velocity
    mass_flux: np.ndarray  # (nbf,) rho * v.n * A, positive out of the domain
    t: np.ndarray
    k: np.ndarray
    eps: np.ndarray


FLOW_TOL = 1e-3  # steady incompressible consistency: 0.1 %


class BoundaryModel:
    """Validated boundary specification resolved onto mesh boundary faces."""

    def __init__(self, mesh: Mesh, specs, rho_ref: float):
        self.mesh = mesh
        self.rho = float(rho_ref)
        errors = []
        by_patch = {}
        names = mesh.patch_names()
        for s in specs:
            if s.patch not in names:
                errors.append(f"boundary spec names unknown patch {s.patch!r}")
            elif s.patch in by_patch:
                errors.append(f"patch {s.patch!r} has more than one boundary spec")
            else:
                by_patch[s.patch] = s.kind
        for nm in names:
            if nm not in by_patch:
                errors.append(f"patch {nm!r} has no boundary spec")

        nbf = mesh.nbf
        self.kind = np.full(nbf, FaceKind.WALL.value, dtype=np.int8)
        self.vel = np.zeros((nbf, 3))
        self.t_mode = np.full(nbf, ThermalMode.ADIABATIC.value, dtype=np.int8)
        self.t_value = np.zeros(nbf)
        self.q_value = np.zeros(nbf)
        self.k_value = np.zeros(nbf)
        self.eps_value = np.zeros(nbf)
        self.outlet_patches = []   # (patch_name, face_ids, flow-or-None)
        self.specs = list(specs)

        q_in = 0.0
        q_out = 0.0
        has_free_outlet = False
        for nm, kind in by_patch.items():
            faces = mesh.patch(nm).faces
            if isinstance(kind, VelocityInlet):
                if kind.k <= 0.0 or kind.eps <= 0.0:
                    errors.append(f"inlet {nm!r}: k and eps must be > 0")
                self.kind[faces] = FaceKind.INLET
                self.vel[faces] = np.asarray(kind.velocity, dtype=float)
                self.t_mode[faces] = ThermalMode.FIXED_T
                self.t_value[faces] = kind.temperature
                self.k_value[faces] = kind.k
                self.eps_value[faces] = kind.eps
                vn = self.vel[faces, 0] * 0.0
                for ax in range(3):
                    sel = mesh.bf_axis[faces] == ax
                    vn[sel] = kind.velocity[ax] * mesh.bf_sign[faces[sel]]
                q_in += float(np.sum(np.maximum(-vn, 0.0) * mesh.bf_area[faces]))
                q_in -= float(np.sum(np.maximum(vn, 0.0) * mesh.bf_area[faces]))
            elif isinstance(kind, OutletFlow):
                self.kind[faces] = FaceKind.OUTLET
                self.outlet_patches.append((nm, faces, kind.flow))
                if kind.flow is None:
                    has_free_outlet = True
                else:
                    q_out += float(kind.flow)
            elif isinstance(kind, Wall):
                self.kind[faces] = FaceKind.WALL
                self.vel[faces] = np.asarray(kind.velocity, dtype=float)
                if kind.thermal in ("adiabatic", "conjugate"):
                    # solid-fluid exchange happens across interior faces, so a
                    # conjugate wall carries no extra exterior flux
                    self.t_mode[faces] = ThermalMode.ADIABATIC
                elif kind.thermal == "fixed_flux":
                    self.t_mode[faces] = ThermalMode.FIXED_FLUX
                    self.q_value[faces] = kind.heat_flux
                elif kind.thermal == "fixed_temperature":
                    if kind.temperature is None:
                        errors.append(f"wall {nm!r}: fixed_temperature needs a value")
                    else:
                        self.t_mode[faces] = ThermalMode.FIXED_T
                        self.t_value[faces] = kind.temperature
                else:
                    errors.append(f"wall {nm!r}: unknown thermal mode {kind.thermal!r}")
            elif isinstance(kind, Symmetry):
                self.kind[faces] = FaceKind.SYMMETRY
            else:
                errors.append(f"patch {nm!r}: unknown boundary kind {type(kind).__name__}")

        scale = max(abs(q_in), abs(q_out))
        if not has_free_outlet and scale > 0.0 and abs(q_in - q_out) > FLOW_TOL * scale:
            errors.append(
                "prescribed outlet flow "
                f"{q_out:.6g} m3/s differs from total inlet flow {q_in:.6g} m3/s "
                f"by more than {100 * FLOW_TOL:.1f}%"
            )
        if errors:
            raise BoundaryError("; ".join(errors))

        self.q_in_total = q_in
        self.q_out_prescribed = q_out
        self.is_wall = self.kind == FaceKind.WALL
        self.is_inlet = self.kind == FaceKind.INLET
        self.is_outlet = self.kind == FaceKind.OUTLET
        self.is_symmetry = self.kind == FaceKind.SYMMETRY
        # fluid-adjacent boundary faces carry flow conditions
        self.fluid_face = mesh.fluid[mesh.bf_cell]

    # -- per-iteration materialization ------------------------------------

    def outlet_targets(self):
        """Target outward flow per outlet patch, after balancing free outlets."""
        remainder = self.q_in_total - self.q_out_prescribed
        free = [(nm, f) for nm, f, q in self.outlet_patches if q is None]
        targets = []
        a_free = sum(float(np.sum(self.mesh.bf_area[f])) for _, f in free)
        for nm, f, q in self.outlet_patches:
            if q is not None:
                targets.append((nm, f, float(q)))
            else:
                a = float(np.sum(self.mesh.bf_area[f]))
                targets.append((nm, f, remainder * a / a_free))
        return targets

    def face_velocity(self, v_cell: np.ndarray):
        """Boundary face velocities and mass fluxes for the current state."""
        m = self.mesh
        vf = v_cell[m.bf_cell].copy()
        vf[~self.fluid_face] = 0.0

        # symmetry: mirror tangential, zero normal component
        sym = self.is_symmetry
        if sym.any():
            idx = np.flatnonzero(sym)
            vf[idx, m.bf_axis[idx]] = 0.0
        # walls and inlets: prescribed values
        fixed = self.is_wall | self.is_inlet
        vf[fixed] = self.vel[fixed]

        vn = np.zeros(m.nbf)
        for ax in range(3):
            sel = m.bf_axis == ax
            vn[sel] = vf[sel, ax] * m.bf_sign[sel]

        # outlets: one-signed extrapolation scaled to the target flow
        for nm, faces, q in self.outlet_targets():
            raw = np.maximum(vn[faces], 0.0)
            a = m.bf_area[faces]
            s = float(np.sum(raw * a))
            a_tot = float(np.sum(a))
            if q > 0.0 and s > 0.05 * q:
                vnf = raw * (q / s)
            else:
                vnf = np.full(faces.size, q / a_tot)
            vn[faces] = vnf
            # tangential components keep their zero-gradient cell values
            vf[faces, m.bf_axis[faces]] = vnf * m.bf_sign[faces]

        mass = np.where(self.fluid_face, self.rho * vn * m.bf_area, 0.0)
        # walls and symmetry never carry mass flux
        mass[self.is_wall | self.is_symmetry] = 0.0
        return vf, mass

    def face_scalars(self, t_cell, k_cell, eps_cell):
        m = self.mesh
        t = t_cell[m.bf_cell].copy()
        fixed_t = self.t_mode == ThermalMode.FIXED_T
        t[fixed_t] = self.t_value[fixed_t]
        k = k_cell[m.bf_cell].copy()
        eps = eps_cell[m.bf_cell].copy()
        k[self.is_inlet] = self.k_value[self.is_inlet]
        eps[self.is_inlet] = self.eps_value[self.is_inlet]
        k[~self.fluid_face] = 0.0
        eps[~self.fluid_face] = 0.0
        return t, k, eps


def apply_boundary(mesh: Mesh, state, model: BoundaryModel) -> FaceValues:
    """Materialize all boundary-face values for the current field state."""
    vf, mass = model.face_velocity(state.v.data)
    t, k, eps = model.face_scalars(state.t.data, state.k.data, state.eps.data)
    return FaceValues(v=vf, mass_flux=mass, t=t, k=k, eps=eps)
