"""Conjugate energy equation, Boussinesq buoyancy, and conservation audits.

Temperature is solved as one system over fluid and solid cells.  Advection
acts only across fluid-fluid faces; conduction crosses every live face with a
distance-weighted harmonic conductivity, which makes the interface flux
single-valued by construction.  Solids are orthotropic: one conductivity along
the winding axis, another transverse, selected per face axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boundary import FaceKind, ThermalMode
from .numerics import (
    HIGH_RESOLUTION,
    Discretization,
    SystemBuilder,
    high_res_correction,
    normalized_residual,
    solve_linear,
    van_leer,
)


def conductivity_by_axis(mesh, props, solids, mu_t, pr_t=0.9):
    """(ncells, 3) conductivity: fluid molecular + turbulent part, solids
    orthotropic per region."""
    lam = np.zeros((mesh.ncells, 3))
    lam_fluid = props.lam + props.cp * mu_t / pr_t
    lam[mesh.fluid] = lam_fluid[mesh.fluid, None]
    for rid, sp in solids.items():
        cells = mesh.region_cells(rid)
        lam[cells] = np.array(sp.lam_by_axis())[None, :]
    return lam


def face_conductivity(disc: Discretization, lam_axis):
    """Series (distance-weighted harmonic) conductivity per interior face."""
    o, nb, ax = disc.f_o, disc.f_n, disc.f_axis
    lam_o = lam_axis[o, ax]
    lam_n = lam_axis[nb, ax]
    d_o = (1.0 - disc.f_w) * disc.f_dist
    d_n = disc.f_w * disc.f_dist
    return disc.f_dist / (d_o / np.maximum(lam_o, 1e-300)
                          + d_n / np.maximum(lam_n, 1e-300))


def buoyancy_source(t, props, fluid_mask):
    """Boussinesq body force (rho - rho_ref) g = -rho_ref beta (T - T_ref) g."""
    coef = -props.rho_ref * props.beta * (t - props.t_ref)
    b = coef[:, None] * np.asarray(props.g)[None, :]
    b[~fluid_mask] = 0.0
    return b


def rho_cp_by_cell(mesh, props, solids):
    rc = np.where(mesh.fluid, props.rho_ref * props.cp, 0.0)
    for rid, sp in solids.items():
        rc[mesh.region_cells(rid)] = sp.rho_cp
    return rc


def source_by_cell(mesh, solids):
    s = np.zeros(mesh.ncells)
    for rid, sp in solids.items():
        s[mesh.region_cells(rid)] = sp.source
    return s


@dataclass
class EnergyResult:
    res_t: tuple
    lin: object


def assemble_energy(disc, fluid_sub, state, props, solids, flux, fvals, model,
                    scheme=HIGH_RESOLUTION, limiter=van_leer, alpha=0.8,
                    pr_t=0.9, false_dt=None):
    """Build the conjugate temperature system.

    ``disc`` spans all live cells; ``fluid_sub`` indexes its interior faces
    with fluid on both sides (where the mass fluxes live, in matching order).
    """
    m = disc.mesh
    cp = props.cp
    t = state.t.data
    lam_axis = conductivity_by_axis(m, props, solids, state.mu_t.data, pr_t)

    sb = SystemBuilder(disc)
    sb.diffusion_interior(face_conductivity(disc, lam_axis))
    sb.advection_interior_upwind(flux * cp, sel=fluid_sub)
    if scheme == HIGH_RESOLUTION and fluid_sub.size:
        grad_t = disc.grad(t, boundary_values=fvals.t)
        dc = high_res_correction(disc, t, grad_t, flux, limiter, sel=fluid_sub)
        sb.deferred_correction(flux * cp, dc, sel=fluid_sub)

    b = disc.b_idx
    kind = model.kind[b]
    b_in = b[kind == FaceKind.INLET]
    b_out = b[kind == FaceKind.OUTLET]
    if b_in.size:
        gam = lam_axis[m.bf_cell[b_in], m.bf_axis[b_in]]
        sb.dirichlet_boundary(b_in, gam, model.t_value[b_in])
        sb.advection_boundary(b_in, fvals.mass_flux[b_in] * cp, fvals.t[b_in])
    if b_out.size:
        sb.advection_boundary(b_out, fvals.mass_flux[b_out] * cp, fvals.t[b_out])
    wall_fixed = b[model.is_wall[b] & (model.t_mode[b] == ThermalMode.FIXED_T)]
    if wall_fixed.size:
        gam = lam_axis[m.bf_cell[wall_fixed], m.bf_axis[wall_fixed]]
        sb.dirichlet_boundary(wall_fixed, gam, model.t_value[wall_fixed])
    wall_flux = b[model.is_wall[b] & (model.t_mode[b] == ThermalMode.FIXED_FLUX)]
    if wall_flux.size:
        sb.flux_boundary(wall_flux, model.q_value[wall_flux])

    sb.source(source_by_cell(m, solids)[disc.cells])
    if false_dt is not None:
        coef = rho_cp_by_cell(m, props, solids)[disc.cells] \
            * m.volumes[disc.cells] / false_dt
        sb.false_time_step(coef, t[disc.cells])
    sb.relax(alpha, t[disc.cells])
    return sb.build()


def solve_energy(disc, fluid_sub, state, props, solids, flux, fvals, model,
                 scheme=HIGH_RESOLUTION, limiter=van_leer, alpha=0.8,
                 pr_t=0.9, false_dt=None, rtol=1e-3, maxiter=500) -> EnergyResult:
    a, rhs = assemble_energy(disc, fluid_sub, state, props, solids, flux, fvals,
                             model, scheme, limiter, alpha, pr_t, false_dt)
    told = state.t.data[disc.cells]
    res = normalized_residual(a, told, rhs)
    lin = solve_linear(a, rhs, x0=told, symmetric=False, rtol=rtol,
                       maxiter=maxiter)
    t_new = state.t.data.copy()
    t_new[disc.cells] = lin.x
    state.t.data = t_new
    return EnergyResult(res_t=res, lin=lin)


def global_energy_audit(disc, state, props, solids, fvals, model, pr_t=0.9):
    """Steady energy closure: volumetric sources vs boundary enthalpy and
    conduction fluxes, using the same face formulas as the assembly."""
    m = disc.mesh
    cp = props.cp
    t = state.t.data
    lam_axis = conductivity_by_axis(m, props, solids, state.mu_t.data, pr_t)

    b = disc.b_idx
    kind = model.kind[b]
    cells = m.bf_cell[b]
    f_b = fvals.mass_flux[b]
    # advection out at the cell (upwind) value, in at the materialized value
    conv_out = float(np.sum(np.maximum(f_b, 0.0) * cp * t[cells]))
    conv_in = float(np.sum(-np.minimum(f_b, 0.0) * cp * fvals.t[b]))

    cond_out = 0.0
    is_dirichlet = (model.is_wall[b] & (model.t_mode[b] == ThermalMode.FIXED_T)) \
        | (kind == FaceKind.INLET)
    sel = b[is_dirichlet]
    if sel.size:
        gam = lam_axis[m.bf_cell[sel], m.bf_axis[sel]]
        coef = gam * m.bf_area[sel] / m.bf_dist[sel]
        cond_out += float(np.sum(coef * (t[m.bf_cell[sel]] - model.t_value[sel])))
    sel = b[model.is_wall[b] & (model.t_mode[b] == ThermalMode.FIXED_FLUX)]
    if sel.size:
        cond_out -= float(np.sum(model.q_value[sel] * m.bf_area[sel]))

    q_source = float(np.sum(source_by_cell(m, solids)[disc.cells]
                            * m.volumes[disc.cells]))
    imbalance = conv_out - conv_in + cond_out - q_source
    scale = max(abs(q_source), abs(conv_out - conv_in), abs(cond_out))
    return {
        "q_source_w": q_source,
        "enthalpy_out_w": conv_out,
        "enthalpy_in_w": conv_in,
        "conduction_out_w": cond_out,
        "imbalance_w": imbalance,
        "imbalance_rel": abs(imbalance) / scale if scale > 0.0 else 0.0,
    }
