"""Standard two-equation turbulence closure with log-law wall treatment.

Every wall-like face (solid interfaces seen by the flow, plus wall boundary
patches) gets a friction velocity from the log law; the resulting effective
wall viscosity feeds momentum, while wall-adjacent cells get a replaced K
production and a fixed eps value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boundary import BoundaryModel
from .numerics import (
    Discretization,
    SystemBuilder,
    normalized_residual_masked,
    solve_linear,
)

KAPPA = 0.41
E_WALL = 9.0
YPLUS_LAMINAR = 11.06   # linear/log-law crossover
YPLUS_WARN = 0.5        # below this the wall-function assumption is dubious


def eddy_viscosity(k, eps, rho, c_mu, mu0=None, cap_ratio=1e5):
    """mu_t = c_mu rho K^2/eps, optionally clipped to cap_ratio*mu0."""
    mu_t = c_mu * rho * np.square(k) / np.maximum(eps, 1e-300)
    if mu0 is not None:
        mu_t = np.minimum(mu_t, cap_ratio * mu0)
    return mu_t


def effective_viscosity(mu0, mu_t):
    return mu0 + mu_t


def production(disc: Discretization, v, mu_eff, k, rho, boundary_v=None):
    """Shear production density: mu_eff G:(G+G^T) - (2/3) divV (mu_eff divV + rho K).

    ``boundary_v`` supplies boundary-face velocities; solid-interface faces
    close with the no-slip zero value.
    """
    cut_v = np.zeros((disc.cut_cell.size, 3))
    g = disc.vector_grad(v, boundary_values=boundary_v, cut_values=cut_v)
    contr = np.einsum("cij,cij->c", g, g + np.transpose(g, (0, 2, 1)))
    div = g[:, 0, 0] + g[:, 1, 1] + g[:, 2, 2]
    phi = mu_eff * contr - (2.0 / 3.0) * div * (mu_eff * div + rho * k)
    phi[~disc.mask] = 0.0
    return phi


# -- wall treatment -----------------------------------------------------------

@dataclass
class WallGeometry:
    """Static description of all wall-like faces seen by the flow equations."""

    cell: np.ndarray       # adjacent fluid cell
    axis: np.ndarray
    area: np.ndarray
    dist: np.ndarray       # cell center to wall
    v_wall: np.ndarray     # (n, 3), tangential wall motion
    wall_cells: np.ndarray  # unique wall-adjacent cells
    d_min: np.ndarray       # nearest wall distance per wall cell
    cell_slot: np.ndarray   # face -> index into wall_cells
    area_sum: np.ndarray    # total wall area per wall cell


def build_wall_geometry(disc: Discretization, model: BoundaryModel) -> WallGeometry:
    m = disc.mesh
    b = disc.b_idx[model.is_wall[disc.b_idx]]
    cell = np.concatenate([disc.cut_cell, m.bf_cell[b]])
    axis = np.concatenate([disc.cut_axis, m.bf_axis[b]])
    area = np.concatenate([disc.cut_area, m.bf_area[b]])
    dist = np.concatenate([disc.cut_dist, m.bf_dist[b]])
    v_wall = np.vstack([np.zeros((disc.cut_cell.size, 3)), model.vel[b]])
    # wall motion must be tangential; drop any normal component
    v_wall[np.arange(cell.size), axis] = 0.0

    wall_cells, slot = np.unique(cell, return_inverse=True)
    d_min = np.full(wall_cells.size, np.inf)
    np.minimum.at(d_min, slot, dist)
    area_sum = np.bincount(slot, weights=area, minlength=wall_cells.size)
    return WallGeometry(cell=cell, axis=axis, area=area, dist=dist, v_wall=v_wall,
                        wall_cells=wall_cells, d_min=d_min, cell_slot=slot,
                        area_sum=area_sum)


@dataclass
class WallState:
    u_t: np.ndarray
    u_tau: np.ndarray
    tau_w: np.ndarray
    mu_w: np.ndarray
    y_plus: np.ndarray
    pk: np.ndarray         # replaced K production per wall cell, W/m3
    eps_wall: np.ndarray   # fixed eps per wall cell
    low_yplus: int


def wall_functions(geo: WallGeometry, v, k, rho, mu0, c_mu=0.09) -> WallState:
    """Log-law friction velocity per wall face, Newton-solved to round-off.

    u_t/u_tau = ln(E y+)/kappa in the log layer; below the crossover y+ the
    laminar stress mu0*u_t/d applies, making the treatment exact for resolved
    laminar flows.
    """
    if geo.cell.size == 0:
        empty = np.zeros(0)
        return WallState(u_t=empty, u_tau=empty, tau_w=empty, mu_w=empty,
                         y_plus=empty, pk=empty, eps_wall=empty, low_yplus=0)
    v_rel = v[geo.cell] - geo.v_wall
    v_rel[np.arange(geo.cell.size), geo.axis] = 0.0
    u_t = np.sqrt(np.einsum("ij,ij->i", v_rel, v_rel))
    d = geo.dist

    u_tau_lam = np.sqrt(mu0 * u_t / (rho * d))
    u_tau = np.maximum(u_tau_lam, 1e-30)
    moving = u_t > 0.0
    for _ in range(60):
        y_plus = rho * u_tau * d / mu0
        ln_ey = np.log(np.maximum(E_WALL * y_plus, 1.0 + 1e-12))
        f = u_tau * ln_ey - KAPPA * u_t
        df = ln_ey + 1.0
        step = np.where(moving, f / df, 0.0)
        u_tau = np.maximum(u_tau - step, 1e-30)
        if np.max(np.abs(step)) <= 1e-14 * max(1.0, float(np.max(u_tau))):
            break

    y_plus = rho * u_tau * d / mu0
    laminar = (y_plus < YPLUS_LAMINAR) | ~moving
    tau_w = np.where(laminar, mu0 * u_t / d, rho * u_tau * u_tau)
    u_tau = np.where(laminar, u_tau_lam, u_tau)
    y_plus = rho * u_tau * d / mu0
    with np.errstate(divide="ignore", invalid="ignore"):
        mu_w = np.where(u_t > 1e-30, tau_w * d / np.maximum(u_t, 1e-300), mu0)
    mu_w = np.where(laminar, mu0, mu_w)

    # wall-cell aggregates
    n_cells = geo.wall_cells.size
    num = np.bincount(geo.cell_slot, weights=tau_w * u_tau * geo.area,
                      minlength=n_cells)
    pk = num / (geo.area_sum * KAPPA * geo.d_min)
    k_cell = np.maximum(k[geo.wall_cells], 0.0)
    eps_wall = c_mu ** 0.75 * k_cell ** 1.5 / (KAPPA * geo.d_min)
    low = int(np.count_nonzero(moving & (y_plus < YPLUS_WARN)))
    return WallState(u_t=u_t, u_tau=u_tau, tau_w=tau_w, mu_w=mu_w, y_plus=y_plus,
                     pk=pk, eps_wall=eps_wall, low_yplus=low)


# -- transport solves ---------------------------------------------------------

@dataclass
class KEpsResult:
    res_k: tuple
    res_eps: tuple
    lin_k: object
    lin_eps: object
    clipped_k: int
    clipped_eps: int


def solve_k_epsilon(disc, state, props, turb, flux, fvals, model, geo, wall,
                    alpha, k_floor, eps_floor, rtol=1e-3, maxiter=500,
                    cap_ratio=1e5) -> KEpsResult:
    """One outer-iteration update of K and eps, flooring for positivity and
    refreshing mu_t / mu_eff in place."""
    from .boundary import FaceKind

    m = disc.mesh
    rho = props.rho_ref
    mu0 = props.mu0
    cells = disc.cells
    vol = m.volumes[cells]
    k_old = state.k.data
    eps_old = state.eps.data
    kc = k_old[cells]
    ec = eps_old[cells]

    phi = production(disc, state.v.data, state.mu_eff.data, k_old, rho,
                     boundary_v=fvals.v)
    phi_c = np.maximum(phi[cells], 0.0)
    rows_wall = disc.row_of[geo.wall_cells]
    phi_c[rows_wall] = wall.pk

    b = disc.b_idx
    kind = model.kind[b]
    b_in = b[kind == FaceKind.INLET]
    b_out = b[kind == FaceKind.OUTLET]
    mu_t = state.mu_t.data

    def transport(gamma_cell, sc, sp, phi_old_c, bc_face_vals, bc_in_vals):
        sb = SystemBuilder(disc)
        sb.diffusion_interior(disc.face_interp(gamma_cell))
        sb.advection_interior_upwind(flux)
        if b_in.size:
            sb.dirichlet_boundary(b_in, gamma_cell[m.bf_cell[b_in]], bc_in_vals)
            sb.advection_boundary(b_in, fvals.mass_flux[b_in], bc_face_vals[b_in])
        if b_out.size:
            sb.advection_boundary(b_out, fvals.mass_flux[b_out], bc_face_vals[b_out])
        sb.source(sc, sp)
        sb.relax(alpha, phi_old_c)
        return sb

    # K: destruction rho*eps folded into the diagonal via eps/K
    gamma_k = mu0 + mu_t / turb.pr_k
    sb_k = transport(gamma_k, phi_c, -rho * ec / np.maximum(kc, k_floor), kc,
                     fvals.k, model.k_value[b_in])
    a_k, rhs_k = sb_k.build()
    lin_k = solve_linear(a_k, rhs_k, x0=kc, symmetric=False, rtol=rtol,
                         maxiter=maxiter)
    k_raw = lin_k.x
    clip_k = (k_raw < k_floor) & (kc <= k_floor * (1.0 + 1e-12))
    res_k = normalized_residual_masked(a_k, kc, rhs_k, ~clip_k)
    k_new = np.maximum(k_raw, k_floor)

    # eps: C1 (eps/K) Phi source, C2 rho eps^2/K destruction on the diagonal
    k_lin = np.maximum(k_new, k_floor)
    gamma_e = mu0 + mu_t / turb.pr_eps
    sb_e = transport(gamma_e, turb.c1 * ec / k_lin * phi_c,
                     -turb.c2 * rho * ec / k_lin, ec,
                     fvals.eps, model.eps_value[b_in])
    eps_wall_vals = wall.eps_wall
    sb_e.fix_rows(rows_wall, eps_wall_vals)
    a_e, rhs_e = sb_e.build()
    lin_e = solve_linear(a_e, rhs_e, x0=ec, symmetric=False, rtol=rtol,
                         maxiter=maxiter)
    e_raw = lin_e.x
    clip_e = (e_raw < eps_floor) & (ec <= eps_floor * (1.0 + 1e-12))
    res_eps = normalized_residual_masked(a_e, ec, rhs_e, ~clip_e)
    eps_new = np.maximum(e_raw, eps_floor)

    k_field = np.zeros(m.ncells)
    e_field = np.zeros(m.ncells)
    k_field[cells] = k_new
    e_field[cells] = eps_new
    state.k.data = k_field
    state.eps.data = e_field
    mu_t_new = np.zeros(m.ncells)
    mu_t_new[cells] = eddy_viscosity(k_new, eps_new, rho, turb.c_mu, mu0,
                                     cap_ratio)
    state.mu_t.data = mu_t_new
    state.mu_eff.data = np.where(disc.mask, mu0 + mu_t_new, 0.0)
    return KEpsResult(res_k=res_k, res_eps=res_eps, lin_k=lin_k, lin_eps=lin_e,
                      clipped_k=int(np.count_nonzero(clip_k)),
                      clipped_eps=int(np.count_nonzero(clip_e)))
