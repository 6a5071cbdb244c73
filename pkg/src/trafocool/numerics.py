"""Finite-volume discretization primitives and sparse linear solvers.

A :class:`Discretization` restricts the mesh to one active cell set (fluid
cells for flow equations, all live cells for the energy equation) and
precomputes three face groups:

* interior faces with both ends active,
* cut faces where only one end is active (fluid/solid interfaces act as
  walls for the flow equations),
* boundary faces whose adjacent cell is active.

:class:`SystemBuilder` accumulates matrix coefficients with the convention
``diag[c]*phi_c + sum(off[c,nb]*phi_nb) = rhs[c]``; off-diagonal advection
and diffusion contributions are negative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .mesh import Mesh

try:
    import pyamg

    _HAVE_PYAMG = True
except ImportError:  # pragma: no cover
    _HAVE_PYAMG = False

DIRECT_MAX = 3000      # below this, a sparse direct solve is cheapest
AMG_MIN = 60000        # above this, CG gets an algebraic multigrid preconditioner

UPWIND = "upwind"
HIGH_RESOLUTION = "high_resolution"


class NumericsError(RuntimeError):
    pass


# -- limiters ---------------------------------------------------------------

def van_leer(r):
    r = np.asarray(r, dtype=float)
    return (r + np.abs(r)) / (1.0 + np.abs(r))


def minmod(r):
    r = np.asarray(r, dtype=float)
    return np.clip(r, 0.0, 1.0)


LIMITERS = {"van_leer": van_leer, "minmod": minmod}


# -- active-set discretization ----------------------------------------------

@dataclass
class Discretization:
    mesh: Mesh
    mask: np.ndarray        # bool over all cells
    cells: np.ndarray       # active cell ids
    row_of: np.ndarray      # global cid -> local row, -1 if inactive
    n: int
    # interior faces (both ends active); normal owner -> neighbor along +axis
    f_o: np.ndarray
    f_n: np.ndarray
    f_axis: np.ndarray
    f_area: np.ndarray
    f_dist: np.ndarray
    f_w: np.ndarray
    # cut faces (exactly one end active)
    cut_cell: np.ndarray
    cut_axis: np.ndarray
    cut_sign: np.ndarray
    cut_area: np.ndarray
    cut_dist: np.ndarray    # active-cell center to face plane
    cut_inner: np.ndarray   # next active cell away from the face, -1 if none
    cut_inner_dist: np.ndarray
    # boundary faces adjacent to an active cell (indices into mesh bf_* arrays)
    b_idx: np.ndarray
    b_inner_ok: np.ndarray  # mesh.bf_inner exists and is active

    # -- gradients ---------------------------------------------------------

    def grad(self, values, boundary_values=None, cut_values=None, extrapolate=False,
             mirror=None):
        """Green-Gauss gradient restricted to the active set.

        Face closures: interior faces interpolate linearly; cut and boundary
        faces mirror the cell value unless explicit values are given or
        ``extrapolate`` requests a one-sided linear extrapolation (exact for
        linear fields, used for pressure so hydrostatic balance is discrete).
        ``mirror`` masks boundary faces (by position in the mesh bf arrays)
        that keep the mirrored closure even when extrapolating: at a symmetry
        plane the normal derivative vanishes, so the mirror value is exact
        there and extrapolation is not.
        """
        m = self.mesh
        v = np.asarray(values, dtype=float)
        g = np.zeros((m.ncells, 3))

        for ax in range(3):
            sel = self.f_axis == ax
            if not sel.any():
                continue
            o = self.f_o[sel]
            nb = self.f_n[sel]
            w = self.f_w[sel]
            phi = (w * v[o] + (1.0 - w) * v[nb]) * self.f_area[sel]
            g[:, ax] += np.bincount(o, weights=phi, minlength=m.ncells)
            g[:, ax] -= np.bincount(nb, weights=phi, minlength=m.ncells)

        if self.cut_cell.size:
            if cut_values is not None:
                phi_c = np.asarray(cut_values, dtype=float)
            elif extrapolate:
                phi_c = v[self.cut_cell].copy()
                has = self.cut_inner >= 0
                slope = (v[self.cut_cell[has]] - v[self.cut_inner[has]]) / self.cut_inner_dist[has]
                phi_c[has] += slope * self.cut_dist[has]
            else:
                phi_c = v[self.cut_cell]
            w = phi_c * self.cut_area * self.cut_sign
            for ax in range(3):
                sel = self.cut_axis == ax
                if sel.any():
                    g[:, ax] += np.bincount(
                        self.cut_cell[sel], weights=w[sel], minlength=m.ncells
                    )

        if self.b_idx.size:
            b = self.b_idx
            cells = m.bf_cell[b]
            if boundary_values is not None:
                phi_b = np.asarray(boundary_values, dtype=float)
                if phi_b.size == m.nbf:
                    phi_b = phi_b[b]
            elif extrapolate:
                phi_b = v[cells].copy()
                has = self.b_inner_ok
                if mirror is not None:
                    has = has & ~mirror[b]
                inner = m.bf_inner[b[has]]
                slope = (v[cells[has]] - v[inner]) / m.bf_inner_dist[b[has]]
                phi_b[has] += slope * m.bf_dist[b[has]]
            else:
                phi_b = v[cells]
            w = phi_b * m.bf_area[b] * m.bf_sign[b]
            ax_b = m.bf_axis[b]
            for ax in range(3):
                sel = ax_b == ax
                if sel.any():
                    g[:, ax] += np.bincount(cells[sel], weights=w[sel], minlength=m.ncells)

        g /= m.volumes[:, None]
        g[~self.mask] = 0.0
        return g

    def vector_grad(self, vec, boundary_values=None, cut_values=None):
        """G[c, i, j] = d(vec_i)/dx_j over the active set."""
        G = np.zeros((self.mesh.ncells, 3, 3))
        for i in range(3):
            bv = None if boundary_values is None else boundary_values[:, i]
            cv = None if cut_values is None else cut_values[:, i]
            G[:, i, :] = self.grad(vec[:, i], boundary_values=bv, cut_values=cv)
        return G

    def face_interp(self, values):
        v = np.asarray(values, dtype=float)
        return self.f_w * v[self.f_o] + (1.0 - self.f_w) * v[self.f_n]


def build_discretization(mesh: Mesh, active: str) -> Discretization:
    """Discretization for ``active`` in {"fluid", "live"}; cached on the mesh."""
    if active in mesh._disc_cache:
        return mesh._disc_cache[active]
    if active == "fluid":
        mask = mesh.fluid
    elif active == "live":
        mask = mesh.live
    else:
        raise NumericsError(f"unknown active set {active!r}")

    cells = np.flatnonzero(mask)
    row_of = np.full(mesh.ncells, -1, dtype=np.int64)
    row_of[cells] = np.arange(cells.size)

    f = mesh.faces
    mo = mask[f.owner]
    mn = mask[f.neighbor]
    both = mo & mn
    f_o = f.owner[both]
    f_n = f.neighbor[both]
    f_axis = f.axis[both]
    f_area = f.area[both]
    f_dist = f.dist[both]
    f_w = f.w_owner[both]

    one = mo ^ mn
    cut_cell = np.where(mo[one], f.owner[one], f.neighbor[one])
    cut_sign = np.where(mo[one], 1, -1).astype(np.int8)
    cut_axis = f.axis[one]
    cut_area = f.area[one]
    # distance from the active center to the shared face plane
    w_one = f.w_owner[one]
    d_one = f.dist[one]
    cut_dist = np.where(mo[one], (1.0 - w_one) * d_one, w_one * d_one)

    step = np.array([mesh.ny * mesh.nz, mesh.nz, 1])
    inner = cut_cell - cut_sign * step[cut_axis]
    idx3 = np.array(np.unravel_index(cut_cell, mesh.shape))
    pos_in = idx3.copy()
    for ax in range(3):
        sel = cut_axis == ax
        pos_in[ax, sel] -= cut_sign[sel]
    ok = np.ones(cut_cell.size, dtype=bool)
    for ax in range(3):
        ok &= (pos_in[ax] >= 0) & (pos_in[ax] < mesh.shape[ax])
    inner = np.where(ok & mask[np.clip(inner, 0, None)], inner, -1)
    cut_inner = inner
    cut_inner_dist = np.zeros(cut_cell.size)
    has = inner >= 0
    if has.any():
        diffc = mesh.centers[cut_cell[has]] - mesh.centers[inner[has]]
        cut_inner_dist[has] = np.abs(diffc[np.arange(has.sum()), cut_axis[has]])

    b_idx = np.flatnonzero(mask[mesh.bf_cell])
    b_inner_ok = (mesh.bf_inner[b_idx] >= 0) & mask[np.clip(mesh.bf_inner[b_idx], 0, None)]

    disc = Discretization(
        mesh=mesh, mask=mask, cells=cells, row_of=row_of, n=cells.size,
        f_o=f_o, f_n=f_n, f_axis=f_axis, f_area=f_area, f_dist=f_dist, f_w=f_w,
        cut_cell=cut_cell, cut_axis=cut_axis, cut_sign=cut_sign,
        cut_area=cut_area, cut_dist=cut_dist,
        cut_inner=cut_inner, cut_inner_dist=cut_inner_dist,
        b_idx=b_idx, b_inner_ok=b_inner_ok,
    )
    mesh._disc_cache[active] = disc
    return disc


# -- system assembly --------------------------------------------------------

class SystemBuilder:
    """COO accumulator for one transport equation over an active set."""

    def __init__(self, disc: Discretization):
        self.disc = disc
        self.n = disc.n
        self.diag = np.zeros(self.n)
        self.rhs = np.zeros(self.n)
        self._rows = []
        self._cols = []
        self._vals = []
        self._fixed_rows = None
        self._fixed_vals = None
        self._ro = disc.row_of[disc.f_o]
        self._rn = disc.row_of[disc.f_n]

    def copy(self):
        other = SystemBuilder(self.disc)
        other.diag = self.diag.copy()
        other.rhs = self.rhs.copy()
        other._rows = list(self._rows)
        other._cols = list(self._cols)
        other._vals = list(self._vals)
        return other

    def _off(self, rows, cols, vals):
        self._rows.append(np.asarray(rows))
        self._cols.append(np.asarray(cols))
        self._vals.append(np.asarray(vals, dtype=float))

    def _bump_diag(self, rows, vals):
        self.diag += np.bincount(rows, weights=vals, minlength=self.n)

    def _bump_rhs(self, rows, vals):
        self.rhs += np.bincount(rows, weights=vals, minlength=self.n)

    # interior faces

    def diffusion_interior(self, gamma_face):
        d = gamma_face * self.disc.f_area / self.disc.f_dist
        self._bump_diag(self._ro, d)
        self._bump_diag(self._rn, d)
        self._off(self._ro, self._rn, -d)
        self._off(self._rn, self._ro, -d)

    def advection_interior_upwind(self, flux, sel=None):
        """Upwind advection on interior faces; ``sel`` restricts to a face
        subset (the energy equation advects only across fluid-fluid faces)."""
        ro = self._ro if sel is None else self._ro[sel]
        rn = self._rn if sel is None else self._rn[sel]
        fp = np.maximum(flux, 0.0)
        fm = np.minimum(flux, 0.0)
        self._bump_diag(ro, fp)
        self._off(ro, rn, fm)
        self._bump_diag(rn, -fm)
        self._off(rn, ro, -fp)

    def deferred_correction(self, flux, dc, sel=None):
        """Explicit high-resolution advection remainder flux*(phi_hr - phi_up)."""
        ro = self._ro if sel is None else self._ro[sel]
        rn = self._rn if sel is None else self._rn[sel]
        self._bump_rhs(ro, -flux * dc)
        self._bump_rhs(rn, flux * dc)

    # cut faces (fluid/solid interfaces seen as walls by the active set)

    def dirichlet_cut(self, gamma, value, sel=None):
        d = self.disc
        cell, area, dist = d.cut_cell, d.cut_area, d.cut_dist
        if sel is not None:
            cell, area, dist = cell[sel], area[sel], dist[sel]
            gamma = gamma if np.isscalar(gamma) else gamma[sel]
            value = value if np.isscalar(value) else value[sel]
        rows = d.row_of[cell]
        coef = gamma * area / dist
        self._bump_diag(rows, coef)
        self._bump_rhs(rows, coef * value)

    # boundary faces

    def dirichlet_boundary(self, b_sel, gamma, value):
        """Diffusive link to a fixed face value on boundary faces ``b_sel``
        (indices into the mesh bf arrays)."""
        m = self.disc.mesh
        rows = self.disc.row_of[m.bf_cell[b_sel]]
        coef = gamma * m.bf_area[b_sel] / m.bf_dist[b_sel]
        self._bump_diag(rows, coef)
        self._bump_rhs(rows, coef * value)

    def advection_boundary(self, b_sel, flux, value):
        """Boundary advection: implicit for outflow, explicit inflow at the
        materialized face value."""
        m = self.disc.mesh
        rows = self.disc.row_of[m.bf_cell[b_sel]]
        self._bump_diag(rows, np.maximum(flux, 0.0))
        self._bump_rhs(rows, -np.minimum(flux, 0.0) * value)

    def flux_boundary(self, b_sel, q):
        """Prescribed inward flux density q on boundary faces."""
        m = self.disc.mesh
        rows = self.disc.row_of[m.bf_cell[b_sel]]
        self._bump_rhs(rows, q * m.bf_area[b_sel])

    # volume terms

    def source(self, sc, sp=None):
        """Volumetric source S = sc + sp*phi per active cell, sp <= 0."""
        vol = self.disc.mesh.volumes[self.disc.cells]
        self.rhs += sc * vol
        if sp is not None:
            self.diag -= sp * vol

    def add_rhs(self, values):
        self.rhs += values

    def add_diag(self, values):
        self.diag += values

    def false_time_step(self, coef, phi_old):
        """Pseudo-transient damping: coef = rho*V/dt per active cell."""
        self.diag += coef
        self.rhs += coef * phi_old

    def relax(self, alpha, phi_current):
        """Implicit under-relaxation toward the current iterate."""
        if alpha >= 1.0:
            return
        extra = self.diag * (1.0 - alpha) / alpha
        self.diag += extra
        self.rhs += extra * phi_current

    def fix_rows(self, rows, values):
        """Replace equations for ``rows`` with identity rows (Dirichlet cells)."""
        self._fixed_rows = np.asarray(rows)
        self._fixed_vals = np.asarray(values, dtype=float)

    def build(self):
        if self._rows:
            rows = np.concatenate(self._rows)
            cols = np.concatenate(self._cols)
            vals = np.concatenate(self._vals)
        else:
            rows = np.zeros(0, dtype=int)
            cols = np.zeros(0, dtype=int)
            vals = np.zeros(0)
        diag = self.diag.copy()
        rhs = self.rhs.copy()
        if self._fixed_rows is not None and self._fixed_rows.size:
            fixed = np.zeros(self.n, dtype=bool)
            fixed[self._fixed_rows] = True
            keep = ~fixed[rows]
            rows, cols, vals = rows[keep], cols[keep], vals[keep]
            scale = np.abs(diag[self._fixed_rows])
            scale = np.where(scale > 0.0, scale, 1.0)
            diag[self._fixed_rows] = scale
            rhs[self._fixed_rows] = scale * self._fixed_vals
        all_rows = np.concatenate([rows, np.arange(self.n)])
        all_cols = np.concatenate([cols, np.arange(self.n)])
        all_vals = np.concatenate([vals, diag])
        a = sparse.coo_matrix((all_vals, (all_rows, all_cols)), shape=(self.n, self.n))
        return a.tocsr(), rhs


# -- high-resolution face values ---------------------------------------------

def high_res_correction(disc: Discretization, phi, grad_phi, flux, limiter=van_leer,
                        sel=None):
    """Per-interior-face (phi_face_hr - phi_face_upwind) for deferred correction.

    TVD reconstruction from the upwind side with a gradient-based smoothness
    ratio; the face value is clipped between the two adjacent cell values so
    the explicit correction can never introduce a new extremum.
    """
    o, nb, ax = disc.f_o, disc.f_n, disc.f_axis
    dist = disc.f_dist
    if sel is not None:
        o, nb, ax, dist = o[sel], nb[sel], ax[sel], dist[sel]
    up = np.where(flux >= 0.0, o, nb)
    dn = np.where(flux >= 0.0, nb, o)
    sgn = np.where(flux >= 0.0, 1.0, -1.0)
    dphi = phi[dn] - phi[up]
    g_up = grad_phi[up, ax] * sgn * dist
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(np.abs(dphi) > 1e-300, 2.0 * g_up / dphi - 1.0, 0.0)
    psi = np.clip(limiter(r), 0.0, 2.0)
    face = phi[up] + 0.5 * psi * dphi
    lo = np.minimum(phi[o], phi[nb])
    hi = np.maximum(phi[o], phi[nb])
    face = np.clip(face, lo, hi)
    return face - phi[up]


# -- Rhie-Chow mass fluxes and pressure correction ----------------------------

def rhie_chow_fluxes(disc: Discretization, v, p, grad_p, d_comp, rho):
    """Interior-face mass fluxes with pressure-dissipation coupling.

    ``d_comp`` is the (ncells, 3) array of V/a_P per velocity component from
    the relaxed momentum diagonals.  Returns (flux, df_face) where ``df_face``
    feeds the pressure-correction coefficients.
    """
    o, nb, ax = disc.f_o, disc.f_n, disc.f_axis
    w = disc.f_w
    vbar = w * v[o, ax] + (1.0 - w) * v[nb, ax]
    df = d_comp_face(disc, d_comp)
    gbar = w * grad_p[o, ax] + (1.0 - w) * grad_p[nb, ax]
    vn = vbar - df * ((p[nb] - p[o]) / disc.f_dist - gbar)
    return rho * vn * disc.f_area, df


def cell_divergence(disc: Discretization, flux, bmass):
    """Net outward mass flow per cell (kg/s) from face fluxes."""
    m = disc.mesh
    div = np.bincount(disc.row_of[disc.f_o], weights=flux, minlength=disc.n)
    div -= np.bincount(disc.row_of[disc.f_n], weights=flux, minlength=disc.n)
    if disc.b_idx.size:
        rows = disc.row_of[m.bf_cell[disc.b_idx]]
        div += np.bincount(rows, weights=bmass[disc.b_idx], minlength=disc.n)
    return div


def pressure_correction_system(disc: Discretization, df_face, rho):
    """SPD system sum_f c_f (p'_o - p'_n) with c_f = rho*A*df/dist.

    All boundaries carry prescribed mass flux, so the system is pure Neumann;
    the caller removes the nullspace.
    """
    cf = rho * disc.f_area * df_face / disc.f_dist
    b = SystemBuilder(disc)
    b.diffusion_interior(rho * df_face)
    a, _ = b.build()
    return a, cf


@dataclass
class PressureCorrection:
    p_prime: np.ndarray   # global cell array, zero outside the fluid set
    flux: np.ndarray      # corrected interior-face mass fluxes
    v_delta: np.ndarray   # (ncells, 3) velocity correction
    div_before: np.ndarray
    div_after: np.ndarray
    lin: LinearResult


def pressure_correction(disc: Discretization, flux, bmass, d_comp, rho,
                        ref_cell, rtol=1e-4, atol=0.0, maxiter=2000,
                        x0=None, prec=None, mirror=None) -> PressureCorrection:
    """One SIMPLE continuity step: solve for p' and return corrected fluxes
    and the cell velocity correction -V/a_P * grad(p')."""
    m = disc.mesh
    div = cell_divergence(disc, flux, bmass)
    a, cf = pressure_correction_system(disc, d_comp_face(disc, d_comp), rho)
    sol = solve_pressure(a, -div, x0=x0, ref_row=int(disc.row_of[ref_cell]),
                         rtol=rtol, atol=atol, maxiter=maxiter, prec=prec)
    pp = np.zeros(m.ncells)
    pp[disc.cells] = sol.x
    flux_new = flux + cf * (pp[disc.f_o] - pp[disc.f_n])
    gpp = disc.grad(pp, extrapolate=True, mirror=mirror)
    v_delta = -d_comp * gpp
    v_delta[~disc.mask] = 0.0
    div_after = cell_divergence(disc, flux_new, bmass)
    return PressureCorrection(p_prime=pp, flux=flux_new, v_delta=v_delta,
                              div_before=div, div_after=div_after, lin=sol)


def d_comp_face(disc: Discretization, d_comp):
    """Face-interpolated Rhie-Chow coefficient along each face axis."""
    o, nb, ax, w = disc.f_o, disc.f_n, disc.f_axis, disc.f_w
    return w * d_comp[o, ax] + (1.0 - w) * d_comp[nb, ax]


# -- linear solvers -----------------------------------------------------------

@dataclass
class LinearResult:
    x: np.ndarray
    rel_res: float
    converged: bool
    status: str = "converged"  # converged | max_iterations | diverged


def _jacobi(a):
    d = a.diagonal()
    inv = np.where(np.abs(d) > 0.0, 1.0 / np.where(d == 0.0, 1.0, d), 1.0)
    return spla.LinearOperator(a.shape, matvec=lambda v: inv * v)


def _amg_prec(a):
    ml = pyamg.smoothed_aggregation_solver(a.tocsr(), max_coarse=50)
    return ml.aspreconditioner(cycle="V")


def _residual(a, x, b):
    r = b - a @ x
    bn = np.linalg.norm(b)
    return float(np.linalg.norm(r) / bn) if bn > 0.0 else float(np.linalg.norm(r))


def solve_linear(a, b, x0=None, symmetric=False, rtol=1e-3, maxiter=1000,
                 prec=None) -> LinearResult:
    """Solve a*x = b; direct for small systems, preconditioned Krylov above.

    The reported relative residual is recomputed from the returned iterate,
    independent of the iterative solver's own stopping test.
    """
    n = b.size
    if n == 0:
        return LinearResult(x=np.zeros(0), rel_res=0.0, converged=True)
    bn = float(np.linalg.norm(b))
    if x0 is not None:
        # a warm start at machine-level residual returns untouched; keeps
        # singular but consistent systems (pure-Neumann energy) from being
        # zeroed.  The scale uses |A||x0| so cancellation cannot hide it.
        r0n = float(np.linalg.norm(b - a @ x0))
        scale = bn + float(np.linalg.norm(abs(a) @ np.abs(x0)))
        if r0n == 0.0 or r0n <= 1e-12 * scale:
            return LinearResult(x=np.array(x0, dtype=float), rel_res=0.0,
                                converged=True)
    else:
        r0n = bn
    if bn == 0.0 and x0 is None:
        return LinearResult(x=np.zeros(n), rel_res=0.0, converged=True)
    if n <= DIRECT_MAX:
        x = spla.spsolve(a.tocsc(), b)
        return LinearResult(x=x, rel_res=_residual(a, x, b), converged=True)

    if prec is None:
        if symmetric and _HAVE_PYAMG and n >= AMG_MIN:
            prec = _amg_prec(a)
        else:
            prec = _jacobi(a)
    # the stopping test demands a reduction of the INITIAL residual, never of
    # ||b||: right-hand sides with large offsets (absolute temperatures) would
    # otherwise declare warm starts converged without moving them
    method = spla.cg if symmetric else spla.bicgstab
    x, _info = method(a, b, x0=x0, rtol=0.0, atol=rtol * r0n, maxiter=maxiter,
                      M=prec)
    rel = float(np.linalg.norm(b - a @ x)) / r0n
    converged = rel <= rtol * 1.01
    if not np.all(np.isfinite(x)) or (not converged and rel > 10.0):
        # residual grew well past where the iteration started: genuine
        # divergence, distinct from running out of iterations
        return LinearResult(x=x, rel_res=rel, converged=False, status="diverged")
    status = "converged" if converged else "max_iterations"
    return LinearResult(x=x, rel_res=rel, converged=converged, status=status)


def solve_pressure(a, b, x0=None, ref_row=0, rtol=1e-8, atol=0.0, maxiter=2000,
                   prec=None):
    """Singular all-Neumann Poisson solve: project out the constant nullspace,
    CG, then pin the reference cell to zero."""
    n = b.size
    bb = b - np.mean(b)
    if np.linalg.norm(bb) == 0.0:
        return LinearResult(x=np.zeros(n), rel_res=0.0, converged=True)
    if n <= DIRECT_MAX:
        # regularize by pinning the reference row
        aa = a.tolil(copy=True)
        aa.rows[ref_row] = [ref_row]
        aa.data[ref_row] = [1.0]
        x = spla.spsolve(sparse.csc_matrix(aa), np.where(np.arange(n) == ref_row, 0.0, bb))
        x = x - x[ref_row]
        return LinearResult(x=x, rel_res=_residual(a, x, bb), converged=True)
    if prec is None:
        prec = _amg_prec(a) if _HAVE_PYAMG and n >= AMG_MIN else _jacobi(a)
    x, _info = spla.cg(a, bb, x0=x0, rtol=rtol, atol=atol, maxiter=maxiter, M=prec)
    if not np.all(np.isfinite(x)):
        raise NumericsError("pressure solver produced non-finite values")
    x = x - x[ref_row]
    return LinearResult(x=x, rel_res=_residual(a, x, bb), converged=True)


def normalized_residual(a, x, b):
    """L1 residual with a solution-scale denominator.

    Returns (numerator, denominator); the caller freezes the denominator a few
    iterations in so the history is comparable across a run.
    """
    ax = a @ x
    xbar = np.full_like(x, np.mean(x))
    axbar = a @ xbar
    num = float(np.sum(np.abs(b - ax)))
    den = float(np.sum(np.abs(ax - axbar)) + np.sum(np.abs(b - axbar)))
    return num, den


def normalized_residual_masked(a, x, b, include):
    """Same as :func:`normalized_residual` over a row subset.

    Used for K and eps, where rows pinned at the positivity floor express the
    active constraint rather than an unconverged transport balance."""
    ax = a @ x
    xbar = np.full_like(x, np.mean(x))
    axbar = a @ xbar
    num = float(np.sum(np.abs((b - ax)[include])))
    den = float(
        np.sum(np.abs((ax - axbar)[include])) + np.sum(np.abs((b - axbar)[include]))
    )
    return num, den


# -- momentum assembly --------------------------------------------------------

def momentum_systems(disc, state, props, flux, fvals, model, wall_geo, wall_mu,
                     scheme, alpha, grad_p, body_force, limiter=van_leer,
                     false_dt=None):
    """Assemble the three momentum component systems.

    Returns ``(systems, d_comp)`` where systems is a list of (A, rhs) and
    ``d_comp`` the (ncells, 3) Rhie-Chow coefficient V/a_P built from the
    relaxed diagonals.

    ``wall_geo``/``wall_mu`` supply the wall-like faces (solid interfaces and
    wall boundary patches) and their wall-law effective viscosities.
    """
    m = disc.mesh
    v = state.v.data
    mu_f = disc.face_interp(state.mu_eff.data)

    base = SystemBuilder(disc)
    base.diffusion_interior(mu_f)
    base.advection_interior_upwind(flux)

    b = disc.b_idx
    kind = model.kind[b]
    from .boundary import FaceKind  # local import to avoid a cycle

    b_inlet = b[kind == FaceKind.INLET]
    b_outlet = b[kind == FaceKind.OUTLET]
    b_sym = b[kind == FaceKind.SYMMETRY]
    mu_b_in = state.mu_eff.data[m.bf_cell[b_inlet]]
    mu_b_sym = state.mu_eff.data[m.bf_cell[b_sym]]

    # transpose-gradient diffusion term, explicit over interior faces
    bc_v = fvals.v.copy()
    gv = disc.vector_grad(v, boundary_values=bc_v,
                          cut_values=np.zeros((disc.cut_cell.size, 3)))

    vol = m.volumes[disc.cells]
    systems = []
    d_comp = np.zeros((m.ncells, 3))
    hr = scheme == HIGH_RESOLUTION
    if hr:
        dcs = [
            high_res_correction(disc, v[:, c], gv[:, c, :], flux, limiter)
            for c in range(3)
        ]

    for comp in range(3):
        sb = base.copy()
        if hr:
            sb.deferred_correction(flux, dcs[comp])

        # wall-law shear links every component toward the wall velocity
        rows_w = disc.row_of[wall_geo.cell]
        coef_w = wall_mu * wall_geo.area / wall_geo.dist
        sb._bump_diag(rows_w, coef_w)
        sb._bump_rhs(rows_w, coef_w * wall_geo.v_wall[:, comp])

        # symmetry: normal component pinned to zero at the face
        sym_norm = b_sym[m.bf_axis[b_sym] == comp]
        if sym_norm.size:
            sb.dirichlet_boundary(
                sym_norm, state.mu_eff.data[m.bf_cell[sym_norm]], 0.0
            )

        if b_inlet.size:
            sb.dirichlet_boundary(b_inlet, mu_b_in, model.vel[b_inlet, comp])
            sb.advection_boundary(
                b_inlet, fvals.mass_flux[b_inlet], fvals.v[b_inlet, comp]
            )
        if b_outlet.size:
            sb.advection_boundary(
                b_outlet, fvals.mass_flux[b_outlet], fvals.v[b_outlet, comp]
            )

        # pressure gradient and body force
        sb.add_rhs((body_force[disc.cells, comp] - grad_p[disc.cells, comp]) * vol)

        # explicit transpose-gradient term: flux_i = mu * d(v_axis)/dx_i * A
        ax = disc.f_axis
        g_o = gv[disc.f_o, ax, comp]
        g_n = gv[disc.f_n, ax, comp]
        gface = disc.f_w * g_o + (1.0 - disc.f_w) * g_n
        tflux = mu_f * gface * disc.f_area
        sb._bump_rhs(disc.row_of[disc.f_o], tflux)
        sb._bump_rhs(disc.row_of[disc.f_n], -tflux)

        if false_dt is not None:
            sb.false_time_step(false_dt, v[disc.cells, comp])
        sb.relax(alpha, v[disc.cells, comp])

        if np.any(sb.diag <= 0.0):
            raise NumericsError(
                "singular momentum assembly: non-positive diagonal encountered"
            )
        d_comp[disc.cells, comp] = vol / sb.diag
        systems.append(sb.build())

    return systems, d_comp
