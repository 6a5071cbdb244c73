"""Steady segregated pressure-velocity solver with turbulence and conjugate
heat transfer.

Outer loop per iteration: momentum with the current fluxes and pressure
gradient, one pressure-correction step that re-establishes discrete
continuity, the K and eps transport pair, then energy over fluid and solid
cells together.  Buoyancy enters momentum through a Boussinesq body force.

Residuals follow the initial-residual convention: each equation reports the
normalized imbalance of the freshly assembled system evaluated at the iterate
it started from.  Normalization denominators are frozen a few iterations in
so the history is comparable across a run.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .boundary import BoundaryModel, apply_boundary
from .fields import FieldError, FieldSet, FluidProps, TurbConstants, init_stagnant
from .mesh import Mesh
from .numerics import (
    AMG_MIN,
    HIGH_RESOLUTION,
    LIMITERS,
    NumericsError,
    _HAVE_PYAMG,
    _amg_prec,
    build_discretization,
    cell_divergence,
    d_comp_face,
    momentum_systems,
    normalized_residual,
    pressure_correction,
    pressure_correction_system,
    rhie_chow_fluxes,
    solve_linear,
)
from .thermal import assemble_energy, buoyancy_source, global_energy_audit, solve_energy
from .turbulence import build_wall_geometry, eddy_viscosity, solve_k_epsilon, wall_functions

CONVERGED = "converged"
MAX_ITERATIONS = "max_iterations"
DIVERGED = "diverged"

RESIDUAL_KEYS = ("res_u", "res_v", "res_w", "res_p", "res_k", "res_eps", "res_T")


class SolverError(RuntimeError):
    pass


@dataclass
class SolverControls:
    max_iterations: int = 1000
    convergence: float = 1e-5
    relax_v: float = 0.7
    relax_p: float = 0.3
    relax_t: float = 0.8
    relax_k: float = 0.8
    scheme: str = HIGH_RESOLUTION
    limiter: str = "van_leer"
    turbulence: bool = True
    solve_flow: bool = True
    solve_energy: bool = True
    linear_rtol: float = 1e-3
    linear_maxiter: int = 400
    pressure_rtol: float = 1e-4
    pressure_maxiter: int = 2000
    k_floor: float = 1e-4
    eps_floor: float = 1e-4
    mu_t_cap_ratio: float = 1e5
    pr_t: float = 0.9
    false_time_step: float = 0.0   # s; 0 disables pseudo-transient damping
    freeze_iteration: int = 5
    divergence_factor: float = 10.0
    divergence_strikes: int = 5
    prec_rebuild: int = 25         # outer iterations between AMG refreshes
    mass_target_rel: float = 1e-8
    log_every: int = 0


@dataclass
class Case:
    """Everything run_steady needs: geometry, materials, boundaries, knobs."""

    name: str
    mesh: Mesh
    props: FluidProps
    specs: list
    solids: dict = field(default_factory=dict)        # region id -> SolidProps
    controls: SolverControls = field(default_factory=SolverControls)
    turb: TurbConstants = field(default_factory=TurbConstants)
    t0: float = 313.15
    monitor_points: dict = field(default_factory=dict)  # name -> (x, y, z)
    extra_body_force: np.ndarray | None = None          # (ncells, 3) N/m3
    initial_state: FieldSet | None = None


class ResidualHistory:
    """Per-iteration normalized residuals.

    Denominators track each equation's historical peak until its numerator has
    decayed a decade below that peak, then freeze.  Tracking (instead of a
    fixed early snapshot) keeps the scale honest for damped starts where the
    flow needs hundreds of iterations to spin up; freezing afterwards keeps
    late growth visible to the divergence guard.
    """

    def __init__(self, freeze_iteration: int = 5):
        self.freeze = freeze_iteration
        self.rows: list[dict] = []
        self._den = dict.fromkeys(RESIDUAL_KEYS, 0.0)
        self._frozen = dict.fromkeys(RESIDUAL_KEYS, False)

    def add(self, raw: dict) -> dict:
        """raw maps residual keys to (numerator, denominator) pairs."""
        iteration = len(self.rows) + 1
        vals = {}
        for key in RESIDUAL_KEYS:
            num, den = raw.get(key, (0.0, 0.0))
            if not self._frozen[key]:
                self._den[key] = max(self._den[key], den, num)
                if iteration >= self.freeze and num <= 0.1 * self._den[key]:
                    self._frozen[key] = True
            d = self._den[key]
            vals[key] = num / d if d > 0.0 else 0.0
        self.rows.append(vals)
        return vals

    def __len__(self):
        return len(self.rows)

    def series(self, key: str) -> np.ndarray:
        return np.array([r[key] for r in self.rows])

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("iteration," + ",".join(RESIDUAL_KEYS) + "\n")
            for i, r in enumerate(self.rows, start=1):
                fh.write(
                    f"{i}," + ",".join(f"{r[k]:.10e}" for k in RESIDUAL_KEYS) + "\n"
                )


class MonitorHistory:
    """Temperature and speed probes at fixed points, one row per iteration."""

    def __init__(self, points: dict, mesh: Mesh):
        self.names = list(points)
        probe_mask = mesh.fluid if mesh.fluid.any() else mesh.live
        self.cells = [
            mesh.nearest_cell(np.asarray(points[nm], dtype=float), mask=probe_mask)
            for nm in self.names
        ]
        self.rows: list[list] = []

    def record(self, iteration: int, state: FieldSet):
        row = [iteration]
        for cid in self.cells:
            row.append(float(state.t.data[cid]))
            row.append(float(np.linalg.norm(state.v.data[cid])))
        self.rows.append(row)

    def to_csv(self, path):
        cols = ["iteration"]
        for nm in self.names:
            cols += [f"{nm}_T", f"{nm}_speed"]
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for row in self.rows:
                fh.write(
                    str(row[0]) + "".join(f",{v:.10e}" for v in row[1:]) + "\n"
                )


@dataclass
class RunResult:
    case: Case
    status: str
    iterations: int
    state: FieldSet
    residuals: ResidualHistory
    monitors: MonitorHistory
    flux: np.ndarray | None
    fvals: object
    mass_audit: dict
    energy_audit: dict
    min_k: float
    min_eps: float
    low_yplus: int
    runtime_s: float
    message: str = ""


def _active_keys(c: SolverControls):
    keys = []
    if c.solve_flow:
        keys += ["res_u", "res_v", "res_w", "res_p"]
        if c.turbulence:
            keys += ["res_k", "res_eps"]
    if c.solve_energy:
        keys.append("res_T")
    return keys


def _seed_from_inlets(state: FieldSet, model: BoundaryModel, props: FluidProps,
                      turb: TurbConstants, mask, k_floor, eps_floor, cap_ratio):
    sel = model.is_inlet
    if not sel.any():
        return
    area = model.mesh.bf_area[sel]
    k0 = max(float(np.sum(model.k_value[sel] * area) / np.sum(area)), k_floor)
    e0 = max(float(np.sum(model.eps_value[sel] * area) / np.sum(area)), eps_floor)
    state.k.data = np.where(mask, k0, 0.0)
    state.eps.data = np.where(mask, e0, 0.0)
    mu_t0 = eddy_viscosity(np.array([k0]), np.array([e0]), props.rho_ref,
                           turb.c_mu, props.mu0, cap_ratio)[0]
    state.mu_t.data = np.where(mask, mu_t0, 0.0)
    state.mu_eff.data = np.where(mask, props.mu0 + mu_t0, 0.0)


def run_steady(case: Case, log=print) -> RunResult:
    c = case.controls
    mesh = case.mesh
    props = case.props
    if c.turbulence and not c.solve_flow:
        raise SolverError("turbulence model requires the flow solve")
    limiter = LIMITERS[c.limiter] if isinstance(c.limiter, str) else c.limiter
    t_begin = time.perf_counter()

    model = BoundaryModel(mesh, case.specs, props.rho_ref)
    if case.initial_state is not None:
        state = case.initial_state.copy()
    else:
        state = init_stagnant(mesh, props, case.t0, c.k_floor, c.eps_floor, case.turb)
        if c.turbulence:
            _seed_from_inlets(state, model, props, case.turb, mesh.fluid,
                              c.k_floor, c.eps_floor, c.mu_t_cap_ratio)
    if not c.turbulence:
        state.mu_t.data[:] = 0.0
        state.mu_eff.data[:] = props.mu0

    disc_f = build_discretization(mesh, "fluid")
    disc_l = build_discretization(mesh, "live")
    fluid_sub = np.flatnonzero(mesh.fluid[disc_l.f_o] & mesh.fluid[disc_l.f_n])

    wall_geo = build_wall_geometry(disc_f, model) if c.solve_flow else None
    ref_cell = int(disc_f.cells[0]) if disc_f.n else 0

    flux = np.zeros(disc_f.f_o.size)
    history = ResidualHistory(c.freeze_iteration)
    monitors = MonitorHistory(case.monitor_points, mesh)
    status = MAX_ITERATIONS
    message = ""
    low_yplus = 0
    min_k = np.inf
    min_eps = np.inf
    d_comp = None
    p_prime_warm = None
    prec = None
    prec_age = 10**9
    fvals = apply_boundary(mesh, state, model)

    false_mom = None
    if c.false_time_step > 0.0 and disc_f.n:
        false_mom = props.rho_ref * mesh.volumes[disc_f.cells] / c.false_time_step
    # pseudo-transient damping stays on the flow equations only: the energy
    # equation is linear in T for a given flow, and solid heat capacity would
    # turn its false step into a near-freeze of the conjugate regions
    false_energy = None

    strikes = dict.fromkeys(RESIDUAL_KEYS, 0)
    active = _active_keys(c)
    worst_prev = 1.0

    for it in range(1, c.max_iterations + 1):
        raw = {}
        # inexact inner solves floor the outer residual near their tolerance,
        # so the tolerance tracks the outer residual down
        rtol_i = min(c.linear_rtol, max(0.05 * worst_prev, 1e-12))
        try:
            fvals = apply_boundary(mesh, state, model)
            body = buoyancy_source(state.t.data, props, mesh.fluid)
            if case.extra_body_force is not None:
                body = body + case.extra_body_force

            if c.solve_flow and disc_f.n:
                if c.turbulence:
                    wall = wall_functions(wall_geo, state.v.data, state.k.data,
                                          props.rho_ref, props.mu0, case.turb.c_mu)
                    wall_mu = wall.mu_w
                    low_yplus = wall.low_yplus
                else:
                    wall = None
                    wall_mu = np.full(wall_geo.cell.size, props.mu0)

                grad_p = disc_f.grad(state.p.data, extrapolate=True,
                                     mirror=model.is_symmetry)
                systems, d_comp = momentum_systems(
                    disc_f, state, props, flux, fvals, model, wall_geo, wall_mu,
                    c.scheme, c.relax_v, grad_p, body, limiter, false_mom,
                )
                v_new = state.v.data.copy()
                for comp, key in enumerate(("res_u", "res_v", "res_w")):
                    a, rhs = systems[comp]
                    vc = state.v.data[disc_f.cells, comp]
                    raw[key] = normalized_residual(a, vc, rhs)
                    lin = solve_linear(a, rhs, x0=vc, symmetric=False,
                                       rtol=rtol_i, maxiter=c.linear_maxiter)
                    if lin.status == "diverged":
                        raise NumericsError(f"momentum component {comp} diverged")
                    v_new[disc_f.cells, comp] = lin.x
                state.v.data = v_new

                fvals = apply_boundary(mesh, state, model)
                grad_p = disc_f.grad(state.p.data, extrapolate=True,
                                     mirror=model.is_symmetry)
                flux_star, _df = rhie_chow_fluxes(
                    disc_f, state.v.data, state.p.data, grad_p, d_comp, props.rho_ref
                )
                if _HAVE_PYAMG and disc_f.n >= AMG_MIN:
                    if prec is None or prec_age >= c.prec_rebuild:
                        a_p, _ = pressure_correction_system(
                            disc_f, d_comp_face(disc_f, d_comp), props.rho_ref
                        )
                        prec = _amg_prec(a_p)
                        prec_age = 0
                    prec_age += 1
                rtol_p = min(c.pressure_rtol, max(0.05 * worst_prev, 1e-12))
                pc = pressure_correction(
                    disc_f, flux_star, fvals.mass_flux, d_comp, props.rho_ref,
                    ref_cell, rtol=rtol_p, maxiter=c.pressure_maxiter,
                    x0=p_prime_warm, prec=prec, mirror=model.is_symmetry,
                )
                num_p = float(np.sum(np.abs(pc.div_before)))
                # continuity imbalance reads against total boundary throughput
                # when the case has any; sealed cases fall back to the peak
                bscale = float(np.sum(np.abs(fvals.mass_flux)))
                raw["res_p"] = (num_p, max(num_p, bscale))
                flux = pc.flux
                state.v.data = state.v.data + pc.v_delta
                state.p.data = state.p.data + c.relax_p * pc.p_prime
                p_prime_warm = pc.lin.x
                fvals = apply_boundary(mesh, state, model)

                if c.turbulence:
                    ke = solve_k_epsilon(
                        disc_f, state, props, case.turb, flux, fvals, model,
                        wall_geo, wall, c.relax_k, c.k_floor, c.eps_floor,
                        rtol=rtol_i, maxiter=c.linear_maxiter,
                        cap_ratio=c.mu_t_cap_ratio,
                    )
                    if ke.lin_k.status == "diverged" or ke.lin_eps.status == "diverged":
                        raise NumericsError("turbulence transport diverged")
                    raw["res_k"] = ke.res_k
                    raw["res_eps"] = ke.res_eps
                    min_k = min(min_k, float(np.min(state.k.data[disc_f.cells])))
                    min_eps = min(min_eps, float(np.min(state.eps.data[disc_f.cells])))

            if c.solve_energy:
                er = solve_energy(
                    disc_l, fluid_sub, state, props, case.solids, flux, fvals,
                    model, c.scheme, limiter, c.relax_t, c.pr_t, false_energy,
                    rtol=rtol_i, maxiter=c.linear_maxiter,
                )
                if er.lin.status == "diverged":
                    raise NumericsError("energy equation diverged")
                raw["res_T"] = er.res_t

            state.check_finite()
        except (NumericsError, FieldError) as exc:
            status = DIVERGED
            message = str(exc)
            break

        vals = history.add(raw)
        monitors.record(it, state)
        if active:
            worst_prev = max(max(vals[k] for k in active), 1e-12)
        if c.log_every and (it % c.log_every == 0 or it == 1):
            worst = max(vals[k] for k in active) if active else 0.0
            log(f"  iter {it:5d}  " +
                " ".join(f"{k.removeprefix('res_')}={vals[k]:.3e}" for k in active) +
                f"  worst={worst:.3e}")

        if active and max(vals[k] for k in active) <= c.convergence:
            status = CONVERGED
            break

        # residual blow-up guard: denominators freeze at each equation's
        # historical peak, so a normalized value well above 1 means the
        # imbalance has grown past anything seen during spin-up
        if it > c.freeze_iteration:
            for key in active:
                if vals[key] > c.divergence_factor:
                    strikes[key] += 1
                else:
                    strikes[key] = 0
                if strikes[key] >= c.divergence_strikes:
                    status = DIVERGED
                    message = (f"{key} exceeded {c.divergence_factor:g}x its "
                               f"historical peak for {c.divergence_strikes} "
                               "consecutive iterations")
                    break
            if status == DIVERGED:
                break

    iterations = len(history)
    mass_audit = {}
    energy_audit = {}
    if status != DIVERGED:
        if c.solve_flow and disc_f.n and d_comp is not None:
            flux, fvals, mass_audit = _mass_flush(
                mesh, disc_f, state, model, props, c, ref_cell, prec, d_comp
            )
        else:
            fvals = apply_boundary(mesh, state, model)
        if c.solve_energy:
            energy_audit = _tight_energy(
                disc_l, fluid_sub, state, props, case.solids, flux, fvals,
                model, c, limiter
            )

    return RunResult(
        case=case, status=status, iterations=iterations, state=state,
        residuals=history, monitors=monitors, flux=flux, fvals=fvals,
        mass_audit=mass_audit, energy_audit=energy_audit,
        min_k=float(min_k) if np.isfinite(min_k) else 0.0,
        min_eps=float(min_eps) if np.isfinite(min_eps) else 0.0,
        low_yplus=low_yplus, runtime_s=time.perf_counter() - t_begin,
        message=message,
    )


def _mass_flush(mesh, disc_f, state, model, props, c, ref_cell, prec, d_comp,
                rounds=12):
    """Drive the final flux field to discrete continuity.

    The outer loop leaves per-cell imbalances at the outer tolerance; the
    reported fields must satisfy continuity to a much tighter relative level,
    so a few unrelaxed pressure sweeps polish the fluxes before output.
    """
    rho = props.rho_ref
    a_char = float(np.mean(disc_f.f_area)) if disc_f.f_area.size else 1.0
    fvals = apply_boundary(mesh, state, model)
    flux = None
    for _ in range(rounds):
        fvals = apply_boundary(mesh, state, model)
        grad_p = disc_f.grad(state.p.data, extrapolate=True,
                             mirror=model.is_symmetry)
        flux, _df = rhie_chow_fluxes(disc_f, state.v.data, state.p.data,
                                     grad_p, d_comp, rho)
        div = cell_divergence(disc_f, flux, fvals.mass_flux)
        v_char = float(np.max(np.linalg.norm(state.v.data[disc_f.cells], axis=1)))
        scale = max(rho * v_char * a_char, 1e-300)
        target = c.mass_target_rel * scale
        max_div = float(np.max(np.abs(div))) if div.size else 0.0
        if max_div <= 0.2 * target:
            break
        pc = pressure_correction(
            disc_f, flux, fvals.mass_flux, d_comp, rho, ref_cell,
            rtol=1e-14, atol=0.05 * target, maxiter=5000, prec=prec,
            mirror=model.is_symmetry,
        )
        flux = pc.flux
        state.v.data = state.v.data + pc.v_delta
        state.p.data = state.p.data + pc.p_prime

    div = cell_divergence(disc_f, flux, fvals.mass_flux)
    max_div = float(np.max(np.abs(div))) if div.size else 0.0
    v_char = float(np.max(np.linalg.norm(state.v.data[disc_f.cells], axis=1)))
    scale = rho * v_char * a_char
    audit = {
        "max_div_kg_s": max_div,
        "v_char_m_s": v_char,
        "a_char_m2": a_char,
        "scale_kg_s": scale,
        "rel_max": max_div / scale if scale > 0.0 else 0.0,
        "target_rel": c.mass_target_rel,
        "passed": bool(max_div <= c.mass_target_rel * scale if scale > 0.0
                       else max_div == 0.0),
    }
    return flux, fvals, audit


def _tight_energy(disc_l, fluid_sub, state, props, solids, flux, fvals, model,
                  c, limiter, rounds=4):
    """Polish temperature against the final fluxes, then audit closure."""
    for _ in range(rounds):
        a, rhs = assemble_energy(disc_l, fluid_sub, state, props, solids, flux,
                                 fvals, model, c.scheme, limiter, alpha=1.0,
                                 pr_t=c.pr_t, false_dt=None)
        told = state.t.data[disc_l.cells]
        lin = solve_linear(a, rhs, x0=told, symmetric=False, rtol=1e-10,
                           maxiter=4000)
        t_new = state.t.data.copy()
        t_new[disc_l.cells] = lin.x
        state.t.data = t_new
        audit = global_energy_audit(disc_l, state, props, solids, fvals, model,
                                    c.pr_t)
        if audit["imbalance_rel"] <= 1e-4:
            break
    return audit
