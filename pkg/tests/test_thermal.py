import numpy as np
import pytest

from trafocool.boundary import (
    BoundaryModel, BoundarySpec, OutletFlow, VelocityInlet, Wall,
    apply_boundary,
)
from trafocool.fields import FluidProps, SolidProps, init_stagnant
from trafocool.mesh import build_mesh
from trafocool.numerics import build_discretization
from trafocool.thermal import (
    conductivity_by_axis, face_conductivity, global_energy_audit,
    rho_cp_by_cell, solve_energy, source_by_cell,
)

NO_TURB = dict(k_floor=1e-12, eps_floor=1e-12)  # then mu_t is zeroed by hand


def wall_specs(names, **kw):
    return [BoundarySpec(nm, Wall(**kw)) for nm in names]


def line_mesh(n, boxes=()):
    one = np.array([0.0, 1.0])
    return build_mesh(np.linspace(0.0, 1.0, n + 1), one, one, boxes)


def solid(lam_axial=2.0, lam_radial=0.5, source=0.0, axial_axis=1):
    return SolidProps(name="block", lam_axial=lam_axial,
                      lam_radial=lam_radial, source=source, rho_cp=2e6,
                      axial_axis=axial_axis)


def test_conductivity_by_axis_orthotropic():
    box = (((0.5, 1.0), (0.0, 1.0), (0.0, 1.0)), 1)
    m = line_mesh(4, [box])
    props = FluidProps()
    mu_t = np.full(m.ncells, 2e-4)
    lam = conductivity_by_axis(m, props, {1: solid()}, mu_t, pr_t=0.9)
    lam_f = props.lam + props.cp * 2e-4 / 0.9
    np.testing.assert_allclose(lam[m.fluid], lam_f)
    sol = m.region_cells(1)
    np.testing.assert_allclose(lam[sol], [[0.5, 2.0, 0.5]] * len(sol))


def test_face_conductivity_is_harmonic():
    m = line_mesh(2)
    disc = build_discretization(m, "live")
    lam = np.zeros((m.ncells, 3))
    lam[:, 0] = [1.0, 3.0]
    lam_f = face_conductivity(disc, lam)
    assert lam_f[0] == pytest.approx(1.5)  # series of equal path lengths


def test_cell_property_maps():
    box = (((0.5, 1.0), (0.0, 1.0), (0.0, 1.0)), 1)
    m = line_mesh(4, [box])
    props = FluidProps()
    sp = solid(source=4.5e4)
    rc = rho_cp_by_cell(m, props, {1: sp})
    np.testing.assert_allclose(rc[m.fluid], props.rho_ref * props.cp)
    np.testing.assert_allclose(rc[m.region_cells(1)], 2e6)
    q = source_by_cell(m, {1: sp})
    np.testing.assert_allclose(q[m.fluid], 0.0)
    np.testing.assert_allclose(q[m.region_cells(1)], 4.5e4)


def conjugate_line(n=8, lam_solid=4.0, t_left=300.0, t_right=360.0):
    box = (((0.5, 1.0), (0.0, 1.0), (0.0, 1.0)), 1)
    m = line_mesh(n, [box])
    props = FluidProps()
    specs = wall_specs(["ymin", "ymax", "zmin", "zmax"])
    specs.append(BoundarySpec("xmin", Wall(thermal="fixed_temperature",
                                           temperature=t_left)))
    specs.append(BoundarySpec("xmax", Wall(thermal="fixed_temperature",
                                           temperature=t_right)))
    model = BoundaryModel(m, specs, props.rho_ref)
    solids = {1: solid(lam_axial=lam_solid, lam_radial=lam_solid)}
    state = init_stagnant(m, props, t0=320.0, **NO_TURB)
    state.mu_t.data[:] = 0.0
    fvals = apply_boundary(m, state, model)
    disc = build_discretization(m, "live")
    fluid_sub = np.flatnonzero(m.fluid[disc.f_o] & m.fluid[disc.f_n])
    flux = np.zeros(fluid_sub.size)  # stagnant: no advection anywhere
    return m, props, model, solids, state, fvals, disc, fluid_sub, flux


def test_conjugate_interface_profile_exact():
    # stagnant fluid against a solid slab: series conduction; the interface
    # sits on a face, so the harmonic closure reproduces the exact piecewise
    # linear profile at every cell center
    lam_f, lam_s = FluidProps().lam, 4.0
    t_l, t_r = 300.0, 360.0
    m, props, model, solids, state, fvals, disc, fluid_sub, flux = \
        conjugate_line(n=8, lam_solid=lam_s, t_left=t_l, t_right=t_r)
    er = solve_energy(disc, fluid_sub, state, props, solids, flux, fvals,
                      model, alpha=1.0, rtol=1e-13, maxiter=5000)
    # series resistance gives the interface temperature
    r_f, r_s = 0.5 / lam_f, 0.5 / lam_s
    t_i = t_l + (t_r - t_l) * r_f / (r_f + r_s)
    x = m.centers[:, 0]
    exact = np.where(x < 0.5,
                     t_l + (t_i - t_l) * x / 0.5,
                     t_i + (t_r - t_i) * (x - 0.5) / 0.5)
    np.testing.assert_allclose(state.t.data, exact, rtol=1e-9)


def test_uniform_temperature_is_equilibrium():
    m, props, model, solids, state, fvals, disc, fluid_sub, flux = \
        conjugate_line(t_left=320.0, t_right=320.0)
    state.t.data[:] = 320.0
    fvals = apply_boundary(m, state, model)
    er = solve_energy(disc, fluid_sub, state, props, solids, flux, fvals,
                      model, alpha=1.0, rtol=1e-13, maxiter=5000)
    np.testing.assert_allclose(state.t.data, 320.0, rtol=1e-12)
    assert er.res_t[0] <= 1e-9


def test_interface_flux_continuity():
    lam_s = 4.0
    m, props, model, solids, state, fvals, disc, fluid_sub, flux = \
        conjugate_line(n=16, lam_solid=lam_s)
    solve_energy(disc, fluid_sub, state, props, solids, flux, fvals,
                 model, alpha=1.0, rtol=1e-13, maxiter=5000)
    t = state.t.data
    x = m.centers[:, 0]
    h = 1.0 / 16
    lam_f = props.lam
    q_fluid = -lam_f * (t[4] - t[3]) / h
    q_solid = -lam_s * (t[12] - t[11]) / h
    assert q_fluid == pytest.approx(q_solid, rel=1e-9)


def test_max_principle_without_sources():
    rng = np.random.default_rng(7)
    nodes = np.linspace(0.0, 1.0, 5)
    m = build_mesh(nodes, nodes, nodes)
    props = FluidProps()
    names = ("xmin", "xmax", "ymin", "ymax", "zmin", "zmax")
    temps = dict(zip(names, rng.uniform(290.0, 360.0, 6)))
    specs = [BoundarySpec(nm, Wall(thermal="fixed_temperature",
                                   temperature=temps[nm])) for nm in names]
    model = BoundaryModel(m, specs, props.rho_ref)
    state = init_stagnant(m, props, t0=300.0, **NO_TURB)
    state.mu_t.data[:] = 0.0
    fvals = apply_boundary(m, state, model)
    disc = build_discretization(m, "live")
    fluid_sub = np.arange(disc.f_o.size)
    solve_energy(disc, fluid_sub, state, props, {}, np.zeros(disc.f_o.size),
                 fvals, model, alpha=1.0, rtol=1e-12, maxiter=5000)
    lo, hi = min(temps.values()), max(temps.values())
    assert state.t.data.min() >= lo - 1e-9
    assert state.t.data.max() <= hi + 1e-9


def heated_channel(n=24, u=1.5, q=4.0e4):
    """Frozen uniform flow past an interior heated block."""
    box = (((0.4, 0.6), (0.25, 0.75), (0.0, 1.0)), 1)
    nodes = np.linspace(0.0, 1.0, n + 1)
    m = build_mesh(nodes, np.linspace(0.0, 1.0, 9), np.array([0.0, 1.0]),
                   [box])
    props = FluidProps()
    specs = wall_specs(["ymin", "ymax", "zmin", "zmax"])
    specs.append(BoundarySpec("xmin", VelocityInlet(
        velocity=(u, 0.0, 0.0), temperature=300.0, k=1e-3, eps=1e-2)))
    specs.append(BoundarySpec("xmax", OutletFlow(flow=None)))
    model = BoundaryModel(m, specs, props.rho_ref)
    solids = {1: solid(lam_axial=5.0, lam_radial=5.0, source=q)}
    state = init_stagnant(m, props, t0=300.0, **NO_TURB)
    state.mu_t.data[:] = 0.0
    state.v.data[m.fluid, 0] = u
    fvals = apply_boundary(m, state, model)
    disc = build_discretization(m, "live")
    fluid_sub = np.flatnonzero(m.fluid[disc.f_o] & m.fluid[disc.f_n])
    flux = np.where(disc.f_axis[fluid_sub] == 0,
                    props.rho_ref * u * disc.f_area[fluid_sub], 0.0)
    return m, props, model, solids, state, fvals, disc, fluid_sub, flux


def test_global_energy_audit_closes():
    m, props, model, solids, state, fvals, disc, fluid_sub, flux = \
        heated_channel()
    # energy is linear in T for a frozen flow: one tight solve suffices
    solve_energy(disc, fluid_sub, state, props, solids, flux, fvals, model,
                 scheme="upwind", alpha=1.0, rtol=1e-13, maxiter=20000)
    audit = global_energy_audit(disc, state, props, solids, fvals, model)
    q_total = 4.0e4 * m.volumes[m.region_cells(1)].sum()
    assert audit["q_source_w"] == pytest.approx(q_total, rel=1e-12)
    assert audit["imbalance_rel"] <= 1e-9


def test_outlet_mean_temperature_rise_matches_power():
    m, props, model, solids, state, fvals, disc, fluid_sub, flux = \
        heated_channel(u=1.5)
    solve_energy(disc, fluid_sub, state, props, solids, flux, fvals, model,
                 scheme="upwind", alpha=1.0, rtol=1e-13, maxiter=20000)
    q_total = 4.0e4 * m.volumes[m.region_cells(1)].sum()
    out_faces = m.patch("xmax").faces
    mdot = fvals.mass_flux[out_faces]
    t_mix = float(np.sum(mdot * state.t.data[m.bf_cell[out_faces]])
                  / mdot.sum())
    expect = 300.0 + q_total / (mdot.sum() * props.cp)
    assert t_mix == pytest.approx(expect, rel=1e-9)


def test_hot_block_heats_only_downstream():
    m, props, model, solids, state, fvals, disc, fluid_sub, flux = \
        heated_channel()
    solve_energy(disc, fluid_sub, state, props, solids, flux, fvals, model,
                 scheme="upwind", alpha=1.0, rtol=1e-13, maxiter=20000)
    x = m.centers[:, 0]
    upstream = m.fluid & (x < 0.2)
    downstream = m.fluid & (x > 0.8)
    # upwind advection cannot carry heat against the stream; conduction
    # this far upstream is negligible at this Peclet number
    assert state.t.data[upstream].max() < 300.0 + 1e-3
    assert state.t.data[downstream].mean() > 300.5
