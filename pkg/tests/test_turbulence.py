import numpy as np
import pytest
import scipy.integrate
from hypothesis import given, settings, strategies as st

from trafocool.boundary import (
    BoundaryModel, BoundarySpec, OutletFlow, Symmetry, VelocityInlet, Wall,
    apply_boundary,
)
from trafocool.fields import FluidProps, TurbConstants, init_stagnant
from trafocool.mesh import build_mesh
from trafocool.numerics import build_discretization
from trafocool.turbulence import (
    KAPPA, E_WALL, YPLUS_LAMINAR, build_wall_geometry, production,
    solve_k_epsilon, wall_functions,
)


def box_mesh(n=4):
    nodes = np.linspace(0.0, 1.0, n + 1)
    return build_mesh(nodes, nodes, nodes)


def boundary_face_velocity(mesh, field):
    return field(mesh.bf_centroid)


# -- shear production ------------------------------------------------------------


def test_production_zero_for_solid_body_rotation():
    m = box_mesh(5)
    disc = build_discretization(m, "fluid")
    omega = np.array([0.3, -1.1, 0.7])
    center = np.array([0.5, 0.5, 0.5])

    def rot(pts):
        return np.cross(omega, pts - center)

    v = rot(m.centers)
    bv = rot(m.bf_centroid)
    mu = np.full(m.ncells, 2e-3)
    k = np.full(m.ncells, 0.1)
    phi = production(disc, v, mu, k, rho=1.127, boundary_v=bv)
    scale = 2e-3 * float(np.linalg.norm(omega)) ** 2
    assert np.abs(phi).max() <= 1e-10 * scale


def test_production_matches_pure_shear():
    m = box_mesh(4)
    disc = build_discretization(m, "fluid")
    gamma = 2.5

    def shear(pts):
        out = np.zeros_like(pts)
        out[:, 0] = gamma * pts[:, 1]
        return out

    v = shear(m.centers)
    bv = shear(m.bf_centroid)
    mu = np.full(m.ncells, 3e-3)
    k = np.zeros(m.ncells)
    phi = production(disc, v, mu, k, rho=1.127, boundary_v=bv)
    np.testing.assert_allclose(phi, 3e-3 * gamma ** 2, rtol=1e-12)


def test_production_zero_for_uniform_flow():
    m = box_mesh(4)
    disc = build_discretization(m, "fluid")
    v = np.tile([0.4, -0.2, 1.0], (m.ncells, 1))
    bv = np.tile([0.4, -0.2, 1.0], (m.nbf, 1))
    phi = production(disc, v, np.full(m.ncells, 1e-3), np.full(m.ncells, 0.2),
                     rho=1.127, boundary_v=bv)
    np.testing.assert_allclose(phi, 0.0, atol=1e-16)


@settings(max_examples=25, deadline=None)
@given(st.floats(-30.0, 30.0), st.floats(-30.0, 30.0), st.floats(-30.0, 30.0))
def test_production_galilean_invariant(ux, uy, uz):
    rng = np.random.default_rng(42)
    m = box_mesh(3)
    disc = build_discretization(m, "fluid")
    v = rng.uniform(-1.0, 1.0, (m.ncells, 3))
    bv = rng.uniform(-1.0, 1.0, (m.nbf, 3))
    mu = np.full(m.ncells, 1e-3)
    k = np.full(m.ncells, 0.05)
    shift = np.array([ux, uy, uz])
    phi0 = production(disc, v, mu, k, rho=1.127, boundary_v=bv)
    phi1 = production(disc, v + shift, mu, k, rho=1.127, boundary_v=bv + shift)
    np.testing.assert_allclose(phi1, phi0, rtol=1e-9, atol=1e-9)


# -- wall functions ---------------------------------------------------------------


def wall_box(u=10.0):
    m = box_mesh(4)
    specs = [BoundarySpec(nm, Wall())
             for nm in ("xmin", "xmax", "ymin", "ymax", "zmin", "zmax")]
    model = BoundaryModel(m, specs, 1.127)
    disc = build_discretization(m, "fluid")
    geo = build_wall_geometry(disc, model)
    v = np.zeros((m.ncells, 3))
    v[:, 0] = u
    return m, geo, v


def test_wall_geometry_distances():
    m, geo, _ = wall_box()
    np.testing.assert_allclose(geo.dist, 0.125)  # half cell size, n=4
    np.testing.assert_allclose(geo.v_wall, 0.0)
    assert geo.area.sum() == pytest.approx(6.0)


def test_log_law_fixed_point():
    rho, mu0 = 1.127, 1.91e-5
    m, geo, v = wall_box(u=10.0)
    k = np.full(m.ncells, 0.375)
    ws = wall_functions(geo, v, k, rho, mu0)
    # faces normal to x see no tangential motion from a pure-x velocity
    tang = geo.axis != 0
    assert np.all(ws.y_plus[tang] > YPLUS_LAMINAR)
    resid = ws.u_tau[tang] * np.log(E_WALL * ws.y_plus[tang]) - KAPPA * ws.u_t[tang]
    np.testing.assert_allclose(resid, 0.0, atol=1e-10)
    np.testing.assert_allclose(ws.tau_w[tang], rho * ws.u_tau[tang] ** 2,
                               rtol=1e-12)
    np.testing.assert_allclose(ws.u_t[tang], 10.0)


def test_viscous_sublayer_is_exact_laminar_stress():
    rho, mu0 = 1.127, 1.91e-5
    u = 1e-4  # slow creep: y+ far below the crossover
    m, geo, v = wall_box(u=u)
    ws = wall_functions(geo, v, np.full(m.ncells, 1e-6), rho, mu0)
    tang = geo.axis != 0
    assert np.all(ws.y_plus[tang] < YPLUS_LAMINAR)
    np.testing.assert_allclose(ws.tau_w[tang], mu0 * u / geo.dist[tang],
                               rtol=1e-12)
    np.testing.assert_allclose(ws.mu_w[tang], mu0)


def test_wall_dissipation_scale():
    rho, mu0, c_mu = 1.127, 1.91e-5, 0.09
    m, geo, v = wall_box(u=5.0)
    k = np.full(m.ncells, 0.21)
    ws = wall_functions(geo, v, k, rho, mu0, c_mu=c_mu)
    expect = c_mu ** 0.75 * 0.21 ** 1.5 / (KAPPA * geo.d_min)
    np.testing.assert_allclose(ws.eps_wall, expect, rtol=1e-12)


def test_stationary_fluid_has_no_wall_stress():
    m, geo, v = wall_box(u=0.0)
    ws = wall_functions(geo, v, np.full(m.ncells, 1e-4), 1.127, 1.91e-5)
    np.testing.assert_allclose(ws.tau_w, 0.0)
    np.testing.assert_allclose(ws.pk, 0.0)


# -- transport: homogeneous decay oracle ------------------------------------------


def decay_channel(n, u=2.0, k0=0.06, eps0=0.3):
    """Uniform stream along x with no walls: K and eps decay by their sinks."""
    nodes = np.linspace(0.0, 1.0, n + 1)
    short = np.array([0.0, 0.1])
    m = build_mesh(nodes, short, short)
    props = FluidProps()
    specs = [
        BoundarySpec("xmin", VelocityInlet(velocity=(u, 0.0, 0.0),
                                           temperature=313.15, k=k0, eps=eps0)),
        BoundarySpec("xmax", OutletFlow(flow=None)),
        BoundarySpec("ymin", Symmetry()), BoundarySpec("ymax", Symmetry()),
        BoundarySpec("zmin", Symmetry()), BoundarySpec("zmax", Symmetry()),
    ]
    model = BoundaryModel(m, specs, props.rho_ref)
    disc = build_discretization(m, "fluid")
    state = init_stagnant(m, props, t0=313.15, k_floor=1e-12, eps_floor=1e-12)
    state.v.data[:, 0] = u
    state.k.data[:] = k0
    state.eps.data[:] = eps0
    fvals = apply_boundary(m, state, model)
    flux = np.where(disc.f_axis == 0, props.rho_ref * u * disc.f_area, 0.0)
    geo = build_wall_geometry(disc, model)
    ws = wall_functions(geo, state.v.data, state.k.data, props.rho_ref,
                        props.mu0)
    turb = TurbConstants()
    for _ in range(400):
        ke = solve_k_epsilon(disc, state, props, turb, flux, fvals, model,
                             geo, ws, alpha=0.8, k_floor=1e-12,
                             eps_floor=1e-12, rtol=1e-10, maxiter=2000)
        num_k, den_k = ke.res_k
        num_e, den_e = ke.res_eps
        if max(num_k / max(den_k, 1e-300),
               num_e / max(den_e, 1e-300)) < 1e-12:
            break
    return m, state, (u, k0, eps0)


def decay_ode(x, u, k0, eps0, c2):
    def rhs(_, y):
        k, eps = y
        return [-eps / u, -c2 * eps * eps / (k * u)]

    sol = scipy.integrate.solve_ivp(rhs, (0.0, x[-1]), [k0, eps0], t_eval=x,
                                    rtol=1e-11, atol=1e-14)
    return sol.y


def test_k_epsilon_decay_matches_ode():
    n = 64
    m, state, (u, k0, eps0) = decay_channel(n)
    x = m.centers[:, 0]
    k_ref, eps_ref = decay_ode(x, u, k0, eps0, TurbConstants().c2)
    k_err = np.abs(state.k.data - k_ref) / k_ref
    eps_err = np.abs(state.eps.data - eps_ref) / eps_ref
    assert k_err.max() < 0.05
    assert eps_err.max() < 0.05
    # decay is monotone and stays positive
    assert np.all(np.diff(state.k.data) < 0.0)
    assert np.all(state.eps.data > 0.0)


def test_k_epsilon_decay_first_order_in_h():
    errs = []
    for n in (32, 64, 128):
        m, state, (u, k0, eps0) = decay_channel(n)
        x = m.centers[:, 0]
        k_ref, _ = decay_ode(x, u, k0, eps0, TurbConstants().c2)
        errs.append(np.abs(state.k.data - k_ref).max() / k0)
    assert errs[0] / errs[1] > 1.7
    assert errs[1] / errs[2] > 1.7


def test_solve_k_epsilon_keeps_floors_under_rough_state():
    rng = np.random.default_rng(9)
    m = box_mesh(4)
    props = FluidProps()
    specs = [BoundarySpec(nm, Wall())
             for nm in ("xmin", "xmax", "ymin", "ymax", "zmin", "zmax")]
    model = BoundaryModel(m, specs, props.rho_ref)
    disc = build_discretization(m, "fluid")
    state = init_stagnant(m, props, t0=313.15)
    state.v.data = rng.uniform(-2.0, 2.0, (m.ncells, 3))
    fvals = apply_boundary(m, state, model)
    flux = rng.uniform(-0.1, 0.1, disc.f_o.size)
    geo = build_wall_geometry(disc, model)
    ws = wall_functions(geo, state.v.data, state.k.data, props.rho_ref,
                        props.mu0)
    for _ in range(5):
        solve_k_epsilon(disc, state, props, TurbConstants(), flux, fvals,
                        model, geo, ws, alpha=0.8, k_floor=1e-4,
                        eps_floor=1e-4, cap_ratio=1e5)
        assert np.all(state.k.data >= 1e-4 - 1e-18)
        assert np.all(state.eps.data >= 1e-4 - 1e-18)
        assert np.all(state.mu_t.data >= 0.0)
        assert np.all(state.mu_t.data <= 1e5 * props.mu0 * (1.0 + 1e-12))
