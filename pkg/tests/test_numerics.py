import numpy as np
import pytest
import scipy.sparse as sparse
from hypothesis import given, settings, strategies as st

from trafocool.mesh import build_mesh, gradient
from trafocool.numerics import (
    SystemBuilder, build_discretization, cell_divergence, d_comp_face,
    high_res_correction, minmod, normalized_residual, pressure_correction,
    pressure_correction_system, rhie_chow_fluxes, solve_linear, van_leer,
)


def line_mesh(n, length=1.0):
    nodes = np.linspace(0.0, length, n + 1)
    one = np.array([0.0, 1.0])
    return build_mesh(nodes, one, one)


def box_mesh(n):
    nodes = np.linspace(0.0, 1.0, n + 1)
    return build_mesh(nodes, nodes, nodes)


def bf_sel(mesh, axis, sign):
    return np.flatnonzero((mesh.bf_axis == axis) & (mesh.bf_sign == sign))


# -- limiters ------------------------------------------------------------------


@given(st.floats(min_value=-50.0, max_value=50.0))
def test_limiter_bounds(r):
    assert 0.0 <= van_leer(r) <= 2.0
    assert 0.0 <= minmod(r) <= 1.0
    if r <= 0.0:
        assert van_leer(r) == 0.0
        assert minmod(r) == 0.0


def test_limiters_pass_through_smooth_data():
    # psi(1) = 1 recovers plain central interpolation
    assert van_leer(1.0) == pytest.approx(1.0)
    assert minmod(1.0) == pytest.approx(1.0)


@given(st.floats(min_value=1e-3, max_value=1e3))
def test_van_leer_symmetry(r):
    # psi(r)/r == psi(1/r): both cell orderings see the same face value
    assert van_leer(r) / r == pytest.approx(van_leer(1.0 / r), rel=1e-12)


# -- linear solver contracts ---------------------------------------------------


def random_dd_system(n, rng):
    a = sparse.random(n, n, density=min(4.0 / n, 0.5), random_state=rng,
                      data_rvs=lambda k: rng.uniform(-1, 1, k)).tolil()
    a.setdiag(0.0)
    ad = abs(a).sum(axis=1).A1 + rng.uniform(0.5, 2.0, n)
    a.setdiag(ad)
    return a.tocsr()


def test_solve_linear_small_goes_direct():
    rng = np.random.default_rng(3)
    a = random_dd_system(200, rng)
    x_true = rng.standard_normal(200)
    res = solve_linear(a, a @ x_true)
    assert res.converged
    np.testing.assert_allclose(res.x, x_true, atol=1e-10)


def test_solve_linear_iterative_path():
    rng = np.random.default_rng(4)
    n = 4000
    a = random_dd_system(n, rng)
    x_true = rng.standard_normal(n)
    res = solve_linear(a, a @ x_true, rtol=1e-10, maxiter=2000)
    assert res.converged
    assert np.abs(res.x - x_true).max() < 1e-6


def test_solve_linear_exact_warm_start_untouched():
    rng = np.random.default_rng(5)
    n = 4000
    a = random_dd_system(n, rng)
    x_true = rng.standard_normal(n)
    res = solve_linear(a, a @ x_true, x0=x_true, rtol=1e-6)
    assert res.converged
    assert np.array_equal(res.x, x_true)


def test_solve_linear_reduces_initial_residual_not_rhs_norm():
    # the right-hand side carries a large offset (absolute-temperature
    # systems); convergence must be judged against the warm start's own
    # residual, which is tiny compared with ||b||
    n = 4000
    i = np.arange(n)
    a = sparse.diags(2.0 + i / n).tocsr()
    x_true = 300.0 + np.sin(i * 0.1)
    b = a @ x_true
    x0 = x_true + 1e-4 * np.cos(i * 0.3)
    r0 = np.linalg.norm(b - a @ x0)
    assert r0 < 1e-6 * np.linalg.norm(b)
    res = solve_linear(a, b, x0=x0, rtol=1e-3, maxiter=500)
    assert res.converged
    assert np.linalg.norm(b - a @ res.x) <= 1.05e-3 * r0


def test_solve_linear_consistent_singular_with_null_rhs():
    n = 50
    main = 2.0 * np.ones(n)
    main[0] = main[-1] = 1.0
    a = sparse.diags([main, -np.ones(n - 1), -np.ones(n - 1)],
                     [0, -1, 1]).tocsr()
    x0 = 7.0 * np.ones(n)
    res = solve_linear(a, np.zeros(n), x0=x0, symmetric=True)
    assert res.converged
    assert np.array_equal(res.x, x0)


def test_solve_linear_empty_system():
    a = sparse.csr_matrix((0, 0))
    res = solve_linear(a, np.zeros(0))
    assert res.converged and res.x.size == 0


def test_normalized_residual_pair():
    a = sparse.identity(3, format="csr") * 2.0
    x = np.array([1.0, 1.0, 1.0])
    b = np.array([2.0, 2.0, 4.0])
    num, den = normalized_residual(a, x, b)
    # num: L1 imbalance; den: operator range A(x - xbar) plus b - A*xbar
    assert num == pytest.approx(2.0)
    assert den == pytest.approx(2.0)
    num0, _ = normalized_residual(a, np.array([1.0, 1.0, 2.0]), b)
    assert num0 == pytest.approx(0.0)


# -- 1-D diffusion oracles -----------------------------------------------------


def solve_dirichlet_diffusion(n, q=0.0):
    m = line_mesh(n)
    disc = build_discretization(m, "fluid")
    sb = SystemBuilder(disc)
    sb.diffusion_interior(np.ones(disc.f_o.size))
    sb.dirichlet_boundary(bf_sel(m, 0, -1), 1.0, 0.0)
    sb.dirichlet_boundary(bf_sel(m, 0, +1), 1.0, 0.0)
    if q:
        sb.source(q)
    a, rhs = sb.build()
    res = solve_linear(a, rhs, symmetric=True, rtol=1e-12, maxiter=2000)
    assert res.converged
    return m.centers[:, 0], res.x


def test_laplace_line_is_linear():
    m = line_mesh(17)
    disc = build_discretization(m, "fluid")
    sb = SystemBuilder(disc)
    sb.diffusion_interior(np.ones(disc.f_o.size))
    sb.dirichlet_boundary(bf_sel(m, 0, -1), 1.0, 2.0)
    sb.dirichlet_boundary(bf_sel(m, 0, +1), 1.0, 5.0)
    a, rhs = sb.build()
    res = solve_linear(a, rhs, symmetric=True, rtol=1e-12, maxiter=2000)
    np.testing.assert_allclose(res.x, 2.0 + 3.0 * m.centers[:, 0], atol=1e-9)


def test_poisson_line_second_order():
    errs = []
    for n in (16, 32, 64):
        x, t = solve_dirichlet_diffusion(n, q=6.0)
        errs.append(np.abs(t - 3.0 * x * (1.0 - x)).max())
    assert errs[0] / errs[1] > 3.5
    assert errs[1] / errs[2] > 3.5


def test_transport_system_weakly_diagonally_dominant():
    # dominance needs a conservative flux field with its boundary closure,
    # the same combination the solver assembles
    m = box_mesh(4)
    disc = build_discretization(m, "fluid")
    sb = SystemBuilder(disc)
    sb.diffusion_interior(np.full(disc.f_o.size, 0.3))
    c = 0.8
    sb.advection_interior_upwind(np.where(disc.f_axis == 0,
                                          c * disc.f_area, 0.0))
    inflow = bf_sel(m, 0, -1)
    outflow = bf_sel(m, 0, +1)
    sb.advection_boundary(inflow, -c * m.bf_area[inflow], 1.0)
    sb.advection_boundary(outflow, c * m.bf_area[outflow], 0.0)
    sb.dirichlet_boundary(inflow, 0.3, 1.0)
    a, _ = sb.build()
    d = np.abs(a.diagonal())
    off = np.abs(a).sum(axis=1).A1 - d
    assert np.all(d >= off - 1e-12)
    assert np.any(d > off + 1e-12)


def test_relax_and_false_step_preserve_fixed_point():
    n = 16
    x, t = solve_dirichlet_diffusion(n, q=6.0)
    m = line_mesh(n)
    disc = build_discretization(m, "fluid")
    sb = SystemBuilder(disc)
    sb.diffusion_interior(np.ones(disc.f_o.size))
    sb.dirichlet_boundary(bf_sel(m, 0, -1), 1.0, 0.0)
    sb.dirichlet_boundary(bf_sel(m, 0, +1), 1.0, 0.0)
    sb.source(6.0)
    sb.relax(0.7, t)
    sb.false_time_step(np.full(disc.n, 2.5), t)
    a, rhs = sb.build()
    np.testing.assert_allclose(a @ t, rhs, atol=1e-9)


def test_fix_rows_pins_cells():
    m = line_mesh(8)
    disc = build_discretization(m, "fluid")
    sb = SystemBuilder(disc)
    sb.diffusion_interior(np.ones(disc.f_o.size))
    sb.fix_rows(np.array([0, 7]), np.array([1.0, 9.0]))
    a, rhs = sb.build()
    res = solve_linear(a, rhs, rtol=1e-12, maxiter=1000)
    # harmonic between the pinned cells: linear in cell index
    np.testing.assert_allclose(res.x, np.linspace(1.0, 9.0, 8), atol=1e-9)


# -- steady advection ----------------------------------------------------------


def test_upwind_advection_carries_inlet_value():
    n = 20
    m = line_mesh(n)
    disc = build_discretization(m, "fluid")
    sb = SystemBuilder(disc)
    flux = np.full(disc.f_o.size, 0.4)
    sb.advection_interior_upwind(flux)
    area = m.bf_area
    sb.advection_boundary(bf_sel(m, 0, -1), -0.4 * area[bf_sel(m, 0, -1)], 3.5)
    sb.advection_boundary(bf_sel(m, 0, +1), 0.4 * area[bf_sel(m, 0, +1)], 0.0)
    a, rhs = sb.build()
    res = solve_linear(a, rhs, rtol=1e-12, maxiter=1000)
    np.testing.assert_allclose(res.x, 3.5, atol=1e-10)


def test_high_res_correction_vanishes_on_uniform_field():
    m = box_mesh(4)
    disc = build_discretization(m, "fluid")
    phi = np.full(m.ncells, 2.3)
    g = gradient(m, phi, extrapolate_boundary=True)
    flux = np.linspace(-1, 1, disc.f_o.size)
    dc = high_res_correction(disc, phi, g, flux)
    np.testing.assert_allclose(dc, 0.0, atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_high_res_face_values_bounded(seed):
    rng = np.random.default_rng(seed)
    m = box_mesh(3)
    disc = build_discretization(m, "fluid")
    phi = rng.uniform(-5.0, 5.0, m.ncells)
    g = gradient(m, phi, extrapolate_boundary=True)
    flux = rng.uniform(-2.0, 2.0, disc.f_o.size)
    dc = high_res_correction(disc, phi, g, flux)
    up = np.where(flux >= 0.0, disc.f_o, disc.f_n)
    face = phi[up] + dc
    lo = np.minimum(phi[disc.f_o], phi[disc.f_n])
    hi = np.maximum(phi[disc.f_o], phi[disc.f_n])
    assert np.all(face >= lo - 1e-12)
    assert np.all(face <= hi + 1e-12)


# -- Rhie-Chow and pressure correction ----------------------------------------


def test_rhie_chow_exact_for_uniform_velocity_linear_pressure():
    m = box_mesh(4)
    disc = build_discretization(m, "fluid")
    rho = 1.8
    v = np.zeros((m.ncells, 3))
    v[:, 0] = 0.7
    p = 5.0 - 2.0 * m.centers[:, 0]
    gp = gradient(m, p, extrapolate_boundary=True)
    d_comp = np.full((m.ncells, 3), 0.03)
    flux, df = rhie_chow_fluxes(disc, v, p, gp, d_comp, rho)
    expect = np.where(disc.f_axis == 0, rho * 0.7 * disc.f_area, 0.0)
    np.testing.assert_allclose(flux, expect, atol=1e-12)
    np.testing.assert_allclose(df, 0.03, atol=1e-15)


def test_rhie_chow_sees_checkerboard_pressure():
    m = box_mesh(4)
    disc = build_discretization(m, "fluid")
    idx = np.indices(m.shape).reshape(3, -1).sum(axis=0)
    p = np.where(idx % 2 == 0, 1.0, -1.0)
    gp = gradient(m, p)  # Green-Gauss gradient of a checkerboard is ~zero
    v = np.zeros((m.ncells, 3))
    d_comp = np.full((m.ncells, 3), 0.05)
    flux, _ = rhie_chow_fluxes(disc, v, p, gp, d_comp, 1.0)
    assert np.abs(flux).max() > 1e-3


def test_pressure_correction_removes_imbalance():
    rng = np.random.default_rng(11)
    m = box_mesh(5)
    disc = build_discretization(m, "fluid")
    rho = 1.1
    v = rng.uniform(-1.0, 1.0, (m.ncells, 3))
    p = np.zeros(m.ncells)
    d_comp = np.full((m.ncells, 3), 0.02)
    flux, _ = rhie_chow_fluxes(disc, v, p, gradient(m, p), d_comp, rho)
    bmass = np.zeros(m.nbf)  # sealed box
    pc = pressure_correction(disc, flux, bmass, d_comp, rho, ref_cell=0,
                             rtol=1e-12, maxiter=5000)
    before = np.abs(pc.div_before).sum()
    after = np.abs(pc.div_after).sum()
    assert before > 1e-3
    assert after <= 1e-8 * before
    # corrected fluxes are what div_after was computed from
    np.testing.assert_allclose(cell_divergence(disc, pc.flux, bmass),
                               pc.div_after)


def test_pressure_correction_noop_on_divergence_free_flux():
    m = box_mesh(4)
    disc = build_discretization(m, "fluid")
    flux = np.where(disc.f_axis == 0, 0.25 * disc.f_area, 0.0)
    # uniform throughflow: outward boundary mass flux is signed by the normal
    bmass = np.zeros(m.nbf)
    sel = m.bf_axis == 0
    bmass[sel] = 0.25 * m.bf_sign[sel] * m.bf_area[sel]
    d_comp = np.full((m.ncells, 3), 0.02)
    pc = pressure_correction(disc, flux, bmass, d_comp, 1.0, ref_cell=0,
                             rtol=1e-10)
    assert np.abs(pc.div_before).max() < 1e-14
    np.testing.assert_allclose(pc.p_prime, 0.0, atol=1e-12)
    np.testing.assert_allclose(pc.flux, flux, atol=1e-14)


def test_pressure_system_spd_structure():
    m = box_mesh(3)
    disc = build_discretization(m, "fluid")
    df = np.full(disc.f_o.size, 0.04)
    a, cf = pressure_correction_system(disc, df, rho=1.3)
    np.testing.assert_allclose(cf, 1.3 * disc.f_area * df / disc.f_dist)
    assert abs(a - a.T).max() < 1e-14
    rows = np.asarray(a.sum(axis=1)).ravel()
    np.testing.assert_allclose(rows, 0.0, atol=1e-13)  # pure Neumann
    off = a - sparse.diags(a.diagonal())
    assert off.nnz and np.all(off.data <= 0.0)
    assert np.all(a.diagonal() > 0.0)


def test_d_comp_face_interpolates():
    m = line_mesh(2)  # two cells, one face, w = 0.5 on the uniform mesh
    disc = build_discretization(m, "fluid")
    d_comp = np.zeros((m.ncells, 3))
    d_comp[:, 0] = [0.02, 0.06]
    np.testing.assert_allclose(d_comp_face(disc, d_comp), [0.04])
