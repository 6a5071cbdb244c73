import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trafocool.mesh import (
    BLANKED, FLUID, MeshError, build_mesh, gradient, interior_faces,
)


def uniform(n, length=1.0):
    return np.linspace(0.0, length, n + 1)


def closure_defect(mesh):
    """Per-cell sum of signed face areas; zero for a watertight cell."""
    out = np.zeros((mesh.ncells, 3))
    f = mesh.faces
    for ax, (a, b) in enumerate(f.axis_slices):
        np.add.at(out[:, ax], f.owner[a:b], f.area[a:b])
        np.add.at(out[:, ax], f.neighbor[a:b], -f.area[a:b])
    for ax in range(3):
        sel = mesh.bf_axis == ax
        np.add.at(out[:, ax], mesh.bf_cell[sel],
                  mesh.bf_sign[sel] * mesh.bf_area[sel])
    return out


def test_cell_counting_2x2x1():
    m = build_mesh(uniform(2), uniform(2), uniform(1))
    assert m.ncells == 4
    assert m.shape == (2, 2, 1)
    np.testing.assert_allclose(m.volumes, 0.25)


def test_cell_counting_tank_scale():
    m = build_mesh(uniform(64), uniform(96), uniform(32))
    assert m.ncells == 64 * 96 * 32 == 196608


def test_volume_sum_matches_domain():
    xs = np.array([0.0, 0.1, 0.35, 0.9, 2.4])
    ys = np.array([0.0, 0.4, 1.9])
    zs = np.array([0.0, 0.5, 0.8, 1.2])
    m = build_mesh(xs, ys, zs)
    assert abs(m.volumes.sum() - 2.4 * 1.9 * 1.2) < 1e-12


def test_geometric_closure_nonuniform():
    xs = np.array([0.0, 0.07, 0.3, 1.0])
    ys = np.array([0.0, 0.5, 0.55, 2.0])
    zs = np.array([0.0, 0.9, 1.0])
    m = build_mesh(xs, ys, zs)
    defect = closure_defect(m)
    assert np.abs(defect).max() <= 1e-12 * m.bf_area.max()


def test_nodes_must_increase():
    with pytest.raises(MeshError):
        build_mesh([0.0, 0.5, 0.5, 1.0], uniform(2), uniform(2))
    with pytest.raises(MeshError):
        build_mesh([0.0], uniform(2), uniform(2))


def test_region_box_outside_domain_rejected():
    with pytest.raises(MeshError):
        build_mesh(uniform(4), uniform(4), uniform(4),
                   [(((0.0, 2.0), (0.0, 1.0), (0.0, 1.0)), 1)])


def test_region_tagging_and_blanking():
    box_solid = (((0.25, 0.75), (0.25, 0.75), (0.0, 1.0)), 2)
    box_blank = (((0.0, 0.25), (0.0, 0.25), (0.0, 1.0)), BLANKED)
    m = build_mesh(uniform(4), uniform(4), uniform(1),
                   [box_solid, box_blank])
    tags = m.tags.reshape(m.shape)
    assert tags[0, 0, 0] == BLANKED
    assert tags[1, 1, 0] == 2
    assert tags[3, 3, 0] == FLUID
    assert not m.live[m.cell_index(0, 0, 0)]
    assert m.live[m.cell_index(1, 1, 0)]
    assert m.fluid[m.cell_index(3, 3, 0)]
    assert not m.fluid[m.cell_index(1, 1, 0)]
    assert set(m.region_cells(2)) == {m.cell_index(i, j, 0)
                                      for i in (1, 2) for j in (1, 2)}


def test_later_boxes_overwrite_earlier():
    full = (((0.0, 1.0), (0.0, 1.0), (0.0, 1.0)), 1)
    half = (((0.0, 0.5), (0.0, 1.0), (0.0, 1.0)), 2)
    m = build_mesh(uniform(2), uniform(2), uniform(2), [full, half])
    tags = m.tags.reshape(m.shape)
    assert np.all(tags[0] == 2)
    assert np.all(tags[1] == 1)


def test_interior_faces_skip_blanked_cells():
    blank = (((0.25, 0.5), (0.0, 1.0), (0.0, 1.0)), BLANKED)
    m = build_mesh(uniform(4), uniform(1), uniform(1), [blank])
    f = interior_faces(m)
    dead = m.cell_index(1, 0, 0)
    assert dead not in f.owner and dead not in f.neighbor


def test_gradient_exact_for_linear_field():
    xs = np.array([0.0, 0.2, 0.5, 1.0])
    ys = np.array([0.0, 0.3, 1.0])
    zs = np.array([0.0, 0.6, 1.0])
    m = build_mesh(xs, ys, zs)
    coef = np.array([1.7, -0.4, 2.2])
    vals = 3.0 + m.centers @ coef
    g = gradient(m, vals, extrapolate_boundary=True)
    np.testing.assert_allclose(g, np.broadcast_to(coef, g.shape), atol=1e-12)


def test_gradient_boundary_values_override():
    m = build_mesh(uniform(3), uniform(3), uniform(1))
    vals = m.centers[:, 0]
    exact = m.bf_centroid[:, 0]
    g = gradient(m, vals, boundary_values=exact)
    np.testing.assert_allclose(g[:, 0], 1.0, atol=1e-12)
    np.testing.assert_allclose(g[:, 1], 0.0, atol=1e-12)


def test_gradient_second_order_on_smooth_field():
    errs = []
    for n in (16, 32, 64):
        m = build_mesh(uniform(n), uniform(n), uniform(1))
        x, y = m.centers[:, 0], m.centers[:, 1]
        vals = np.sin(np.pi * x) * np.cos(np.pi * y)
        gx = np.pi * np.cos(np.pi * x) * np.cos(np.pi * y)
        g = gradient(m, vals, extrapolate_boundary=True)
        # fixed interior box; the one-sided boundary closure is lower order
        inner = (x > 0.2) & (x < 0.8) & (y > 0.2) & (y < 0.8)
        err = g[inner, 0] - gx[inner]
        errs.append(np.sqrt(np.mean(err * err)))
    assert errs[0] / errs[1] > 3.4
    assert errs[1] / errs[2] > 3.4


nodes_st = st.lists(
    st.floats(min_value=0.01, max_value=1.0), min_size=2, max_size=6,
).map(lambda widths: np.concatenate([[0.0], np.cumsum(widths)]))


@settings(max_examples=40, deadline=None)
@given(nodes_st, nodes_st, nodes_st)
def test_mesh_watertight_property(xs, ys, zs):
    m = build_mesh(xs, ys, zs)
    assert np.all(m.volumes > 0)
    dom = (xs[-1] - xs[0]) * (ys[-1] - ys[0]) * (zs[-1] - zs[0])
    assert abs(m.volumes.sum() - dom) <= 1e-10 * max(dom, 1.0)
    defect = closure_defect(m)
    assert np.abs(defect).max() <= 1e-12 * max(m.bf_area.max(), 1.0)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 5))
def test_face_and_cell_counts(nx, ny, nz):
    m = build_mesh(uniform(nx), uniform(ny), uniform(nz))
    assert m.ncells == nx * ny * nz
    n_interior = ((nx - 1) * ny * nz + nx * (ny - 1) * nz
                  + nx * ny * (nz - 1))
    assert m.faces.owner.size == n_interior
    assert m.nbf == 2 * (ny * nz + nx * nz + nx * ny)
