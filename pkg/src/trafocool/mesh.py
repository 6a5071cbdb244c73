"""Block-structured Cartesian mesh with region tagging and boundary patches.

Cells are tagged fluid, solid (positive region id) or blanked (removed from
the computation).  All face connectivity is precomputed as flat numpy arrays
so that assembly and gradient evaluation stay fully vectorized.

Flat cell index convention: ``cid = (i * ny + j) * nz + k`` (C order of the
``(nx, ny, nz)`` tag array).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FLUID = 0
BLANKED = -1

SIDE_PATCHES = ("xmin", "xmax", "ymin", "ymax", "zmin", "zmax")
INTERNAL_WALLS = "internal_walls"


class MeshError(ValueError):
    """Invalid mesh construction input."""


@dataclass
class Patch:
    """Named group of boundary faces (indices into the mesh bf_* arrays)."""

    name: str
    faces: np.ndarray


@dataclass
class FaceSet:
    """Interior faces as a struct of arrays, grouped by axis.

    The normal of a face points from ``owner`` to ``neighbor`` along +axis.
    ``w_owner`` is the linear-interpolation weight of the owner value at the
    face centroid, i.e. ``phi_f = w*phi_o + (1-w)*phi_n``.
    """

    owner: np.ndarray
    neighbor: np.ndarray
    axis: np.ndarray
    area: np.ndarray
    dist: np.ndarray
    w_owner: np.ndarray
    axis_slices: tuple = field(default=())

    def __len__(self) -> int:
        return int(self.owner.size)


class Mesh:
    """Immutable-after-build Cartesian grid. Construct via :func:`build_mesh`."""

    def __init__(self, x_nodes, y_nodes, z_nodes, tags3):
        self.xn = np.asarray(x_nodes, dtype=float)
        self.yn = np.asarray(y_nodes, dtype=float)
        self.zn = np.asarray(z_nodes, dtype=float)
        self.nx = self.xn.size - 1
        self.ny = self.yn.size - 1
        self.nz = self.zn.size - 1
        self.shape = (self.nx, self.ny, self.nz)
        self.ncells = self.nx * self.ny * self.nz

        self.dxs = (np.diff(self.xn), np.diff(self.yn), np.diff(self.zn))
        self.centers_axis = tuple(0.5 * (n[:-1] + n[1:]) for n in (self.xn, self.yn, self.zn))
        self.nodes_axis = (self.xn, self.yn, self.zn)

        self.tags = np.ascontiguousarray(tags3, dtype=np.int32).reshape(-1)
        self.live = self.tags != BLANKED
        self.fluid = self.tags == FLUID

        xc, yc, zc = self.centers_axis
        dx, dy, dz = self.dxs
        self.volumes = np.einsum("i,j,k->ijk", dx, dy, dz).reshape(-1)
        cx, cy, cz = np.meshgrid(xc, yc, zc, indexing="ij")
        self.centers = np.column_stack(
            [cx.reshape(-1), cy.reshape(-1), cz.reshape(-1)]
        )

        self._build_faces()
        self._build_boundary()
        self._disc_cache: dict = {}

    # -- construction internals ------------------------------------------

    def _build_faces(self):
        cid = np.arange(self.ncells).reshape(self.shape)
        live3 = self.live.reshape(self.shape)
        dx, dy, dz = self.dxs
        xc, yc, zc = self.centers_axis
        cross = (
            np.multiply.outer(dy, dz),  # area of x-normal faces
            np.multiply.outer(dx, dz),
            np.multiply.outer(dx, dy),
        )

        owners, neighbors, axes, areas, dists, weights = [], [], [], [], [], []
        slices = []
        start = 0
        for ax, (n, c, nodes) in enumerate(
            zip(self.shape, self.centers_axis, self.nodes_axis)
        ):
            lo = [slice(None)] * 3
            hi = [slice(None)] * 3
            lo[ax] = slice(0, n - 1)
            hi[ax] = slice(1, n)
            o3 = cid[tuple(lo)]
            n3 = cid[tuple(hi)]
            m = live3[tuple(lo)] & live3[tuple(hi)]

            # geometry broadcast to the (n-1, ., .) face block of this axis
            shp = list(self.shape)
            shp[ax] -= 1
            if ax == 0:
                area3 = np.broadcast_to(cross[0][None, :, :], shp)
            elif ax == 1:
                area3 = np.broadcast_to(cross[1][:, None, :], shp)
            else:
                area3 = np.broadcast_to(cross[2][:, :, None], shp)
            d1 = c[1:] - c[:-1]
            w1 = (c[1:] - nodes[1:-1]) / d1
            rs = [1, 1, 1]
            rs[ax] = n - 1
            dist3 = np.broadcast_to(d1.reshape(rs), shp)
            w3 = np.broadcast_to(w1.reshape(rs), shp)

            owners.append(o3[m])
            neighbors.append(n3[m])
            areas.append(area3[m])
            dists.append(dist3[m])
            weights.append(w3[m])
            axes.append(np.full(o3[m].size, ax, dtype=np.int8))
            slices.append((start, start + int(o3[m].size)))
            start += int(o3[m].size)

        self.faces = FaceSet(
            owner=np.concatenate(owners),
            neighbor=np.concatenate(neighbors),
            axis=np.concatenate(axes),
            area=np.concatenate(areas),
            dist=np.concatenate(dists),
            w_owner=np.concatenate(weights),
            axis_slices=tuple(slices),
        )

    def _build_boundary(self):
        cid = np.arange(self.ncells).reshape(self.shape)
        live3 = self.live.reshape(self.shape)
        dx, dy, dz = self.dxs
        cross = (
            np.multiply.outer(dy, dz),
            np.multiply.outer(dx, dz),
            np.multiply.outer(dx, dy),
        )

        cells, axes, signs, areas, dists = [], [], [], [], []
        patch_ids = []
        patch_names = list(SIDE_PATCHES)

        def grab(c3, m3, ax, sign, a3, d3, pid):
            cells.append(c3[m3])
            axes.append(np.full(c3[m3].size, ax, dtype=np.int8))
            signs.append(np.full(c3[m3].size, sign, dtype=np.int8))
            areas.append(a3[m3])
            dists.append(d3[m3])
            patch_ids.append(np.full(c3[m3].size, pid, dtype=np.int32))

        for ax, (n, spac) in enumerate(zip(self.shape, self.dxs)):
            take_lo = [slice(None)] * 3
            take_hi = [slice(None)] * 3
            take_lo[ax] = 0
            take_hi[ax] = n - 1
            c_lo = cid[tuple(take_lo)]
            c_hi = cid[tuple(take_hi)]
            m_lo = live3[tuple(take_lo)]
            m_hi = live3[tuple(take_hi)]
            shp2 = [s for a, s in enumerate(self.shape) if a != ax]
            if ax == 0:
                a2 = cross[0]
            elif ax == 1:
                a2 = cross[1]
            else:
                a2 = cross[2]
            d_lo = np.broadcast_to(0.5 * spac[0], shp2)
            d_hi = np.broadcast_to(0.5 * spac[-1], shp2)
            grab(c_lo, m_lo, ax, -1, a2, d_lo, 2 * ax)
            grab(c_hi, m_hi, ax, +1, a2, d_hi, 2 * ax + 1)

        # faces between a live cell and a blanked cell
        any_internal = False
        for ax, n in enumerate(self.shape):
            lo = [slice(None)] * 3
            hi = [slice(None)] * 3
            lo[ax] = slice(0, n - 1)
            hi[ax] = slice(1, n)
            o3 = cid[tuple(lo)]
            n3 = cid[tuple(hi)]
            l_o = live3[tuple(lo)]
            l_n = live3[tuple(hi)]
            shp = list(self.shape)
            shp[ax] -= 1
            if ax == 0:
                area3 = np.broadcast_to(cross[0][None, :, :], shp)
            elif ax == 1:
                area3 = np.broadcast_to(cross[1][:, None, :], shp)
            else:
                area3 = np.broadcast_to(cross[2][:, :, None], shp)
            half = 0.5 * self.dxs[ax]
            rs = [1, 1, 1]
            rs[ax] = n - 1
            half_lo = np.broadcast_to(half[:-1].reshape(rs), shp)
            half_hi = np.broadcast_to(half[1:].reshape(rs), shp)

            m1 = l_o & ~l_n  # owner live, neighbor blanked -> face on +ax side
            m2 = ~l_o & l_n
            if m1.any():
                any_internal = True
                grab(o3, m1, ax, +1, area3, half_lo, len(SIDE_PATCHES))
            if m2.any():
                any_internal = True
                grab(n3, m2, ax, -1, area3, half_hi, len(SIDE_PATCHES))

        self.bf_cell = np.concatenate(cells) if cells else np.zeros(0, dtype=int)
        self.bf_axis = np.concatenate(axes) if axes else np.zeros(0, dtype=np.int8)
        self.bf_sign = np.concatenate(signs) if signs else np.zeros(0, dtype=np.int8)
        self.bf_area = np.concatenate(areas) if areas else np.zeros(0)
        self.bf_dist = np.concatenate(dists) if dists else np.zeros(0)
        bf_patch = np.concatenate(patch_ids) if patch_ids else np.zeros(0, dtype=np.int32)
        self.nbf = self.bf_cell.size

        # face centroids: cell center shifted to the face plane along bf_axis
        self.bf_centroid = self.centers[self.bf_cell].copy()
        for ax in range(3):
            sel = self.bf_axis == ax
            self.bf_centroid[sel, ax] += self.bf_sign[sel] * self.bf_dist[sel]

        # inner neighbor one step away from the boundary (for extrapolation)
        step = np.array([self.ny * self.nz, self.nz, 1])
        inner = self.bf_cell - self.bf_sign * step[self.bf_axis]
        idx3 = np.unravel_index(self.bf_cell, self.shape)
        pos = np.array([idx3[0], idx3[1], idx3[2]])
        pos_in = pos.copy()
        for ax in range(3):
            sel = self.bf_axis == ax
            pos_in[ax, sel] -= self.bf_sign[sel]
        ok = np.ones(self.nbf, dtype=bool)
        for ax in range(3):
            ok &= (pos_in[ax] >= 0) & (pos_in[ax] < self.shape[ax])
        inner = np.where(ok, inner, -1)
        inner = np.where((inner >= 0) & self.live[np.clip(inner, 0, None)], inner, -1)
        self.bf_inner = inner
        d_in = np.zeros(self.nbf)
        has = inner >= 0
        if has.any():
            diffc = self.centers[self.bf_cell[has]] - self.centers[inner[has]]
            d_in[has] = np.abs(diffc[np.arange(has.sum()), self.bf_axis[has]])
        self.bf_inner_dist = d_in

        if any_internal:
            patch_names.append(INTERNAL_WALLS)
        self.patches = [
            Patch(name, np.flatnonzero(bf_patch == pid))
            for pid, name in enumerate(patch_names)
        ]
        self._bf_patch = bf_patch

    # -- patch management -------------------------------------------------

    def patch_names(self):
        return [p.name for p in self.patches]

    def patch(self, name: str) -> Patch:
        for p in self.patches:
            if p.name == name:
                return p
        raise MeshError(f"no patch named {name!r}")

    def carve_patch(self, name, selector, from_patches=None):
        """Move boundary faces selected by ``selector(centroids) -> mask`` into
        a new patch.  Used while building a case; the mesh is frozen afterwards."""
        if name in self.patch_names():
            raise MeshError(f"patch {name!r} already exists")
        pool = from_patches if from_patches is not None else self.patch_names()
        taken = []
        for p in self.patches:
            if p.name not in pool or p.faces.size == 0:
                continue
            m = selector(self.bf_centroid[p.faces])
            taken.append(p.faces[m])
            p.faces = p.faces[~m]
        faces = np.concatenate(taken) if taken else np.zeros(0, dtype=int)
        if faces.size == 0:
            raise MeshError(f"patch {name!r} selected no faces")
        new = Patch(name, np.sort(faces))
        self.patches.append(new)
        self._bf_patch[new.faces] = len(self.patches) - 1
        return new

    def bf_patch_id(self):
        return self._bf_patch

    # -- queries -----------------------------------------------------------

    def cell_index(self, i, j, k):
        return (i * self.ny + j) * self.nz + k

    def nearest_cell(self, point, mask=None):
        """Flat index of the active cell nearest to ``point``."""
        m = self.live if mask is None else mask
        ids = np.flatnonzero(m)
        d = np.einsum("ij,ij->i", self.centers[ids] - point, self.centers[ids] - point)
        return int(ids[np.argmin(d)])

    def region_cells(self, region_id):
        return np.flatnonzero(self.tags == region_id)


def build_mesh(x_nodes, y_nodes, z_nodes, region_boxes=()) -> Mesh:
    """Build a tagged Cartesian mesh.

    ``region_boxes`` is a sequence of ``(extents, tag)`` where extents is
    ``((x0, x1), (y0, y1), (z0, z1))`` and tag is ``FLUID``, ``BLANKED`` or a
    positive solid region id.  Boxes are applied in order; later boxes
    overwrite earlier ones.  A cell belongs to a box when its center does.
    """
    axes = []
    for nm, arr in zip("xyz", (x_nodes, y_nodes, z_nodes)):
        a = np.asarray(arr, dtype=float)
        if a.ndim != 1 or a.size < 2:
            raise MeshError(f"{nm}-node array must be 1-D with at least two nodes")
        if not np.all(np.diff(a) > 0):
            raise MeshError(f"{nm}-node array must be strictly increasing")
        axes.append(a)
    xr, yr, zr = axes
    nx, ny, nz = xr.size - 1, yr.size - 1, zr.size - 1
    tags = np.zeros((nx, ny, nz), dtype=np.int32)
    centers = [0.5 * (a[:-1] + a[1:]) for a in axes]
    lo = np.array([a[0] for a in axes])
    hi = np.array([a[-1] for a in axes])
    eps = 1e-9 * np.maximum(hi - lo, 1.0)

    for ib, (extents, tag) in enumerate(region_boxes):
        ext = np.asarray(extents, dtype=float)
        if ext.shape != (3, 2):
            raise MeshError(f"region box {ib}: extents must be 3 (lo, hi) pairs")
        if np.any(ext[:, 0] >= ext[:, 1]):
            raise MeshError(f"region box {ib}: empty or inverted extents {ext.tolist()}")
        if np.any(ext[:, 0] < lo - eps) or np.any(ext[:, 1] > hi + eps):
            raise MeshError(
                f"region box {ib} with extents {ext.tolist()} lies outside the domain"
            )
        sl = []
        for ax in range(3):
            c = centers[ax]
            sl.append(slice(np.searchsorted(c, ext[ax, 0]), np.searchsorted(c, ext[ax, 1])))
        tags[tuple(sl)] = int(tag)

    return Mesh(xr, yr, zr, tags)


def interior_faces(mesh: Mesh) -> FaceSet:
    """All interior faces between non-blanked cells, each exactly once."""
    return mesh.faces


def gradient(mesh: Mesh, values, boundary_values=None, extrapolate_boundary=False):
    """Green-Gauss cell gradient of a scalar defined on all cells.

    ``boundary_values`` (per boundary face) override the default mirror
    closure.  With ``extrapolate_boundary`` the face value is linearly
    extrapolated from the two nearest interior cells instead, which keeps
    the gradient exact for linear fields up to the boundary.
    """
    v = np.asarray(values, dtype=float)
    g = np.zeros((mesh.ncells, 3))
    f = mesh.faces
    for ax, (a, b) in enumerate(f.axis_slices):
        if a == b:
            continue
        o = f.owner[a:b]
        n = f.neighbor[a:b]
        phi_f = f.w_owner[a:b] * v[o] + (1.0 - f.w_owner[a:b]) * v[n]
        w = phi_f * f.area[a:b]
        g[:, ax] += np.bincount(o, weights=w, minlength=mesh.ncells)
        g[:, ax] -= np.bincount(n, weights=w, minlength=mesh.ncells)

    if mesh.nbf:
        if boundary_values is not None:
            phi_b = np.asarray(boundary_values, dtype=float)
        elif extrapolate_boundary:
            phi_b = v[mesh.bf_cell].copy()
            has = mesh.bf_inner >= 0
            slope = (v[mesh.bf_cell[has]] - v[mesh.bf_inner[has]]) / mesh.bf_inner_dist[has]
            phi_b[has] += slope * mesh.bf_dist[has]
        else:
            phi_b = v[mesh.bf_cell]
        w = phi_b * mesh.bf_area * mesh.bf_sign
        for ax in range(3):
            sel = mesh.bf_axis == ax
            g[:, ax] += np.bincount(
                mesh.bf_cell[sel], weights=w[sel], minlength=mesh.ncells
            )

    g /= mesh.volumes[:, None]
    g[~mesh.live] = 0.0
    return g


def vector_gradient(mesh: Mesh, vec, boundary_values=None):
    """Gradient tensor G[c, i, j] = d(vec_i)/dx_j for a (ncells, 3) field."""
    G = np.empty((mesh.ncells, 3, 3))
    for i in range(3):
        bv = None if boundary_values is None else boundary_values[:, i]
        G[:, i, :] = gradient(mesh, vec[:, i], boundary_values=bv)
    return G
