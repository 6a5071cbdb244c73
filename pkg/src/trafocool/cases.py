"""Case builders: the fan-cooled transformer model and a verification battery.

The transformer enclosure holds three winding stacks (core, LV and HV rings)
with vertical cooling channels between them, a horizontal sealing baffle at
mid height that forces all vertical flow through those channels, ceiling
support beams, floor-level intake louvers and exhaust fans high on one side
wall.  Everything is parameterized so fan-configuration studies run on the
same mesh.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .boundary import BoundarySpec, OutletFlow, Symmetry, VelocityInlet, Wall
from .fields import FluidProps, SolidProps, TurbConstants
from .mesh import BLANKED, FLUID, Mesh, build_mesh
from .numerics import (
    HIGH_RESOLUTION,
    UPWIND,
    SystemBuilder,
    build_discretization,
    high_res_correction,
    solve_linear,
    van_leer,
)
from .solver import Case, SolverControls, run_steady

REGION_CORE = 1
REGION_LV = 2
REGION_HV = 3


class CaseError(ValueError):
    pass


# -- meshing helpers -----------------------------------------------------------

def _axis_nodes(length, target, edges=()):
    """Axis nodes honoring forced internal edges.

    Every edge becomes a node; each segment is subdivided uniformly, with
    extra cells handed to the currently coarsest segment until the total
    reaches ``target`` (or the number of segments, whichever is larger).
    """
    pts = np.concatenate([[0.0, float(length)], np.asarray(edges, dtype=float)])
    pts = np.unique(pts[(pts > -1e-12) & (pts < length + 1e-12)])
    keep = np.concatenate([[True], np.diff(pts) > 1e-9])
    pts = pts[keep]
    pts[0], pts[-1] = 0.0, float(length)
    segs = np.diff(pts)
    counts = np.ones(segs.size, dtype=int)
    total = segs.size
    while total < max(int(target), segs.size):
        i = int(np.argmax(segs / counts))
        counts[i] += 1
        total += 1
    parts = [np.linspace(pts[i], pts[i + 1], counts[i] + 1)[:-1]
             for i in range(segs.size)]
    return np.concatenate(parts + [[float(length)]])


def _mirror_nodes(half_nodes, length):
    """Full-axis nodes as an exact reflection of the half-axis nodes."""
    left = np.asarray(half_nodes, dtype=float)
    right = length - left[-2::-1]
    return np.concatenate([left, right])


def default_wall_specs(mesh: Mesh, overrides: dict | None = None):
    """One spec per patch: adiabatic walls except where overridden."""
    overrides = overrides or {}
    specs = []
    for nm in mesh.patch_names():
        specs.append(BoundarySpec(nm, overrides.get(nm, Wall())))
    return specs


# -- transformer case ----------------------------------------------------------

@dataclass
class TransformerParams:
    tank_size: tuple = (2.4, 2.0, 1.2)
    n_phases: int = 3
    first_phase_x: float = 0.42
    phase_pitch: float = 0.78
    winding_span: tuple = (0.45, 1.35)   # y extent of core and windings
    ring_z_center: float = 0.6
    core_half_width: float = 0.09
    gap_core_lv: float = 0.03
    lv_thickness: float = 0.05
    gap_lv_hv: float = 0.04
    hv_thickness: float = 0.06
    baffle_span: tuple = (0.95, 1.05)    # y extent of the sealing plate
    beam_y: tuple = (1.88, 2.0)
    beam_z: tuple = ((0.35, 0.45), (0.75, 0.85))
    fan_count: int = 2
    fan_size: float = 0.3
    fan_center_y: float = 1.7
    fan_flow: float = 0.35               # m3/s, per fan or total (flow_mode)
    flow_mode: str = "per-fan"           # per-fan | total
    inlet_y: tuple = (0.1, 0.35)
    inlet_z: tuple = (0.2, 1.0)
    inlet_temperature: float = 313.15    # K
    inlet_intensity: float = 0.05
    source_winding: float = 45e3         # W/m3
    source_core: float = 30e3
    lam_winding: tuple = (2.5, 0.8)      # along winding axis (y), transverse
    lam_core: tuple = (20.0, 4.0)
    rho_cp_solid: float = 2.0e6
    half_model: bool = True
    cells: tuple = (64, 96, 32)          # targets for the modeled extent

    def ring_half_widths(self):
        r0 = self.core_half_width
        r1 = r0 + self.gap_core_lv
        r2 = r1 + self.lv_thickness
        r3 = r2 + self.gap_lv_hv
        r4 = r3 + self.hv_thickness
        return r0, r1, r2, r3, r4

    def phase_centers(self):
        return [self.first_phase_x + i * self.phase_pitch
                for i in range(self.n_phases)]

    def fan_centers(self):
        lx = self.tank_size[0]
        return [(2 * i + 1) / (2 * self.fan_count) * lx
                for i in range(self.fan_count)]

    def per_fan_flow(self):
        if self.flow_mode == "per-fan":
            return self.fan_flow
        return self.fan_flow / self.fan_count

    def validate(self):
        errors = []
        lx, ly, lz = self.tank_size
        if min(lx, ly, lz) <= 0.0:
            errors.append("tank dimensions must be positive")
        y0, y1 = self.winding_span
        if not 0.0 < y0 < y1 < ly:
            errors.append("winding span must lie strictly inside the tank height")
        b0, b1 = self.baffle_span
        if not y0 < b0 < b1 < y1:
            errors.append(
                "baffle span must lie strictly inside the winding span so the "
                "cooling channels pierce the plate")
        for nm, val in (("core_half_width", self.core_half_width),
                        ("gap_core_lv", self.gap_core_lv),
                        ("lv_thickness", self.lv_thickness),
                        ("gap_lv_hv", self.gap_lv_hv),
                        ("hv_thickness", self.hv_thickness)):
            if val <= 0.0:
                errors.append(f"{nm} must be positive")
        r4 = self.ring_half_widths()[-1]
        centers = self.phase_centers()
        if self.n_phases < 1:
            errors.append("need at least one phase")
        else:
            if 2.0 * r4 > self.phase_pitch + 1e-12 and self.n_phases > 1:
                errors.append("winding stacks overlap: pitch is smaller than "
                              "the stack width")
            if centers[0] - r4 < -1e-12 or centers[-1] + r4 > lx + 1e-12:
                errors.append("winding stacks extend past the tank in x")
        if not 0.0 < self.ring_z_center - r4 < self.ring_z_center + r4 < lz:
            errors.append("winding stacks extend past the tank in z")
        if self.half_model:
            if self.n_phases % 2 == 0:
                errors.append("half model needs an odd phase count so the "
                              "symmetry plane bisects the middle phase")
            elif abs(centers[self.n_phases // 2] - lx / 2.0) > 1e-9:
                errors.append("half model needs the middle phase centered on "
                              "the symmetry plane")
            if self.fan_count % 2 != 0:
                errors.append("half model needs an even fan count")
        if self.fan_count < 1:
            errors.append("need at least one fan")
        else:
            half = self.fan_size / 2.0
            for cx in self.fan_centers():
                if cx - half < -1e-12 or cx + half > lx + 1e-12:
                    errors.append("fan footprint extends past the wall in x")
                    break
            if lx / self.fan_count < self.fan_size - 1e-12:
                errors.append("fans overlap: fan_size exceeds the fan pitch")
            if not 0.0 <= self.fan_center_y - half:
                errors.append("fan footprint extends below the wall")
            if self.fan_center_y + half > ly + 1e-12:
                errors.append("fan footprint extends past the wall in y")
            if self.fan_center_y - half < b1:
                errors.append("fans must sit above the baffle")
        if not 0.0 <= self.inlet_y[0] < self.inlet_y[1] <= ly:
            errors.append("inlet y span must be ordered and inside the wall")
        if not 0.0 <= self.inlet_z[0] < self.inlet_z[1] <= lz:
            errors.append("inlet z span must be ordered and inside the wall")
        if self.inlet_y[1] > b0:
            errors.append("inlets must sit below the baffle")
        if self.fan_flow <= 0.0:
            errors.append("fan_flow must be positive")
        if self.flow_mode not in ("per-fan", "total"):
            errors.append(f"unknown flow_mode {self.flow_mode!r}")
        if self.inlet_temperature <= 0.0:
            errors.append("inlet temperature must be above absolute zero")
        if len(self.cells) != 3 or min(self.cells) < 1:
            errors.append("cells must be three positive counts")
        if errors:
            raise CaseError("invalid transformer parameters:\n  " +
                            "\n  ".join(errors))


@dataclass
class TransformerGeometry:
    """Mesh-independent geometry facts the metrics need."""

    params: TransformerParams
    x_len: float                       # modeled x extent
    phase_centers: list
    footprint_half: float              # outer HV half width
    fan_patches: list
    inlet_patches: list
    inlet_area: float
    q_modeled: float                   # m3/s through the modeled domain
    connectivity: dict = field(default_factory=dict)


def _region_boxes(p: TransformerParams, x_len: float):
    lx, ly, lz = p.tank_size
    r0, r1, r2, r3, r4 = p.ring_half_widths()
    zc = p.ring_z_center
    y0, y1 = p.winding_span
    raw = [(((0.0, lx), p.baffle_span, (0.0, lz)), BLANKED)]
    rings = ((r4, REGION_HV), (r3, FLUID), (r2, REGION_LV), (r1, FLUID),
             (r0, REGION_CORE))
    for cx in p.phase_centers():
        for r, tag in rings:
            raw.append((((cx - r, cx + r), (y0, y1), (zc - r, zc + r)), tag))
    for bz in p.beam_z:
        raw.append((((0.0, lx), p.beam_y, bz), BLANKED))
    # a half model keeps only the slice up to the symmetry plane; boxes that
    # straddle it get clipped, boxes entirely beyond it vanish
    boxes = []
    for (ex, ey, ez), tag in raw:
        xa, xb = max(ex[0], 0.0), min(ex[1], x_len)
        if xb - xa > 1e-12:
            boxes.append((((xa, xb), ey, ez), tag))
    return boxes


def _build_transformer_mesh(p: TransformerParams):
    lx, ly, lz = p.tank_size
    r_hw = p.ring_half_widths()
    x_edges = [cx + s * r for cx in p.phase_centers() for r in r_hw
               for s in (-1.0, 1.0)]
    y_edges = [*p.winding_span, *p.baffle_span, *p.beam_y]
    z_edges = [p.ring_z_center + s * r for r in r_hw for s in (-1.0, 1.0)]
    z_edges += [z for bz in p.beam_z for z in bz]

    yn = _axis_nodes(ly, p.cells[1], y_edges)
    zn = _axis_nodes(lz, p.cells[2], z_edges)
    if p.half_model:
        x_len = lx / 2.0
        xn = _axis_nodes(x_len, p.cells[0],
                         [e for e in x_edges if e < x_len - 1e-9])
    else:
        x_len = lx
        half = _axis_nodes(lx / 2.0, max(1, p.cells[0] // 2),
                           [e for e in x_edges if e < lx / 2.0 - 1e-9])
        xn = _mirror_nodes(half, lx)
    return build_mesh(xn, yn, zn, _region_boxes(p, x_len)), x_len


def _rect_selector(ax_a, lo_a, hi_a, ax_b, lo_b, hi_b):
    def sel(c):
        return ((c[:, ax_a] >= lo_a) & (c[:, ax_a] <= hi_a)
                & (c[:, ax_b] >= lo_b) & (c[:, ax_b] <= hi_b))
    return sel


def audit_flow_connectivity(mesh: Mesh, inlet_patches, outlet_patches):
    """Connected components of the fluid region; intake and exhaust must share
    one and the baffle must leave no sealed pockets."""
    disc = build_discretization(mesh, "fluid")
    if disc.n == 0:
        raise CaseError("no fluid cells in the model")
    g = coo_matrix(
        (np.ones(disc.f_o.size), (disc.row_of[disc.f_o], disc.row_of[disc.f_n])),
        shape=(disc.n, disc.n),
    )
    ncomp, labels = connected_components(g.tocsr(), directed=False)

    def patch_labels(names):
        rows = np.concatenate([disc.row_of[mesh.bf_cell[mesh.patch(nm).faces]]
                               for nm in names])
        return set(labels[rows].tolist())

    lab_in = patch_labels(inlet_patches)
    lab_out = patch_labels(outlet_patches)
    main = labels[np.argmax(np.bincount(labels))]
    pocket_cells = int(np.count_nonzero(labels != main))
    connected = lab_in == lab_out == {int(main)}
    return {
        "n_components": int(ncomp),
        "pocket_cells": pocket_cells,
        "intake_to_exhaust": bool(connected),
    }


def build_transformer_case(
    params: TransformerParams,
    controls: SolverControls | None = None,
    props: FluidProps | None = None,
    turb: TurbConstants | None = None,
    name: str | None = None,
):
    """Mesh, patches, materials and boundary specs for one fan configuration.

    Returns (case, geometry).  The mesh depends only on the enclosure and
    winding geometry, never on the fan layout, so different fan counts run on
    identical cells.
    """
    params.validate()
    p = params
    props = props or FluidProps()
    turb = turb or TurbConstants()
    if controls is None:
        # mixed-convection plumes in the plenum keep a small physical limit
        # cycle alive; upwind advection plus pseudo-transient damping holds
        # the continuity residual well below the 1e-4 target while the
        # per-cell mass audit stays at the 1e-8 level
        controls = SolverControls(scheme=UPWIND, false_time_step=0.5,
                                  convergence=1e-4)
    mesh, x_len = _build_transformer_mesh(p)

    half = p.fan_size / 2.0
    fan_patches = []
    modeled_centers = []
    for i, cx in enumerate(p.fan_centers()):
        if cx + half > x_len + 1e-12:
            continue
        nm = f"fan_{len(fan_patches) + 1}"
        mesh.carve_patch(
            nm,
            _rect_selector(0, cx - half, cx + half,
                           1, p.fan_center_y - half, p.fan_center_y + half),
            from_patches=["zmin"],
        )
        if mesh.patch(nm).faces.size == 0:
            raise CaseError(f"fan {i + 1} footprint captured no wall faces")
        fan_patches.append(nm)
        modeled_centers.append(cx)
    if not fan_patches:
        raise CaseError("no fans fall inside the modeled half")

    inlet_sides = ["xmin"] if p.half_model else ["xmin", "xmax"]
    inlet_patches = []
    for side in inlet_sides:
        nm = f"inlet_{side}"
        mesh.carve_patch(
            nm,
            _rect_selector(1, p.inlet_y[0], p.inlet_y[1],
                           2, p.inlet_z[0], p.inlet_z[1]),
            from_patches=[side],
        )
        if mesh.patch(nm).faces.size == 0:
            raise CaseError(f"inlet on {side} captured no wall faces")
        inlet_patches.append(nm)

    q_fan = p.per_fan_flow()
    q_modeled = q_fan * len(fan_patches)
    inlet_area = sum(float(np.sum(mesh.bf_area[mesh.patch(nm).faces]))
                     for nm in inlet_patches)
    vin = q_modeled / inlet_area
    k_in = 1.5 * (p.inlet_intensity * vin) ** 2
    a_nom = (p.inlet_y[1] - p.inlet_y[0]) * (p.inlet_z[1] - p.inlet_z[0])
    per_nom = 2.0 * ((p.inlet_y[1] - p.inlet_y[0]) + (p.inlet_z[1] - p.inlet_z[0]))
    d_h = 4.0 * a_nom / per_nom
    eps_in = turb.c_mu ** 0.75 * k_in ** 1.5 / (0.07 * d_h)

    overrides = {}
    for nm in fan_patches:
        overrides[nm] = OutletFlow(q_fan)
    for nm in inlet_patches:
        sign = 1.0 if nm.endswith("xmin") else -1.0
        overrides[nm] = VelocityInlet(
            velocity=(sign * vin, 0.0, 0.0),
            temperature=p.inlet_temperature, k=k_in, eps=eps_in,
        )
    if p.half_model:
        overrides["xmax"] = Symmetry()
    specs = default_wall_specs(mesh, overrides)

    solids = {
        REGION_CORE: SolidProps(
            name="core", lam_axial=p.lam_core[0], lam_radial=p.lam_core[1],
            source=p.source_core, rho_cp=p.rho_cp_solid, axial_axis=1,
        ),
        REGION_LV: SolidProps(
            name="lv_winding", lam_axial=p.lam_winding[0],
            lam_radial=p.lam_winding[1], source=p.source_winding,
            rho_cp=p.rho_cp_solid, axial_axis=1,
        ),
        REGION_HV: SolidProps(
            name="hv_winding", lam_axial=p.lam_winding[0],
            lam_radial=p.lam_winding[1], source=p.source_winding,
            rho_cp=p.rho_cp_solid, axial_axis=1,
        ),
    }

    r1 = p.ring_half_widths()[1]
    r2 = p.ring_half_widths()[2]
    gap_mid = (r2 + p.ring_half_widths()[3]) / 2.0
    monitors = {
        "channel_a": (p.phase_centers()[0] + gap_mid,
                      (p.baffle_span[0] + p.baffle_span[1]) / 2.0,
                      p.ring_z_center),
        "plenum_top": (p.phase_centers()[0],
                       (p.winding_span[1] + p.tank_size[1]) / 2.0,
                       p.ring_z_center),
        "intake": (0.05, np.mean(p.inlet_y), np.mean(p.inlet_z)),
    }

    connectivity = audit_flow_connectivity(mesh, inlet_patches, fan_patches)
    if not connectivity["intake_to_exhaust"]:
        raise CaseError(
            "intake and exhaust are not connected through the fluid region; "
            f"audit: {connectivity}")

    case = Case(
        name=name or f"transformer_{p.fan_count}fan",
        mesh=mesh, props=props, specs=specs, solids=solids,
        controls=controls, turb=turb, t0=p.inlet_temperature,
        monitor_points=monitors,
    )
    geom = TransformerGeometry(
        params=p, x_len=x_len, phase_centers=p.phase_centers(),
        footprint_half=p.ring_half_widths()[-1], fan_patches=fan_patches,
        inlet_patches=inlet_patches, inlet_area=inlet_area,
        q_modeled=q_modeled, connectivity=connectivity,
    )
    return case, geom


# -- transformer metrics -------------------------------------------------------

def _in_footprint(geom: TransformerGeometry, x, z):
    p = geom.params
    hit = np.zeros(np.shape(x), dtype=bool)
    for cx in geom.phase_centers:
        hit |= (np.abs(x - cx) <= geom.footprint_half) \
            & (np.abs(z - p.ring_z_center) <= geom.footprint_half)
    return hit


def mid_height_channel_ratio(result, geom: TransformerGeometry):
    """Fraction of the vertical mass flux at the baffle level that passes
    through the winding channels."""
    mesh = result.case.mesh
    disc = build_discretization(mesh, "fluid")
    y_mid = float(np.mean(geom.params.baffle_span))
    inner = np.arange(1, mesh.ny)
    jn = int(inner[np.argmin(np.abs(mesh.yn[inner] - y_mid))])
    o_j = (disc.f_o // mesh.nz) % mesh.ny
    sel = (disc.f_axis == 1) & (o_j == jn - 1)
    if not sel.any():
        return 0.0, 0.0
    fsel = result.flux[sel]
    co = mesh.centers[disc.f_o[sel]]
    in_ch = _in_footprint(geom, co[:, 0], co[:, 2])
    total = float(np.sum(np.abs(fsel)))
    channel = float(np.sum(np.abs(fsel[in_ch])))
    return (channel / total if total > 0.0 else 0.0), total


def channel_cells(result, geom: TransformerGeometry):
    mesh = result.case.mesh
    y0, y1 = geom.params.winding_span
    c = mesh.centers
    return np.flatnonzero(
        mesh.fluid & _in_footprint(geom, c[:, 0], c[:, 2])
        & (c[:, 1] > y0) & (c[:, 1] < y1)
    )


def transformer_metrics(result, geom: TransformerGeometry) -> dict:
    mesh = result.case.mesh
    p = geom.params
    t = result.state.t.data
    v = result.state.v.data

    ch = channel_cells(result, geom)
    vol = mesh.volumes[ch]
    speed = np.linalg.norm(v[ch], axis=1)
    mean_channel_v = float(np.sum(speed * vol) / np.sum(vol)) if ch.size else 0.0

    ratio, plane_flux = mid_height_channel_ratio(result, geom)

    fan_faces = np.concatenate([mesh.patch(nm).faces for nm in geom.fan_patches])
    f_out = result.fvals.mass_flux[fan_faces]
    t_out = result.fvals.t[fan_faces]
    m_out = float(np.sum(f_out))
    mean_t_out = float(np.sum(f_out * t_out) / m_out) if m_out > 0.0 else 0.0
    delta_t = mean_t_out - p.inlet_temperature

    def region_max(rid):
        cells = mesh.region_cells(rid)
        return float(np.max(t[cells])) if cells.size else 0.0

    peak_winding = max(region_max(REGION_LV), region_max(REGION_HV))
    peak_core = region_max(REGION_CORE)

    return {
        "fan_count": p.fan_count,
        "flow_mode": p.flow_mode,
        "per_fan_flow_m3_s": p.per_fan_flow(),
        "total_fan_flow_m3_s": p.per_fan_flow() * p.fan_count,
        "modeled_flow_m3_s": geom.q_modeled,
        "half_model": p.half_model,
        "inlet_temperature_k": p.inlet_temperature,
        "mean_outlet_temperature_k": mean_t_out,
        "outlet_delta_t_k": delta_t,
        "outlet_mass_flow_kg_s": m_out,
        "peak_winding_temperature_k": peak_winding,
        "peak_core_temperature_k": peak_core,
        "mean_channel_velocity_m_s": mean_channel_v,
        "mid_height_channel_flux_ratio": ratio,
        "mid_height_plane_flux_kg_s": plane_flux,
        "status": result.status,
        "iterations": result.iterations,
        "runtime_s": result.runtime_s,
        "min_k": result.min_k,
        "min_eps": result.min_eps,
        "low_yplus_faces": result.low_yplus,
        "mass_rel_max": result.mass_audit.get("rel_max", 0.0),
        "energy_imbalance_rel": result.energy_audit.get("imbalance_rel", 0.0),
        "q_source_w": result.energy_audit.get("q_source_w", 0.0),
    }


def compare_metrics(ma: dict, mb: dict) -> dict:
    return {
        "delta_mean_outlet_temperature_k":
            mb["mean_outlet_temperature_k"] - ma["mean_outlet_temperature_k"],
        "delta_peak_winding_temperature_k":
            mb["peak_winding_temperature_k"] - ma["peak_winding_temperature_k"],
        "delta_peak_core_temperature_k":
            mb["peak_core_temperature_k"] - ma["peak_core_temperature_k"],
        "delta_mean_channel_velocity_m_s":
            mb["mean_channel_velocity_m_s"] - ma["mean_channel_velocity_m_s"],
        "delta_total_flow_m3_s":
            mb["total_fan_flow_m3_s"] - ma["total_fan_flow_m3_s"],
    }


def _c(t_kelvin):
    return t_kelvin - 273.15


def format_comparison(ma: dict, mb: dict) -> str:
    d = compare_metrics(ma, mb)
    la = f"{ma['fan_count']}-fan ({ma['flow_mode']})"
    lb = f"{mb['fan_count']}-fan ({mb['flow_mode']})"
    lines = [
        f"fan configuration comparison: A = {la}, B = {lb}",
        f"  total fan flow      A {ma['total_fan_flow_m3_s']:.3f} m3/s"
        f"   B {mb['total_fan_flow_m3_s']:.3f} m3/s"
        f"   B-A {d['delta_total_flow_m3_s']:+.3f}",
        f"  mean outlet T       A {_c(ma['mean_outlet_temperature_k']):.2f} C"
        f"   B {_c(mb['mean_outlet_temperature_k']):.2f} C"
        f"   B-A {d['delta_mean_outlet_temperature_k']:+.2f} K",
        f"  outlet temperature rise  A {ma['outlet_delta_t_k']:+.2f} K"
        f"   B {mb['outlet_delta_t_k']:+.2f} K",
        f"  peak winding T      A {_c(ma['peak_winding_temperature_k']):.2f} C"
        f"   B {_c(mb['peak_winding_temperature_k']):.2f} C"
        f"   B-A {d['delta_peak_winding_temperature_k']:+.2f} K",
        f"  peak core T         A {_c(ma['peak_core_temperature_k']):.2f} C"
        f"   B {_c(mb['peak_core_temperature_k']):.2f} C"
        f"   B-A {d['delta_peak_core_temperature_k']:+.2f} K",
        f"  mean channel speed  A {ma['mean_channel_velocity_m_s']:.3f} m/s"
        f"   B {mb['mean_channel_velocity_m_s']:.3f} m/s"
        f"   B-A {d['delta_mean_channel_velocity_m_s']:+.3f}",
        f"  channel flux share  A {ma['mid_height_channel_flux_ratio']:.3f}"
        f"   B {mb['mid_height_channel_flux_ratio']:.3f}",
        f"  solver              A {ma['status']} in {ma['iterations']} iters"
        f"   B {mb['status']} in {mb['iterations']} iters",
    ]
    return "\n".join(lines)


# -- manufactured solutions ----------------------------------------------------

def _unit_cube_mesh(n):
    nodes = np.linspace(0.0, 1.0, n + 1)
    return build_mesh(nodes, nodes, nodes)


def _mms_exact(pts):
    return np.sin(np.pi * pts[:, 0]) * np.sin(np.pi * pts[:, 1])


def _mms_solve(n, gamma, vel, scheme):
    """L2 error of steady advection-diffusion of sin(pi x) sin(pi y) under a
    uniform drift, with the matching analytic source."""
    mesh = _unit_cube_mesh(n)
    disc = build_discretization(mesh, "fluid")
    c = mesh.centers
    sx, sy = np.sin(np.pi * c[:, 0]), np.sin(np.pi * c[:, 1])
    cx, cy = np.cos(np.pi * c[:, 0]), np.cos(np.pi * c[:, 1])
    exact = sx * sy
    source = np.pi * (vel[0] * cx * sy + vel[1] * sx * cy) \
        + 2.0 * np.pi ** 2 * gamma * exact

    vax = np.asarray(vel, dtype=float)
    flux = vax[disc.f_axis] * disc.f_area    # rho = 1
    base = SystemBuilder(disc)
    base.diffusion_interior(np.full(disc.f_o.size, gamma))
    base.advection_interior_upwind(flux)
    b = disc.b_idx
    vn_b = vax[mesh.bf_axis[b]] * mesh.bf_sign[b]
    face_exact = _mms_exact(mesh.bf_centroid[b])
    base.dirichlet_boundary(b, gamma, face_exact)
    base.advection_boundary(b, vn_b * mesh.bf_area[b], face_exact)
    base.source(source[disc.cells])

    bvals = np.zeros(mesh.bf_cell.size)
    bvals[b] = face_exact
    phi = np.zeros(mesh.ncells)
    sweeps = 60 if scheme == HIGH_RESOLUTION else 1
    for _ in range(sweeps):
        sb = base.copy()
        if scheme == HIGH_RESOLUTION:
            grad = disc.grad(phi, boundary_values=bvals)
            sb.deferred_correction(
                flux, high_res_correction(disc, phi, grad, flux, van_leer))
        a, rhs = sb.build()
        lin = solve_linear(a, rhs, x0=phi[disc.cells], symmetric=False,
                           rtol=1e-12, maxiter=6000)
        delta = float(np.max(np.abs(lin.x - phi[disc.cells])))
        phi[disc.cells] = lin.x
        if delta <= 1e-12 * max(1.0, float(np.max(np.abs(lin.x)))):
            break
    err = phi[disc.cells] - exact[disc.cells]
    vol = mesh.volumes[disc.cells]
    return float(np.sqrt(np.sum(err ** 2 * vol) / np.sum(vol)))


def mms_diffusion_error(n):
    """Diffusion-dominated sweep point, high-resolution advection active."""
    return _mms_solve(n, gamma=1.0, vel=(0.4, 0.14, 0.0),
                      scheme=HIGH_RESOLUTION)


def mms_advection_error(n):
    """Advection-dominated sweep point with the upwind scheme."""
    return _mms_solve(n, gamma=1e-3, vel=(1.0, 0.35, 0.0), scheme=UPWIND)


def convergence_orders(errors):
    e = np.asarray(errors, dtype=float)
    return [float(np.log2(e[i] / e[i + 1])) for i in range(e.size - 1)]


# -- verification battery ------------------------------------------------------

def build_couette_case(ny=16, u_lid=1.0, mu=0.1, height=0.02):
    # one cell along the flow: the sheared profile carries net through-flow,
    # so interior cross-stream faces would fight the zero-flow end condition
    xn = np.linspace(0.0, 0.02, 2)
    yn = np.linspace(0.0, height, ny + 1)
    zn = np.linspace(0.0, 0.01, 2)
    mesh = build_mesh(xn, yn, zn)
    props = FluidProps(rho_ref=1.0, mu0=mu, beta=0.0, g=(0.0, 0.0, 0.0))
    specs = default_wall_specs(mesh, {
        "ymax": Wall(velocity=(u_lid, 0.0, 0.0)),
        "xmin": OutletFlow(0.0),
        "xmax": OutletFlow(0.0),
        "zmin": Symmetry(),
        "zmax": Symmetry(),
    })
    controls = SolverControls(
        max_iterations=60, convergence=1e-11, relax_v=1.0, relax_p=1.0,
        scheme=UPWIND, turbulence=False, solve_energy=False,
        linear_rtol=1e-12, pressure_rtol=1e-12,
    )
    return Case(name="couette", mesh=mesh, props=props, specs=specs,
                controls=controls, t0=props.t_ref)


def couette_error(result, u_lid=1.0, height=0.02):
    mesh = result.case.mesh
    u = result.state.v.data[:, 0]
    exact = u_lid * mesh.centers[:, 1] / height
    return float(np.max(np.abs(u - exact))) / u_lid


def build_slab_case(n=64, length=0.1, lam=0.5, q=5e3, t_fixed=300.0):
    xn = np.linspace(0.0, length, n + 1)
    yn = np.linspace(0.0, 0.02, 2)
    zn = np.linspace(0.0, 0.02, 2)
    mesh = build_mesh(xn, yn, zn,
                      region_boxes=[(((0.0, length), (0.0, 0.02), (0.0, 0.02)), 1)])
    specs = default_wall_specs(mesh, {
        "xmin": Wall(thermal="fixed_temperature", temperature=t_fixed),
    })
    solids = {1: SolidProps(name="slab", lam_axial=lam, lam_radial=lam,
                            source=q, axial_axis=0)}
    controls = SolverControls(
        max_iterations=30, convergence=1e-10, relax_t=1.0,
        turbulence=False, solve_flow=False, solve_energy=True,
        linear_rtol=1e-12,
    )
    return Case(name="conducting_slab", mesh=mesh, props=FluidProps(),
                specs=specs, solids=solids, controls=controls, t0=t_fixed)


def slab_peak_error(result, length=0.1, lam=0.5, q=5e3, t_fixed=300.0):
    rise = float(np.max(result.state.t.data)) - t_fixed
    ref = q * length ** 2 / (2.0 * lam)
    return abs(rise - ref) / ref


def build_lid_cavity_case(n=64, u_lid=1.0, reynolds=100.0):
    nodes = np.linspace(0.0, 1.0, n + 1)
    zn = np.linspace(0.0, 1.0 / n, 2)
    mesh = build_mesh(nodes, nodes, zn)
    props = FluidProps(rho_ref=1.0, mu0=u_lid / reynolds, beta=0.0,
                       g=(0.0, 0.0, 0.0))
    specs = default_wall_specs(mesh, {
        "ymax": Wall(velocity=(u_lid, 0.0, 0.0)),
        "zmin": Symmetry(),
        "zmax": Symmetry(),
    })
    controls = SolverControls(
        max_iterations=2500, convergence=1e-6, relax_v=0.7, relax_p=0.3,
        scheme=HIGH_RESOLUTION, turbulence=False, solve_energy=False,
        linear_rtol=1e-4, pressure_rtol=1e-6,
    )
    return Case(name="lid_cavity", mesh=mesh, props=props, specs=specs,
                controls=controls, t0=props.t_ref)


GHIA_RE100_UMIN = -0.21090   # tabulated centerline minimum, 129x129 reference


def lid_cavity_umin(result):
    mesh = result.case.mesh
    u = result.state.v.data[:, 0].reshape(mesh.shape)[:, :, 0]
    mid = mesh.nx // 2
    profile = 0.5 * (u[mid - 1, :] + u[mid, :])
    return float(np.min(profile))


def build_heated_cavity_case(n=64, rayleigh=1e5, prandtl=0.71):
    nodes = np.linspace(0.0, 1.0, n + 1)
    zn = np.linspace(0.0, 1.0 / n, 2)
    mesh = build_mesh(nodes, nodes, zn)
    g = 9.81
    beta = 0.1
    dt = 1.0
    nu = np.sqrt(prandtl * g * beta * dt / rayleigh)
    alpha = nu / prandtl
    t_ref = 300.0
    props = FluidProps(rho_ref=1.0, mu0=nu, cp=1.0, lam=alpha, beta=beta,
                       t_ref=t_ref, g=(0.0, -g, 0.0))
    specs = default_wall_specs(mesh, {
        "xmin": Wall(thermal="fixed_temperature", temperature=t_ref + 0.5),
        "xmax": Wall(thermal="fixed_temperature", temperature=t_ref - 0.5),
        "zmin": Symmetry(),
        "zmax": Symmetry(),
    })
    controls = SolverControls(
        max_iterations=3000, convergence=1e-6, relax_v=0.7, relax_p=0.3,
        relax_t=0.8, scheme=HIGH_RESOLUTION, turbulence=False,
        solve_energy=True, linear_rtol=1e-4, pressure_rtol=1e-6,
    )
    return Case(name="heated_cavity", mesh=mesh, props=props, specs=specs,
                controls=controls, t0=t_ref)


DE_VAHL_DAVIS_NU_RA1E5 = 4.519   # published benchmark mean hot-wall Nusselt


def heated_cavity_nusselt(result):
    mesh = result.case.mesh
    props = result.case.props
    faces = mesh.patch("xmin").faces
    t_hot = props.t_ref + 0.5
    flux = props.lam * mesh.bf_area[faces] \
        * (t_hot - result.state.t.data[mesh.bf_cell[faces]]) / mesh.bf_dist[faces]
    area = float(np.sum(mesh.bf_area[faces]))
    return float(np.sum(flux)) / (props.lam * 1.0 * area / 1.0)


def build_sealed_case(n=8, iterations=50):
    nodes = np.linspace(0.0, 0.5, n + 1)
    mesh = build_mesh(nodes, nodes, nodes)
    props = FluidProps()
    specs = default_wall_specs(mesh)
    controls = SolverControls(
        max_iterations=iterations, convergence=-1.0,
        turbulence=True, solve_energy=True,
    )
    return Case(name="sealed_stagnant", mesh=mesh, props=props, specs=specs,
                controls=controls, t0=props.t_ref)


BATTERY_SIZES = {
    "full": {"mms": (16, 32, 64), "cavity": 64, "heated": 64, "couette": 16,
             "slab": 64, "cavity_tol": 0.10, "heated_tol": 0.05},
    "coarse": {"mms": (8, 16, 32), "cavity": 32, "heated": 32, "couette": 8,
               "slab": 32, "cavity_tol": 0.15, "heated_tol": 0.08},
}


def run_battery(level="full", log=None):
    """Run every verification case; returns rows of name/passed/detail."""
    if level not in BATTERY_SIZES:
        raise CaseError(f"unknown battery level {level!r}")
    sz = BATTERY_SIZES[level]
    rows = []

    def add(name, passed, detail, t0):
        rows.append({
            "name": name, "passed": bool(passed), "detail": detail,
            "runtime_s": time.perf_counter() - t0,
        })
        if log:
            log(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")

    t0 = time.perf_counter()
    errs = [mms_diffusion_error(n) for n in sz["mms"]]
    orders = convergence_orders(errs)
    add("mms_diffusion", min(orders) >= 1.9,
        "orders " + ", ".join(f"{o:.2f}" for o in orders) + " (need >= 1.90)", t0)

    t0 = time.perf_counter()
    errs = [mms_advection_error(n) for n in sz["mms"]]
    orders = convergence_orders(errs)
    add("mms_advection_diffusion", min(orders) >= 0.9,
        "orders " + ", ".join(f"{o:.2f}" for o in orders) + " (need >= 0.90)", t0)

    t0 = time.perf_counter()
    res = run_steady(build_couette_case(ny=sz["couette"]))
    err = couette_error(res)
    add("couette", err <= 1e-8 and res.status == "converged",
        f"max profile error {err:.2e} of lid speed (need <= 1e-08), "
        f"{res.status} in {res.iterations} iters", t0)

    t0 = time.perf_counter()
    res = run_steady(build_slab_case(n=sz["slab"]))
    err = slab_peak_error(res)
    add("conducting_slab", err <= 1e-3,
        f"peak rise error {err:.2e} (need <= 1e-03)", t0)

    t0 = time.perf_counter()
    res = run_steady(build_lid_cavity_case(n=sz["cavity"]))
    umin = lid_cavity_umin(res)
    err = abs(umin - GHIA_RE100_UMIN) / abs(GHIA_RE100_UMIN)
    add("lid_cavity", err <= sz["cavity_tol"] and res.status == "converged",
        f"centerline u_min {umin:.4f} vs {GHIA_RE100_UMIN} "
        f"({err * 100:.1f}%, need <= {sz['cavity_tol'] * 100:.0f}%)", t0)

    t0 = time.perf_counter()
    res = run_steady(build_heated_cavity_case(n=sz["heated"]))
    nu = heated_cavity_nusselt(res)
    err = abs(nu - DE_VAHL_DAVIS_NU_RA1E5) / DE_VAHL_DAVIS_NU_RA1E5
    add("heated_cavity", err <= sz["heated_tol"],
        f"mean hot-wall Nu {nu:.3f} vs {DE_VAHL_DAVIS_NU_RA1E5} "
        f"({err * 100:.1f}%, need <= {sz['heated_tol'] * 100:.0f}%)", t0)

    t0 = time.perf_counter()
    res = run_steady(build_sealed_case())
    vmax = float(np.max(np.abs(res.state.v.data)))
    ok = (vmax < 1e-12 and res.iterations == 50
          and res.min_k >= res.case.controls.k_floor * (1.0 - 1e-12)
          and res.min_eps >= res.case.controls.eps_floor * (1.0 - 1e-12))
    add("sealed_stagnant", ok,
        f"max |V| {vmax:.2e} after {res.iterations} iters (need < 1e-12), "
        f"min k {res.min_k:.2e}, min eps {res.min_eps:.2e}", t0)

    return rows
