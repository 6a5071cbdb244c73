"""Result output: legacy-ASCII VTK volumes, surface CSVs and a JSON summary.

The volume file is a STRUCTURED_GRID with cell data, points listed x-fastest,
values printed with 9 significant digits.  Surface files carry one row per
boundary face of a patch.  ``write_bundle`` lays a whole run out in one
directory.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .mesh import Mesh

SURFACE_HEADER = "x,y,z,T,Vx,Vy,Vz,p,k,eps"

VTK_FIELDS = ("T", "p", "k", "eps", "mu_t", "velocity")


def _cellwise(mesh: Mesh, arr):
    """Flat cell array reordered x-fastest for VTK."""
    return np.asarray(arr).reshape(mesh.shape).transpose(2, 1, 0).ravel()


def _write_floats(fh, values, per_line=1):
    vals = np.asarray(values, dtype=float).reshape(-1, per_line)
    for row in vals:
        fh.write(" ".join(f"{v:.9e}" for v in row) + "\n")


def write_vtk(path, mesh: Mesh, state, fields=VTK_FIELDS, title="trafocool"):
    """Legacy ASCII structured-grid volume file with cell data."""
    field_of = {"T": state.t, "p": state.p, "k": state.k, "eps": state.eps,
                "mu_t": state.mu_t}
    xg, yg, zg = np.meshgrid(mesh.xn, mesh.yn, mesh.zn, indexing="ij")
    pts = np.column_stack([
        xg.transpose(2, 1, 0).ravel(),
        yg.transpose(2, 1, 0).ravel(),
        zg.transpose(2, 1, 0).ravel(),
    ])
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(f"{title}\n")
        fh.write("ASCII\n")
        fh.write("DATASET STRUCTURED_GRID\n")
        fh.write(f"DIMENSIONS {mesh.nx + 1} {mesh.ny + 1} {mesh.nz + 1}\n")
        fh.write(f"POINTS {pts.shape[0]} double\n")
        _write_floats(fh, pts, per_line=3)
        fh.write(f"CELL_DATA {mesh.ncells}\n")
        fh.write("SCALARS region int 1\n")
        fh.write("LOOKUP_TABLE default\n")
        for v in _cellwise(mesh, mesh.tags):
            fh.write(f"{int(v)}\n")
        for nm in fields:
            if nm == "velocity":
                continue
            fh.write(f"SCALARS {nm} double 1\n")
            fh.write("LOOKUP_TABLE default\n")
            _write_floats(fh, _cellwise(mesh, field_of[nm].data))
        if "velocity" in fields:
            vel = np.column_stack(
                [_cellwise(mesh, state.v.data[:, ax]) for ax in range(3)])
            fh.write("VECTORS velocity double\n")
            _write_floats(fh, vel, per_line=3)


def read_vtk(path):
    """Minimal reader for files produced by ``write_vtk``.

    Returns (dims, points, cell_data) where cell_data maps array names to
    flat x-fastest arrays (vectors shaped (n, 3)).
    """
    with open(path, "r") as fh:
        tokens = fh.read().split("\n")
    i = 0

    def line():
        nonlocal i
        i += 1
        return tokens[i - 1]

    assert line().startswith("# vtk")
    line()                                   # title
    assert line().strip() == "ASCII"
    assert line().strip() == "DATASET STRUCTURED_GRID"
    dims = tuple(int(v) for v in line().split()[1:])
    npts = int(line().split()[1])
    pts = np.array([line().split() for _ in range(npts)], dtype=float)
    ncell = int(line().split()[1])
    data = {}
    while i < len(tokens):
        head = line().strip()
        if not head:
            continue
        parts = head.split()
        if parts[0] == "SCALARS":
            nm, kind = parts[1], parts[2]
            line()                           # LOOKUP_TABLE
            vals = [line() for _ in range(ncell)]
            data[nm] = np.array(vals, dtype=float if kind == "double" else int)
        elif parts[0] == "VECTORS":
            nm = parts[1]
            vals = [line().split() for _ in range(ncell)]
            data[nm] = np.array(vals, dtype=float)
        else:
            raise ValueError(f"unexpected record {head!r} in {path}")
    return dims, pts, data


def write_surface_csv(path, mesh: Mesh, patch_name, state, fvals):
    """Per-face values on one boundary patch."""
    faces = mesh.patch(patch_name).faces
    c = mesh.bf_centroid[faces]
    t = fvals.t[faces]
    v = fvals.v[faces]
    p = state.p.data[mesh.bf_cell[faces]]
    k = fvals.k[faces]
    eps = fvals.eps[faces]
    with open(path, "w") as fh:
        fh.write(SURFACE_HEADER + "\n")
        for row in range(faces.size):
            fh.write(",".join(f"{val:.9e}" for val in (
                c[row, 0], c[row, 1], c[row, 2], t[row],
                v[row, 0], v[row, 1], v[row, 2], p[row], k[row], eps[row],
            )) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def run_summary(result, metrics=None) -> dict:
    final = {}
    if len(result.residuals):
        final = {k: float(result.residuals.series(k)[-1])
                 for k in result.residuals.rows[-1]}
    summary = {
        "case": result.case.name,
        "status": result.status,
        "iterations": result.iterations,
        "runtime_s": result.runtime_s,
        "cells": int(result.case.mesh.ncells),
        "final_residuals": final,
        "mass_audit": result.mass_audit,
        "energy_audit": result.energy_audit,
        "min_k": result.min_k,
        "min_eps": result.min_eps,
        "low_yplus_faces": result.low_yplus,
        "message": result.message,
    }
    if metrics is not None:
        summary["metrics"] = metrics
    return _jsonable(summary)


def write_bundle(result, outdir, metrics=None, config_text=None,
                 fields=VTK_FIELDS, surfaces=True):
    """Write the full result layout for one run; returns the summary dict."""
    os.makedirs(outdir, exist_ok=True)
    mesh = result.case.mesh
    write_vtk(os.path.join(outdir, "fields.vtk"), mesh, result.state,
              fields=fields, title=result.case.name)
    result.residuals.to_csv(os.path.join(outdir, "residuals.csv"))
    result.monitors.to_csv(os.path.join(outdir, "monitors.csv"))
    if surfaces:
        surf_dir = os.path.join(outdir, "surfaces")
        os.makedirs(surf_dir, exist_ok=True)
        for nm in mesh.patch_names():
            if mesh.patch(nm).faces.size == 0:
                continue
            write_surface_csv(os.path.join(surf_dir, f"{nm}.csv"),
                              mesh, nm, result.state, result.fvals)
    if config_text is not None:
        with open(os.path.join(outdir, "config.txt"), "w") as fh:
            fh.write(config_text)
    summary = run_summary(result, metrics)
    with open(os.path.join(outdir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary
