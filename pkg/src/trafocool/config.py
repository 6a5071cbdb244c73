"""Plain-text case configuration.

Format: one ``key = value`` per line, ``#`` starts a comment, blank lines are
ignored.  A value may carry a unit, bracketed or bare::

    transformer.fan_flow = 0.35 [m3/s]
    transformer.inlet_temperature = 40.0 C
    gravity = 0 -9.81 0 m/s2

Units are optional documentation except for temperatures, where ``C`` and
``K`` select the scale (Kelvin when omitted).  Vector values accept commas or
whitespace between components.  Unknown keys, duplicate keys, malformed
values and wrong unit tags are all rejected with the line number, and every
bad line is reported, not just the first.  ``emit_config`` writes a canonical
form (Kelvin, bracketed tags, comma-separated vectors, full float precision)
that parses back to the identical configuration.
"""

from __future__ import annotations

from dataclasses import dataclass

from .cases import TransformerParams, build_transformer_case
from .fields import T_ZERO_C, FluidProps, TurbConstants
from .solver import SolverControls

SCHEMA_VERSION = 1

OUTPUT_FIELDS = ("T", "p", "velocity", "k", "eps", "mu_t")


class ConfigError(ValueError):
    """Carries every problem found in a config, one message per bad line."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


class _LineError(Exception):
    pass


@dataclass(frozen=True)
class _Key:
    name: str
    kind: str            # int | float | bool | str | choice | temp |
    unit: str = ""       # vec2 | vec3 | ivec3 | fields
    choices: tuple = ()


_REGISTRY = [
    _Key("schema_version", "int"),
    _Key("case.name", "str"),
    _Key("case.type", "choice", choices=("transformer",)),
    _Key("initial_temperature", "temp"),
    _Key("gravity", "vec3", "m/s2"),
    _Key("fluid.rho_ref", "float", "kg/m3"),
    _Key("fluid.mu", "float", "Pa.s"),
    _Key("fluid.cp", "float", "J/kg.K"),
    _Key("fluid.lambda", "float", "W/m.K"),
    _Key("fluid.beta", "float", "1/K"),
    _Key("fluid.t_ref", "temp"),
    _Key("turbulence.enabled", "bool"),
    _Key("turbulence.c_mu", "float"),
    _Key("turbulence.c1", "float"),
    _Key("turbulence.c2", "float"),
    _Key("turbulence.pr_k", "float"),
    _Key("turbulence.pr_eps", "float"),
    _Key("turbulence.pr_t", "float"),
    _Key("turbulence.mu_t_cap_ratio", "float"),
    _Key("turbulence.k_floor", "float", "m2/s2"),
    _Key("turbulence.eps_floor", "float", "m2/s3"),
    _Key("turbulence.inlet_intensity", "float"),
    _Key("solver.max_iterations", "int"),
    _Key("solver.convergence", "float"),
    _Key("solver.scheme", "choice", choices=("upwind", "high_resolution")),
    _Key("solver.limiter", "choice", choices=("van_leer", "minmod")),
    _Key("solver.relax_v", "float"),
    _Key("solver.relax_p", "float"),
    _Key("solver.relax_t", "float"),
    _Key("solver.relax_k", "float"),
    _Key("solver.false_time_step", "float", "s"),
    _Key("solver.linear_rtol", "float"),
    _Key("solver.pressure_rtol", "float"),
    _Key("solver.flow", "bool"),
    _Key("solver.energy", "bool"),
    _Key("mesh.cells", "ivec3"),
    _Key("transformer.tank_size", "vec3", "m"),
    _Key("transformer.n_phases", "int"),
    _Key("transformer.first_phase_x", "float", "m"),
    _Key("transformer.phase_pitch", "float", "m"),
    _Key("transformer.winding_span", "vec2", "m"),
    _Key("transformer.ring_z_center", "float", "m"),
    _Key("transformer.core_half_width", "float", "m"),
    _Key("transformer.gap_core_lv", "float", "m"),
    _Key("transformer.lv_thickness", "float", "m"),
    _Key("transformer.gap_lv_hv", "float", "m"),
    _Key("transformer.hv_thickness", "float", "m"),
    _Key("transformer.baffle_span", "vec2", "m"),
    _Key("transformer.beam_y", "vec2", "m"),
    _Key("transformer.beam_z_1", "vec2", "m"),
    _Key("transformer.beam_z_2", "vec2", "m"),
    _Key("transformer.fan_count", "int"),
    _Key("transformer.fan_size", "float", "m"),
    _Key("transformer.fan_center_y", "float", "m"),
    _Key("transformer.fan_flow", "float", "m3/s"),
    _Key("transformer.flow_mode", "choice", choices=("per-fan", "total")),
    _Key("transformer.inlet_y", "vec2", "m"),
    _Key("transformer.inlet_z", "vec2", "m"),
    _Key("transformer.inlet_temperature", "temp"),
    _Key("transformer.half_model", "bool"),
    _Key("sources.winding", "float", "W/m3"),
    _Key("sources.core", "float", "W/m3"),
    _Key("conductivity.winding_axial", "float", "W/m.K"),
    _Key("conductivity.winding_radial", "float", "W/m.K"),
    _Key("conductivity.core_axial", "float", "W/m.K"),
    _Key("conductivity.core_radial", "float", "W/m.K"),
    _Key("solid.rho_cp", "float", "J/m3.K"),
    _Key("output.fields", "fields"),
]

_BY_NAME = {k.name: k for k in _REGISTRY}

_MONITOR_KEY = _Key("monitor.*", "vec3", "m")

_BOOL_WORDS = {"true": True, "yes": True, "on": True,
               "false": False, "no": False, "off": False}


def _lookup(name):
    if name in _BY_NAME:
        return _BY_NAME[name]
    if name.startswith("monitor.") and len(name) > len("monitor."):
        return _MONITOR_KEY
    return None


_BARE_UNIT_KINDS = ("int", "float", "temp", "vec2", "vec3", "ivec3")


def _split_unit(rhs, spec):
    """Split a value string into (text, unit, tagged).

    The unit is either a bracketed tag (``0.35 [m3/s]``) or, for numeric
    values only, a bare trailing word matching the key's unit (``40 C``,
    ``0 -9.81 0 m/s2``).
    """
    if rhs.endswith("]"):
        i = rhs.rfind("[")
        if i < 0:
            return rhs, None, False
        return rhs[:i].strip(), rhs[i + 1:-1].strip(), True
    if spec is not None and spec.kind in _BARE_UNIT_KINDS:
        toks = rhs.split()
        accepted = ("K", "C") if spec.kind == "temp" else (spec.unit,)
        if len(toks) > 1 and toks[-1] in accepted and toks[-1]:
            return " ".join(toks[:-1]), toks[-1], True
    return rhs, None, False


def _fail(source, lineno, msg):
    raise _LineError(f"{source}:{lineno}: {msg}")


def _floats(text, arity, source, lineno, key):
    if "," in text:
        parts = [p.strip() for p in text.split(",")]
    else:
        parts = text.split()
    if len(parts) != arity:
        _fail(source, lineno, f"{key} needs {arity} values, got {len(parts)}")
    out = []
    for p in parts:
        try:
            out.append(float(p))
        except ValueError:
            _fail(source, lineno, f"{key}: {p!r} is not a number")
    return tuple(out)


def _convert(spec, key, text, unit, source, lineno):
    if spec.kind == "temp":
        if unit not in (None, "K", "C"):
            _fail(source, lineno, f"{key} takes [K] or [C], got [{unit}]")
    elif unit is not None and unit != spec.unit:
        expect = f"[{spec.unit}]" if spec.unit else "no unit tag"
        _fail(source, lineno, f"{key} takes {expect}, got [{unit}]")
    if not text:
        _fail(source, lineno, f"{key} has no value")

    if spec.kind == "int":
        try:
            return int(text)
        except ValueError:
            _fail(source, lineno, f"{key}: {text!r} is not an integer")
    if spec.kind == "float":
        try:
            return float(text)
        except ValueError:
            _fail(source, lineno, f"{key}: {text!r} is not a number")
    if spec.kind == "temp":
        try:
            val = float(text)
        except ValueError:
            _fail(source, lineno, f"{key}: {text!r} is not a number")
        return val + T_ZERO_C if unit == "C" else val
    if spec.kind == "bool":
        word = text.lower()
        if word not in _BOOL_WORDS:
            _fail(source, lineno, f"{key}: {text!r} is not a boolean "
                  "(true/false/yes/no/on/off)")
        return _BOOL_WORDS[word]
    if spec.kind == "str":
        return text
    if spec.kind == "choice":
        if text not in spec.choices:
            _fail(source, lineno, f"{key}: {text!r} is not one of "
                  + ", ".join(spec.choices))
        return text
    if spec.kind == "vec2":
        return _floats(text, 2, source, lineno, key)
    if spec.kind == "vec3":
        return _floats(text, 3, source, lineno, key)
    if spec.kind == "ivec3":
        vals = _floats(text, 3, source, lineno, key)
        if any(v != int(v) for v in vals):
            _fail(source, lineno, f"{key} needs integer counts")
        return tuple(int(v) for v in vals)
    if spec.kind == "fields":
        names = tuple(p.strip() for p in text.split(","))
        for nm in names:
            if nm not in OUTPUT_FIELDS:
                _fail(source, lineno, f"{key}: unknown field {nm!r}, pick from "
                      + ", ".join(OUTPUT_FIELDS))
        return names
    raise AssertionError(spec.kind)


def parse_config(text, source="<config>"):
    """Parse configuration text into a flat {key: value} dict (SI units).

    Raises ConfigError carrying one ``source:line: problem`` message for
    every bad line found, not just the first.
    """
    cfg = {}
    errors = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            if "=" not in line:
                _fail(source, lineno, f"expected 'key = value', got {line!r}")
            key, _, rhs = line.partition("=")
            key = key.strip()
            rhs = rhs.strip()
            spec = _lookup(key)
            if spec is None:
                _fail(source, lineno, f"unknown key {key!r}")
            if key in cfg:
                _fail(source, lineno, f"duplicate key {key!r}")
            value, unit, tagged = _split_unit(rhs, spec)
            if tagged and unit == "":
                _fail(source, lineno, f"{key}: empty unit tag")
            cfg[key] = _convert(spec, key, value, unit, source, lineno)
        except _LineError as err:
            errors.append(str(err))
    if cfg.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        errors.append(f"{source}: unsupported schema_version "
                      f"{cfg['schema_version']} (this build reads "
                      f"{SCHEMA_VERSION})")
    if errors:
        raise ConfigError(errors)
    return cfg


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read(), source=str(path))


def _format_value(spec, value):
    if spec.kind == "int":
        return str(int(value))
    if spec.kind in ("float", "temp"):
        return repr(float(value))
    if spec.kind == "bool":
        return "true" if value else "false"
    if spec.kind in ("str", "choice"):
        return str(value)
    if spec.kind in ("vec2", "vec3"):
        return ", ".join(repr(float(v)) for v in value)
    if spec.kind == "ivec3":
        return ", ".join(str(int(v)) for v in value)
    if spec.kind == "fields":
        return ", ".join(value)
    raise AssertionError(spec.kind)


def emit_config(cfg) -> str:
    """Canonical text form; parse_config(emit_config(cfg)) == cfg."""
    unknown = [k for k in cfg if _lookup(k) is None]
    if unknown:
        raise ConfigError("cannot emit unknown keys: " + ", ".join(unknown))
    lines = []
    for spec in _REGISTRY:
        if spec.name in cfg:
            tag = f" [{spec.unit}]" if spec.unit else ""
            if spec.kind == "temp":
                tag = " [K]"
            lines.append(f"{spec.name} = {_format_value(spec, cfg[spec.name])}{tag}")
    for key in sorted(k for k in cfg if k.startswith("monitor.")):
        lines.append(f"{key} = {_format_value(_MONITOR_KEY, cfg[key])} [m]")
    return "\n".join(lines) + "\n"


_PARAM_KEYS = {
    "transformer.tank_size": "tank_size",
    "transformer.n_phases": "n_phases",
    "transformer.first_phase_x": "first_phase_x",
    "transformer.phase_pitch": "phase_pitch",
    "transformer.winding_span": "winding_span",
    "transformer.ring_z_center": "ring_z_center",
    "transformer.core_half_width": "core_half_width",
    "transformer.gap_core_lv": "gap_core_lv",
    "transformer.lv_thickness": "lv_thickness",
    "transformer.gap_lv_hv": "gap_lv_hv",
    "transformer.hv_thickness": "hv_thickness",
    "transformer.baffle_span": "baffle_span",
    "transformer.beam_y": "beam_y",
    "transformer.fan_count": "fan_count",
    "transformer.fan_size": "fan_size",
    "transformer.fan_center_y": "fan_center_y",
    "transformer.fan_flow": "fan_flow",
    "transformer.flow_mode": "flow_mode",
    "transformer.inlet_y": "inlet_y",
    "transformer.inlet_z": "inlet_z",
    "transformer.inlet_temperature": "inlet_temperature",
    "transformer.half_model": "half_model",
    "turbulence.inlet_intensity": "inlet_intensity",
    "mesh.cells": "cells",
    "sources.winding": "source_winding",
    "sources.core": "source_core",
    "solid.rho_cp": "rho_cp_solid",
}


def to_params(cfg) -> TransformerParams:
    kw = {attr: cfg[key] for key, attr in _PARAM_KEYS.items() if key in cfg}
    base = TransformerParams()
    lam_w = (cfg.get("conductivity.winding_axial", base.lam_winding[0]),
             cfg.get("conductivity.winding_radial", base.lam_winding[1]))
    lam_c = (cfg.get("conductivity.core_axial", base.lam_core[0]),
             cfg.get("conductivity.core_radial", base.lam_core[1]))
    kw["lam_winding"] = lam_w
    kw["lam_core"] = lam_c
    if "transformer.beam_z_1" in cfg or "transformer.beam_z_2" in cfg:
        kw["beam_z"] = (tuple(cfg.get("transformer.beam_z_1", base.beam_z[0])),
                        tuple(cfg.get("transformer.beam_z_2", base.beam_z[1])))
    return TransformerParams(**kw)


def to_props(cfg) -> FluidProps:
    base = FluidProps()
    return FluidProps(
        rho_ref=cfg.get("fluid.rho_ref", base.rho_ref),
        mu0=cfg.get("fluid.mu", base.mu0),
        cp=cfg.get("fluid.cp", base.cp),
        lam=cfg.get("fluid.lambda", base.lam),
        beta=cfg.get("fluid.beta", base.beta),
        t_ref=cfg.get("fluid.t_ref", base.t_ref),
        g=tuple(cfg.get("gravity", base.g)),
    )


def to_turb(cfg) -> TurbConstants:
    base = TurbConstants()
    return TurbConstants(
        c_mu=cfg.get("turbulence.c_mu", base.c_mu),
        c1=cfg.get("turbulence.c1", base.c1),
        c2=cfg.get("turbulence.c2", base.c2),
        pr_k=cfg.get("turbulence.pr_k", base.pr_k),
        pr_eps=cfg.get("turbulence.pr_eps", base.pr_eps),
    )


def to_controls(cfg) -> SolverControls:
    base = SolverControls()
    return SolverControls(
        max_iterations=cfg.get("solver.max_iterations", base.max_iterations),
        convergence=cfg.get("solver.convergence", base.convergence),
        relax_v=cfg.get("solver.relax_v", base.relax_v),
        relax_p=cfg.get("solver.relax_p", base.relax_p),
        relax_t=cfg.get("solver.relax_t", base.relax_t),
        relax_k=cfg.get("solver.relax_k", base.relax_k),
        scheme=cfg.get("solver.scheme", base.scheme),
        limiter=cfg.get("solver.limiter", base.limiter),
        turbulence=cfg.get("turbulence.enabled", base.turbulence),
        solve_flow=cfg.get("solver.flow", base.solve_flow),
        solve_energy=cfg.get("solver.energy", base.solve_energy),
        linear_rtol=cfg.get("solver.linear_rtol", base.linear_rtol),
        pressure_rtol=cfg.get("solver.pressure_rtol", base.pressure_rtol),
        k_floor=cfg.get("turbulence.k_floor", base.k_floor),
        eps_floor=cfg.get("turbulence.eps_floor", base.eps_floor),
        mu_t_cap_ratio=cfg.get("turbulence.mu_t_cap_ratio", base.mu_t_cap_ratio),
        pr_t=cfg.get("turbulence.pr_t", base.pr_t),
        false_time_step=cfg.get("solver.false_time_step", base.false_time_step),
    )


def to_case(cfg):
    """Build (case, geometry) from a parsed configuration."""
    kind = cfg.get("case.type", "transformer")
    if kind != "transformer":
        raise ConfigError(f"unsupported case.type {kind!r}")
    params = to_params(cfg)
    case, geom = build_transformer_case(
        params,
        controls=to_controls(cfg),
        props=to_props(cfg),
        turb=to_turb(cfg),
        name=cfg.get("case.name"),
    )
    if "initial_temperature" in cfg:
        case.t0 = cfg["initial_temperature"]
    for key, point in cfg.items():
        if key.startswith("monitor."):
            case.monitor_points[key[len("monitor."):]] = tuple(point)
    return case, geom


def default_config(name="transformer") -> dict:
    """Fully-populated configuration mirroring the built-in defaults."""
    p = TransformerParams()
    f = FluidProps()
    t = TurbConstants()
    # tank-scale defaults: upwind advection and pseudo-transient damping keep
    # the plenum plumes steady enough to meet a 1e-4 target
    s = SolverControls(scheme="upwind", false_time_step=0.5, convergence=1e-4)
    cfg = {
        "schema_version": SCHEMA_VERSION,
        "case.name": name,
        "case.type": "transformer",
        "gravity": tuple(f.g),
        "fluid.rho_ref": f.rho_ref,
        "fluid.mu": f.mu0,
        "fluid.cp": f.cp,
        "fluid.lambda": f.lam,
        "fluid.beta": f.beta,
        "fluid.t_ref": f.t_ref,
        "turbulence.enabled": s.turbulence,
        "turbulence.c_mu": t.c_mu,
        "turbulence.c1": t.c1,
        "turbulence.c2": t.c2,
        "turbulence.pr_k": t.pr_k,
        "turbulence.pr_eps": t.pr_eps,
        "turbulence.pr_t": s.pr_t,
        "turbulence.mu_t_cap_ratio": s.mu_t_cap_ratio,
        "turbulence.k_floor": s.k_floor,
        "turbulence.eps_floor": s.eps_floor,
        "turbulence.inlet_intensity": p.inlet_intensity,
        "solver.max_iterations": s.max_iterations,
        "solver.convergence": s.convergence,
        "solver.scheme": s.scheme,
        "solver.limiter": s.limiter,
        "solver.relax_v": s.relax_v,
        "solver.relax_p": s.relax_p,
        "solver.relax_t": s.relax_t,
        "solver.relax_k": s.relax_k,
        "solver.false_time_step": s.false_time_step,
        "solver.linear_rtol": s.linear_rtol,
        "solver.pressure_rtol": s.pressure_rtol,
        "solver.flow": s.solve_flow,
        "solver.energy": s.solve_energy,
        "mesh.cells": tuple(p.cells),
        "transformer.tank_size": tuple(p.tank_size),
        "transformer.n_phases": p.n_phases,
        "transformer.first_phase_x": p.first_phase_x,
        "transformer.phase_pitch": p.phase_pitch,
        "transformer.winding_span": tuple(p.winding_span),
        "transformer.ring_z_center": p.ring_z_center,
        "transformer.core_half_width": p.core_half_width,
        "transformer.gap_core_lv": p.gap_core_lv,
        "transformer.lv_thickness": p.lv_thickness,
        "transformer.gap_lv_hv": p.gap_lv_hv,
        "transformer.hv_thickness": p.hv_thickness,
        "transformer.baffle_span": tuple(p.baffle_span),
        "transformer.beam_y": tuple(p.beam_y),
        "transformer.beam_z_1": tuple(p.beam_z[0]),
        "transformer.beam_z_2": tuple(p.beam_z[1]),
        "transformer.fan_count": p.fan_count,
        "transformer.fan_size": p.fan_size,
        "transformer.fan_center_y": p.fan_center_y,
        "transformer.fan_flow": p.fan_flow,
        "transformer.flow_mode": p.flow_mode,
        "transformer.inlet_y": tuple(p.inlet_y),
        "transformer.inlet_z": tuple(p.inlet_z),
        "transformer.inlet_temperature": p.inlet_temperature,
        "transformer.half_model": p.half_model,
        "sources.winding": p.source_winding,
        "sources.core": p.source_core,
        "conductivity.winding_axial": p.lam_winding[0],
        "conductivity.winding_radial": p.lam_winding[1],
        "conductivity.core_axial": p.lam_core[0],
        "conductivity.core_radial": p.lam_core[1],
        "solid.rho_cp": p.rho_cp_solid,
        "output.fields": OUTPUT_FIELDS,
    }
    return cfg
