"""Strict JSON run configuration and the builders that turn it into objects.

All quantities are dimensionless in natural units (hbar = c = k_B = 1).
"""

from __future__ import annotations

import difflib
import json
import math
from dataclasses import dataclass, replace
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from .bath import (Drude, LorentzianMode, Mode, OhmicExponential,
                   SpectralDensity, matsubara_expansion, pade_expansion)
from .errors import ConfigurationError
from .frames import FrameTrajectory, RotationSpec, TranslationSpec
from .model import FieldFrame, oscillator_model, ring_model, two_level_model
from .observables import parse_observable
from .oracles import gibbs_oracle
from .operators import Operator

__all__ = [
    "SCHEMA",
    "parse_config",
    "load_config",
    "resolve",
    "build_model",
    "build_frame",
    "build_field_frame",
    "build_spectral_density",
    "build_expansion",
    "build_initial_state",
    "build_observables",
    "max_slots",
]


@dataclass(frozen=True)
class Field:
    kind: str  # float, int, str, bool, vec3, window, list, strlist, section
    default: Any = None
    required: bool = False
    choices: tuple = ()
    check: Optional[Callable[[Any], Optional[str]]] = None
    nullable: bool = False
    doc: str = ""


def _positive(x):
    return None if x > 0 else "must be positive"


def _nonneg(x):
    return None if x >= 0 else "must be nonnegative"


def _at_least(n):
    return lambda x: None if x >= n else f"must be >= {n}"


SCHEMA: Dict[str, Dict[str, Field]] = {
    "system": {
        "type": Field("str", required=True, choices=("two_level", "ring", "oscillator"),
                      doc="system family"),
        "omega0": Field("float", 1.0, check=_positive, doc="two-level splitting or oscillator frequency"),
        "coupling": Field("str", "sz", choices=("sx", "sy", "sz"),
                          doc="two-level operator playing the role of p_x"),
        "m_max": Field("int", 3, check=_at_least(1), doc="ring angular momentum cutoff"),
        "moment_of_inertia": Field("float", 1.0, check=_positive),
        "radius": Field("float", 1.0, check=_positive),
        "barrier": Field("float", 0.0, doc="ring potential barrier * cos(theta)"),
        "n_max": Field("int", 20, check=_at_least(2), doc="oscillator quanta cutoff"),
        "dims": Field("int", 1, choices=(1, 2)),
        "mass": Field("float", 1.0, check=_positive),
        "charge": Field("float", 1.0),
        "field_components": Field("strlist", None, nullable=True),
        "initial_state": Field("section"),
    },
    "initial_state": {
        "kind": Field("str", "basis", choices=("basis", "vector", "matrix", "gibbs")),
        "index": Field("int", 0, check=_nonneg),
        "vector": Field("list", None, nullable=True, doc="[[re, im], ...] amplitudes"),
        "matrix": Field("list", None, nullable=True, doc="rows of [re, im] pairs"),
        "beta": Field("float", None, nullable=True, check=_positive),
    },
    "frame": {
        "rotation": Field("section"),
        "translation": Field("section"),
    },
    "rotation": {
        "mode": Field("str", "constant_axis", choices=("constant_axis", "piecewise")),
        "axis": Field("vec3", [0.0, 0.0, 1.0]),
        "omega": Field("float", 0.0),
        "segments": Field("list", [], doc="[[t_start, [ax, ay, az], omega], ...]"),
    },
    "translation": {
        "mode": Field("str", "none", choices=("none", "boost", "constant_accel")),
        "velocity": Field("vec3", [0.0, 0.0, 0.0]),
        "acceleration": Field("vec3", [0.0, 0.0, 0.0]),
    },
    "field_frame": {
        "mode": Field("str", "static", choices=("static", "comoving")),
    },
    "bath": {
        "family": Field("str", required=True,
                        choices=("drude", "ohmic_exponential", "lorentzian_mode", "discrete_modes")),
        "lambda": Field("float", 0.0, check=_nonneg, doc="reorganization strength"),
        "gamma": Field("float", 1.0, check=_positive, doc="cutoff or damping"),
        "omega0": Field("float", 1.0, check=_positive, doc="lorentzian mode frequency"),
        "eta": Field("float", 0.0, check=_nonneg, doc="ohmic strength"),
        "omega_c": Field("float", 1.0, check=_positive, doc="ohmic cutoff"),
        "modes": Field("list", [], doc="[{frequency, weight, polarizations}, ...]"),
        "width_factor": Field("float", 1e-2, check=_positive),
        "components": Field("strlist", None, nullable=True),
        "beta": Field("float", required=True, check=_positive, doc="inverse temperature"),
        "expansion": Field("str", "pade", choices=("pade", "matsubara")),
        "K": Field("int", 4, check=_nonneg),
        "fit_window": Field("window", [0.25, 5.0]),
        "fit_samples": Field("int", 51, check=_at_least(2)),
    },
    "hierarchy": {
        "L": Field("int", 4, check=_nonneg),
        "dt": Field("float", 0.01, check=_positive),
        "t_final": Field("float", 10.0, check=_nonneg),
        "stride": Field("int", 10, check=_at_least(1)),
        "filter_tol": Field("float", None, nullable=True, check=_positive),
        "scaling": Field("bool", False),
        "memory_budget_mb": Field("float", 2048.0, check=_positive),
        "divergence_bound": Field("float", 1e8, check=_positive),
        "checkpoint_every": Field("int", None, nullable=True, check=_at_least(1)),
        "checkpoint_path": Field("str", None, nullable=True,
                                 doc="may contain {step}"),
    },
    "output": {
        "path": Field("str", "deom_output.csv"),
        "manifest": Field("str", None, nullable=True),
        "observables": Field("strlist", ["population_0", "coherence_0_1"]),
        "format": Field("str", "csv", choices=("csv",)),
    },
    "validate": {
        "tolerance": Field("float", 1e-4, check=_positive),
        "convergence_tol": Field("float", 1e-6, check=_positive),
        "fit_tolerance": Field("float", 1e-3, check=_positive),
    },
}

TOP_LEVEL = ("system", "frame", "field_frame", "bath", "hierarchy", "output", "validate")
REQUIRED_SECTIONS = ("system", "bath")


def _suggest(key, options):
    hit = difflib.get_close_matches(key, list(options), n=1, cutoff=0.6)
    return f" (did you mean {hit[0]!r}?)" if hit else ""


def _coerce(path, f, value, errors):
    if value is None:
        if f.nullable:
            return None
        errors.append(f"{path}: must not be null")
        return None
    kind = f.kind
    try:
        if kind == "float":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise TypeError("expected a number")
            value = float(value)
            if not math.isfinite(value):
                raise TypeError("must be finite")
        elif kind == "int":
            if isinstance(value, bool) or not isinstance(value, int):
                raise TypeError("expected an integer")
        elif kind == "str":
            if not isinstance(value, str):
                raise TypeError("expected a string")
        elif kind == "bool":
            if not isinstance(value, bool):
                raise TypeError("expected true or false")
        elif kind == "vec3":
            if (not isinstance(value, list) or len(value) != 3
                    or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value)):
                raise TypeError("expected a list of three numbers")
            value = [float(v) for v in value]
        elif kind == "window":
            if (not isinstance(value, list) or len(value) != 2
                    or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value)):
                raise TypeError("expected [t_start, t_end]")
            value = [float(v) for v in value]
            if not 0 <= value[0] < value[1]:
                raise TypeError("window needs 0 <= t_start < t_end")
        elif kind == "list":
            if not isinstance(value, list):
                raise TypeError("expected a list")
        elif kind == "strlist":
            if not isinstance(value, list) or any(not isinstance(v, str) for v in value):
                raise TypeError("expected a list of strings")
    except TypeError as exc:
        errors.append(f"{path}: {exc}, got {value!r}")
        return None
    if f.choices and value not in f.choices:
        errors.append(f"{path}: {value!r} is not one of {list(f.choices)}"
                      f"{_suggest(str(value), [str(c) for c in f.choices])}")
        return None
    if f.check is not None:
        msg = f.check(value)
        if msg:
            errors.append(f"{path}: {msg}, got {value!r}")
            return None
    return value


def _section(name, raw, path, errors):
    schema = SCHEMA[name]
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        errors.append(f"{path}: expected an object")
        return {}
    for key in raw:
        if key not in schema:
            errors.append(f"{path}.{key}: unknown key{_suggest(key, schema)}")
    out = {}
    for key, f in schema.items():
        sub = f"{path}.{key}"
        if f.kind == "section":
            out[key] = _section(key, raw.get(key), sub, errors)
        elif key in raw:
            out[key] = _coerce(sub, f, raw[key], errors)
        elif f.required:
            errors.append(f"{sub}: required")
        else:
            out[key] = f.default if not isinstance(f.default, list) else list(f.default)
    return out


def _cross_checks(cfg, errors):
    sysc, bath, hier = cfg["system"], cfg["bath"], cfg["hierarchy"]
    if bath.get("family") == "discrete_modes" and not bath.get("modes"):
        errors.append("bath.modes: discrete_modes needs at least one mode")
    for k, m in enumerate(bath.get("modes") or []):
        if not isinstance(m, dict):
            errors.append(f"bath.modes[{k}]: expected an object")
            continue
        for key in m:
            if key not in ("frequency", "weight", "polarizations"):
                errors.append(f"bath.modes[{k}].{key}: unknown key"
                              f"{_suggest(key, ('frequency', 'weight', 'polarizations'))}")
        for key in ("frequency", "weight"):
            if not isinstance(m.get(key), (int, float)) or isinstance(m.get(key), bool):
                errors.append(f"bath.modes[{k}].{key}: required number")
    ck_every, ck_path = hier.get("checkpoint_every"), hier.get("checkpoint_path")
    if ck_every is not None and ck_path is None:
        errors.append("hierarchy.checkpoint_path: required when checkpoint_every is set")
    init = sysc.get("initial_state", {})
    if init.get("kind") == "vector" and init.get("vector") is None:
        errors.append("system.initial_state.vector: required for kind 'vector'")
    if init.get("kind") == "matrix" and init.get("matrix") is None:
        errors.append("system.initial_state.matrix: required for kind 'matrix'")
    if init.get("kind") == "gibbs" and init.get("beta") is None:
        errors.append("system.initial_state.beta: required for kind 'gibbs'")
    for name in cfg["output"].get("observables") or []:
        try:
            parse_observable(name)
        except ValueError as exc:
            errors.append(f"output.observables: {exc}")


def resolve(raw):
    """Validate a configuration dict and fill in defaults.

    Raises :class:`ConfigurationError` listing every problem found; the
    list is also available as ``exc.errors``.
    """
    errors: List[str] = []
    if not isinstance(raw, dict):
        raise _config_error(["config: expected a JSON object"])
    for key in raw:
        if key not in TOP_LEVEL:
            errors.append(f"{key}: unknown section{_suggest(key, TOP_LEVEL)}")
    for key in REQUIRED_SECTIONS:
        if key not in raw:
            errors.append(f"{key}: required section")
    cfg = {name: _section(name, raw.get(name), name, errors) for name in TOP_LEVEL}
    if not errors:
        _cross_checks(cfg, errors)
    if errors:
        raise _config_error(errors)
    return cfg


def _config_error(errors):
    exc = ConfigurationError("invalid configuration:\n  " + "\n  ".join(errors))
    exc.errors = list(errors)
    return exc


def load_config(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise _config_error([f"{path}: cannot read ({exc.strerror})"])
    except json.JSONDecodeError as exc:
        raise _config_error([f"{path}: invalid JSON ({exc})"])


def parse_config(path):
    """Read and validate a JSON config file; return the resolved dict."""
    return resolve(load_config(path))


# -- builders ----------------------------------------------------------------

def build_model(cfg):
    s = cfg["system"]
    if s["type"] == "two_level":
        model = two_level_model(s["omega0"], s["coupling"], s["mass"], s["charge"])
    elif s["type"] == "ring":
        model = ring_model(s["m_max"], s["moment_of_inertia"], s["radius"],
                           s["mass"], s["charge"], s["barrier"])
    else:
        model = oscillator_model(s["n_max"], s["mass"], s["omega0"], s["charge"], s["dims"])
    if s["field_components"] is not None:
        model = replace(model, field_components=tuple(s["field_components"]))
    return model


def build_frame(cfg):
    r, t = cfg["frame"]["rotation"], cfg["frame"]["translation"]
    try:
        if r["mode"] == "constant_axis":
            rot = RotationSpec.constant(r["axis"], r["omega"])
        else:
            rot = RotationSpec.piecewise([(s[0], s[1], s[2]) for s in r["segments"]])
        if t["mode"] == "none":
            tr = TranslationSpec()
        elif t["mode"] == "boost":
            tr = TranslationSpec.boost(t["velocity"])
        else:
            tr = TranslationSpec.constant_accel(t["acceleration"])
    except (ValueError, TypeError, IndexError) as exc:
        raise _config_error([f"frame: {exc}"])
    return FrameTrajectory(rot, tr)


def build_field_frame(cfg):
    return FieldFrame(cfg["field_frame"]["mode"])


def build_spectral_density(cfg, model=None):
    b = cfg["bath"]
    comps = b["components"]
    if comps is None:
        comps = list(model.field_components) if model is not None else ["x"]
    comps = tuple(comps)
    fam = b["family"]
    try:
        if fam == "drude":
            return SpectralDensity.isotropic(Drude(b["lambda"], b["gamma"]), comps)
        if fam == "ohmic_exponential":
            return SpectralDensity.isotropic(OhmicExponential(b["eta"], b["omega_c"]), comps)
        if fam == "lorentzian_mode":
            return SpectralDensity.isotropic(
                LorentzianMode(b["lambda"], b["omega0"], b["gamma"]), comps)
        modes = []
        for m in b["modes"]:
            pols = m.get("polarizations") or [[1.0] * len(comps)]
            modes.append(Mode(float(m["frequency"]), float(m["weight"]),
                              tuple(tuple(float(x) for x in p) for p in pols)))
        return SpectralDensity.discrete_modes(modes, b["width_factor"], comps)
    except ValueError as exc:
        raise _config_error([f"bath: {exc}"])


def build_expansion(cfg, spec):
    b = cfg["bath"]
    fn = pade_expansion if b["expansion"] == "pade" else matsubara_expansion
    return fn(spec, b["beta"], b["K"])


def _complex_list(rows):
    return np.array([complex(a, b) for a, b in rows])


def build_initial_state(cfg, model):
    init = cfg["system"]["initial_state"]
    d = model.dimension
    kind = init["kind"]
    try:
        if kind == "basis":
            if init["index"] >= d:
                raise ValueError(f"index {init['index']} outside dimension {d}")
            m = np.zeros((d, d), dtype=complex)
            m[init["index"], init["index"]] = 1.0
        elif kind == "vector":
            v = _complex_list(init["vector"])
            if v.shape != (d,):
                raise ValueError(f"vector length {v.shape[0]} != dimension {d}")
            v = v / np.linalg.norm(v)
            m = np.outer(v, v.conj())
        elif kind == "matrix":
            m = np.array([_complex_list(row) for row in init["matrix"]])
            if m.shape != (d, d):
                raise ValueError(f"matrix shape {m.shape} != ({d}, {d})")
        else:
            return gibbs_oracle(model.bare_hamiltonian, init["beta"])
    except (ValueError, TypeError) as exc:
        raise _config_error([f"system.initial_state: {exc}"])
    return Operator(model.basis, m)


def build_observables(cfg, model, expansion):
    specs = [parse_observable(n) for n in cfg["output"]["observables"]]
    errors = []
    for s in specs:
        try:
            s.check(model.dimension, model.operators, expansion.components, expansion.K)
        except ValueError as exc:
            errors.append(f"output.observables: {exc}")
    if errors:
        raise _config_error(errors)
    return specs


def max_slots(cfg, dimension):
    """Largest catalog that fits the memory budget."""
    budget = cfg["hierarchy"]["memory_budget_mb"] * 1024 * 1024
    return int(budget // (7 * dimension * dimension * 16))
