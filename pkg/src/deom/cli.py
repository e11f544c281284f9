"""Command-line interface: ``deom run | validate | check-bath | resume``.

Exit status: 0 success, 2 configuration error, 3 numerical divergence,
4 resource budget exceeded.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time

import numpy as np

from . import __version__
from .bath import fit_report, validate_symmetry
from .config import (build_expansion, build_field_frame, build_frame,
                     build_initial_state, build_model, build_observables,
                     build_spectral_density, max_slots, resolve)
from .config import load_config
from .errors import (ConfigurationError, DivergenceError, QuadratureError,
                     ResourceBudgetError, UnsupportedSpectralDensity)
from .hierarchy import (HierarchyEngine, conjugacy_residual, enumerate_indices,
                        initial_hierarchy, load_checkpoint, propagate, rescale,
                        save_checkpoint)
from .observables import RunContext, Table, evaluate, write_csv
from .oracles import closed_system_oracle, pure_dephasing_oracle

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_BUDGET = 4


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return _jsonable(x.item())
    return x


class Run:
    """Objects built from a resolved configuration."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.model = build_model(cfg)
        self.frame = build_frame(cfg)
        self.field_frame = build_field_frame(cfg)
        self.spec = build_spectral_density(cfg, self.model)
        self.expansion = build_expansion(cfg, self.spec)
        self.observables = build_observables(cfg, self.model, self.expansion)
        self.ctx = RunContext(self.model, self.frame, self.field_frame, self.expansion)

    def catalog(self, L=None):
        h = self.cfg["hierarchy"]
        M = self.expansion.size * self.expansion.K
        if M == 0:
            raise ConfigurationError("bath expansion has no terms")
        return enumerate_indices(M, h["L"] if L is None else L,
                                 max_slots(self.cfg, self.model.dimension))

    def engine(self, catalog):
        h = self.cfg["hierarchy"]
        return HierarchyEngine(self.model, self.frame, self.field_frame,
                               self.expansion, catalog, scaled=h["scaling"],
                               filter_tol=h["filter_tol"])

    def initial_state(self, catalog):
        st = initial_hierarchy(build_initial_state(self.cfg, self.model), catalog)
        if self.cfg["hierarchy"]["scaling"]:
            st = rescale(st, self.expansion, "forward")
        return st

    def fit(self):
        b = self.cfg["bath"]
        try:
            rep = fit_report(self.expansion, self.spec, b["fit_window"], b["fit_samples"])
            return rep.as_dict()
        except QuadratureError as exc:
            return {"error": str(exc)}

    def propagate(self, state, t_final, stride, observe, include_start=True,
                  checkpoint=True, catalog_engine=None):
        h = self.cfg["hierarchy"]
        engine = catalog_engine or self.engine(state.catalog)
        ck_fn = None
        if checkpoint and h["checkpoint_path"] and h["checkpoint_every"]:
            ck_fn = lambda st: save_checkpoint(
                st, h["checkpoint_path"].format(step=st.step), h["dt"], self.cfg)
        traj = propagate(engine, state, t_final, h["dt"], stride=stride,
                         observe=observe, store=False, include_start=include_start,
                         divergence_bound=h["divergence_bound"],
                         checkpoint_every=h["checkpoint_every"], checkpoint_fn=ck_fn)
        if checkpoint and h["checkpoint_path"]:
            save_checkpoint(traj.final, h["checkpoint_path"].format(step=traj.final.step),
                            h["dt"], self.cfg)
        return traj


def _table_from(traj, specs):
    return Table([s.name for s in specs], list(traj.times), list(traj.values))


def _write_outputs(run, traj, csv_path, manifest_path, extra):
    write_csv(_table_from(traj, run.observables), csv_path)
    manifest = {
        "version": __version__,
        "config": run.cfg,
        "catalog_size": traj.final.catalog.size,
        "M": traj.final.catalog.M,
        "L": traj.final.catalog.L,
        "fit_report": run.fit(),
        "final_time": traj.final.t,
        "steps": traj.final.step,
        "snapshots": len(traj.times),
        "output": csv_path,
    }
    manifest.update(extra)
    with open(manifest_path, "w") as fh:
        json.dump(_jsonable(manifest), fh, indent=2, sort_keys=True)
    return manifest


def _apply_overrides(cfg, args):
    if getattr(args, "stride", None) is not None:
        if args.stride < 1:
            raise ConfigurationError("--stride must be >= 1")
        cfg["hierarchy"]["stride"] = args.stride
    if getattr(args, "output", None) is not None:
        cfg["output"]["path"] = args.output
    return cfg


def _manifest_path(cfg):
    return cfg["output"]["manifest"] or cfg["output"]["path"] + ".manifest.json"


def cmd_run(args):
    cfg = _apply_overrides(resolve(load_config(args.config)), args)
    start = time.perf_counter()
    run = Run(cfg)
    cat = run.catalog()
    state = run.initial_state(cat)
    observe = lambda st: [evaluate(s, st, run.ctx) for s in run.observables]
    traj = run.propagate(state, cfg["hierarchy"]["t_final"], cfg["hierarchy"]["stride"], observe)
    _write_outputs(run, traj, cfg["output"]["path"], _manifest_path(cfg),
                   {"wall_time_s": time.perf_counter() - start})
    print(f"wrote {len(traj.times)} rows to {cfg['output']['path']}")
    return EXIT_OK


def cmd_resume(args):
    state, dt, cfg = load_checkpoint(args.checkpoint)
    if cfg is None:
        raise ConfigurationError(f"{args.checkpoint} carries no run configuration")
    cfg = resolve(cfg)
    if dt != cfg["hierarchy"]["dt"]:
        raise ConfigurationError("checkpoint dt differs from its configuration")
    if args.t_final is not None:
        cfg["hierarchy"]["t_final"] = args.t_final
    cfg = _apply_overrides(cfg, args)
    start = time.perf_counter()
    run = Run(cfg)
    if run.expansion.size * run.expansion.K != state.catalog.M:
        raise ConfigurationError("checkpoint catalog does not match its configuration")
    observe = lambda st: [evaluate(s, st, run.ctx) for s in run.observables]
    traj = run.propagate(state, cfg["hierarchy"]["t_final"], cfg["hierarchy"]["stride"],
                         observe, include_start=False)
    _write_outputs(run, traj, cfg["output"]["path"], _manifest_path(cfg),
                   {"wall_time_s": time.perf_counter() - start,
                    "resumed_from": args.checkpoint, "resumed_step": state.step})
    print(f"wrote {len(traj.times)} rows to {cfg['output']['path']}")
    return EXIT_OK


def _symmetry_entry(run):
    b = run.cfg["bath"]
    scale = max(b["gamma"], b["omega0"], b["omega_c"], 1.0 / b["beta"])
    grid = np.linspace(-20.0 * scale, 20.0 * scale, 1001)
    rep = validate_symmetry(run.spec, grid)
    return {"name": "spectral_symmetry", "passed": rep.passed,
            "value": rep.max_residual, "tolerance": 1e-12,
            "detail": [list(v) for v in rep.violations[:10]]}


def _bath_report(run):
    entries = [_symmetry_entry(run)]
    fit = run.fit()
    tol = run.cfg["validate"]["fit_tolerance"]
    if "error" in fit:
        entries.append({"name": "expansion_fit", "passed": False, "value": None,
                        "tolerance": tol, "detail": fit["error"]})
    else:
        entries.append({"name": "expansion_fit", "passed": fit["max_relative_error"] <= tol,
                        "value": fit["max_relative_error"], "tolerance": tol,
                        "detail": fit})
    return entries


def cmd_check_bath(args):
    cfg = resolve(load_config(args.config))
    run = Run(cfg)
    entries = _bath_report(run)
    report = {"checks": entries, "all_passed": all(e["passed"] for e in entries),
              "expansion": json.loads(run.expansion.to_json())}
    print(json.dumps(_jsonable(report), indent=2))
    return EXIT_OK


def _is_dephasing(run):
    s = run.cfg["system"]
    return (s["type"] == "two_level" and s["coupling"] == "sz"
            and run.frame.is_inertial and run.expansion.size == 1)


def cmd_validate(args):
    cfg = resolve(load_config(args.config))
    run = Run(cfg)
    h, v = cfg["hierarchy"], cfg["validate"]
    entries = _bath_report(run)

    def reduced_run(L):
        cat = run.catalog(L)
        st = run.initial_state(cat)
        obs = lambda s: (s.ddos[0].copy(), conjugacy_residual(s, run.expansion))
        return run.propagate(st, h["t_final"], h["stride"], obs, checkpoint=False)

    traj = reduced_run(h["L"])
    rhos = np.array([x[0] for x in traj.values])
    times = np.array(traj.times)
    drift = float(np.max(np.abs(np.trace(rhos, axis1=1, axis2=2) - 1.0)))
    entries.append({"name": "trace_conservation", "passed": drift < 1e-8,
                    "value": drift, "tolerance": 1e-8})
    conj = max(x[1] for x in traj.values)
    entries.append({"name": "conjugacy", "passed": conj < 1e-8, "value": conj,
                    "tolerance": 1e-8})
    rho0 = build_initial_state(cfg, run.model)
    uncoupled = cfg["system"]["charge"] == 0.0 or not np.any(run.expansion.coefficients)
    if uncoupled:
        ref = closed_system_oracle(run.model, run.frame, rho0, times)
        dev = ref.max_deviation(rhos)
        entries.append({"name": "closed_system_oracle", "passed": dev <= 1e-8,
                        "value": dev, "tolerance": 1e-8})
    if _is_dephasing(run):
        # the coupling is e sz / m, so its eigenvalues are +-e/m
        q = cfg["system"]["charge"] / cfg["system"]["mass"]
        ref = pure_dephasing_oracle(cfg["system"]["omega0"], times,
                                    expansion=run.expansion,
                                    rho01=complex(rho0.matrix[0, 1]), q=(q, -q),
                                    hamiltonian=run.model.bare_hamiltonian,
                                    coupling=run.model.momentum["x"],
                                    tol=v["tolerance"])
        dev = float(np.max(np.abs(np.abs(rhos[:, 0, 1]) - np.abs(ref.values))))
        entries.append({"name": "pure_dephasing_oracle", "passed": dev <= v["tolerance"],
                        "value": dev, "tolerance": v["tolerance"]})
    detail = f"L={h['L']} vs L={h['L'] + 2}"
    try:
        hi = reduced_run(h["L"] + 2)
        rhos_hi = np.array([x[0] for x in hi.values])
        shift = float(np.max(np.abs(rhos_hi - rhos)))
    except DivergenceError as exc:
        shift, detail = math.inf, f"{detail}: deeper run diverged ({exc})"
    entries.append({"name": "hierarchy_convergence", "passed": shift < v["convergence_tol"],
                    "value": shift, "tolerance": v["convergence_tol"], "detail": detail})
    report = {"checks": entries, "all_passed": all(e["passed"] for e in entries)}
    print(json.dumps(_jsonable(report), indent=2))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="deom", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"deom {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="propagate a configured hierarchy")
    r.add_argument("config")
    r.add_argument("--stride", type=int)
    r.add_argument("--output", help="CSV path (overrides output.path)")
    r.set_defaults(func=cmd_run)
    v = sub.add_parser("validate", help="compare a configured run against oracles")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)
    c = sub.add_parser("check-bath", help="symmetry check and expansion fit report")
    c.add_argument("config")
    c.set_defaults(func=cmd_check_bath)
    s = sub.add_parser("resume", help="continue a run from a checkpoint")
    s.add_argument("checkpoint")
    s.add_argument("--t-final", type=float, dest="t_final")
    s.add_argument("--stride", type=int)
    s.add_argument("--output")
    s.set_defaults(func=cmd_resume)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ResourceBudgetError as exc:
        print(f"error: {exc} (catalog size {exc.size})", file=sys.stderr)
        return EXIT_BUDGET
    except DivergenceError as exc:
        print(f"error: {exc} [tier={exc.tier} slot={exc.slot} t={exc.t}]", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (ConfigurationError, UnsupportedSpectralDensity) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
