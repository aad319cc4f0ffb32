"""Configuration-driven entry point.

One TOML file describes the model, twist, simulation sizes, and task
list; ``run`` executes the tasks in a fixed order (bound, gap, optimize,
simulate, intertwine, verify), writes ``report.json`` plus CSV tables to
the output directory, and exits nonzero when a verification item fails
or a hypothesis gate is violated.  Reports are deterministic for a fixed
config apart from timestamp and wall-clock fields.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import __version__, geometry
from .errors import ConfigError, ModeError, PreconditionError, TwistboundError
from .model import ModelSpec, rho_inf
from .pathsim import simulate_path, transport
from .regions import Box
from .semigroup import estimate_P, intertwining_residual
from .spectral import (discretize, grid_for_model, optimize_twist,
                       refinement_check, spectral_gap)
from .twist import TwistSpec, bound_scan
from . import verify as vf

TASKS = ("bound", "gap", "optimize", "simulate", "intertwine", "verify")

_MANIFOLDS = ("euclidean", "circle", "flat-torus", "sphere2",
              "hyperbolic-half-plane", "interval", "user-chart")

_TWIST_FAMILIES = ("identity", "scalar", "constant-matrix", "diagonal",
                   "shear", "matrix")


@dataclass
class RunConfig:
    manifold: str = "euclidean"
    dimension: int = 1
    potential: str = "x**2/2"
    region_lo: tuple = (-6.0,)
    region_hi: tuple = (6.0,)
    region_npts: tuple = (121,)
    radius: float = 1.0
    bounds: tuple = (0.0, 1.0)
    margin: float = 0.1
    metric: tuple = ()
    twist_family: str = "identity"
    twist_expression: str = ""
    twist_expressions: tuple = ()
    twist_matrix: tuple = ()
    mode: str = "plain"
    optimize_degree: int = 4
    t: float = 0.5
    h: float = 1e-3
    n: int = 10000
    seed: int | None = None
    x0: tuple = (0.0,)
    function: str = "sin(x)"
    phi_times: tuple = (0.25, 0.5, 1.0)
    delta: float = 1e-2
    spectral_npts: tuple = ()
    verify_functions: tuple = ()
    radii: tuple = (0.5, 1.0, 2.0)
    lipschitz_function: str = ""
    tasks: tuple = ("bound", "gap")
    output_dir: str = "out"

    @classmethod
    def from_dict(cls, d):
        kw = {}
        model = d.get("model", {})
        kw["manifold"] = str(model.get("manifold", "euclidean"))
        kw["dimension"] = int(model.get("dimension", 1))
        kw["potential"] = str(model.get("potential", "0"))
        for name, default in (("region_lo", (-6.0,)), ("region_hi", (6.0,)),
                              ("region_npts", (121,))):
            v = model.get(name, default)
            kw[name] = tuple(v)
        kw["radius"] = float(model.get("radius", 1.0))
        kw["bounds"] = tuple(model.get("bounds", (0.0, 1.0)))
        kw["margin"] = float(model.get("margin", 0.1))
        kw["metric"] = tuple(tuple(row) for row in model.get("metric", ()))
        tw = d.get("twist", {})
        kw["twist_family"] = str(tw.get("family", "identity"))
        kw["twist_expression"] = str(tw.get("expression", ""))
        kw["twist_expressions"] = tuple(tw.get("expressions", ()))
        kw["twist_matrix"] = tuple(tuple(str(e) for e in row)
                                   for row in tw.get("matrix", ()))
        kw["mode"] = str(tw.get("mode", "plain"))
        kw["optimize_degree"] = int(tw.get("optimize_degree", 4))
        sim = d.get("simulation", {})
        kw["t"] = float(sim.get("t", 0.5))
        kw["h"] = float(sim.get("h", 1e-3))
        kw["n"] = int(sim.get("n", 10000))
        kw["seed"] = int(sim["seed"]) if "seed" in sim else None
        kw["x0"] = tuple(sim.get("x0", (0.0,)))
        kw["function"] = str(sim.get("function", "sin(x)"))
        kw["phi_times"] = tuple(sim.get("phi_times", (0.25, 0.5, 1.0)))
        kw["delta"] = float(sim.get("delta", 1e-2))
        spec = d.get("spectral", {})
        kw["spectral_npts"] = tuple(spec.get("grid_npts", ()))
        ver = d.get("verify", {})
        kw["verify_functions"] = tuple(ver.get("functions", ()))
        kw["radii"] = tuple(ver.get("radii", (0.5, 1.0, 2.0)))
        kw["lipschitz_function"] = str(ver.get("lipschitz_function", ""))
        kw["tasks"] = tuple(d.get("tasks", ()))
        kw["output_dir"] = str(d.get("output_dir", "out"))
        return cls(**kw)

    def to_dict(self):
        return {
            "model": {
                "manifold": self.manifold, "dimension": self.dimension,
                "potential": self.potential,
                "region_lo": list(self.region_lo),
                "region_hi": list(self.region_hi),
                "region_npts": list(self.region_npts),
                "radius": self.radius, "bounds": list(self.bounds),
                "margin": self.margin,
                "metric": [list(r) for r in self.metric],
            },
            "twist": {
                "family": self.twist_family,
                "expression": self.twist_expression,
                "expressions": list(self.twist_expressions),
                "matrix": [list(r) for r in self.twist_matrix],
                "mode": self.mode, "optimize_degree": self.optimize_degree,
            },
            "simulation": {
                "t": self.t, "h": self.h, "n": self.n,
                **({"seed": self.seed} if self.seed is not None else {}),
                "x0": list(self.x0), "function": self.function,
                "phi_times": list(self.phi_times), "delta": self.delta,
            },
            "spectral": {"grid_npts": list(self.spectral_npts)},
            "verify": {
                "functions": list(self.verify_functions),
                "radii": list(self.radii),
                "lipschitz_function": self.lipschitz_function,
            },
            "tasks": list(self.tasks),
            "output_dir": self.output_dir,
        }

    # -- validation and construction ------------------------------------------

    def validate(self):
        if self.manifold not in _MANIFOLDS:
            raise ConfigError(f"model.manifold: unknown kind {self.manifold!r}")
        if self.twist_family not in _TWIST_FAMILIES:
            raise ConfigError(f"twist.family: unknown family {self.twist_family!r}")
        if self.mode not in ("plain", "tilde"):
            raise ConfigError(f"twist.mode: must be 'plain' or 'tilde'")
        if not self.tasks:
            raise ConfigError("tasks: must not be empty")
        for t in self.tasks:
            if t not in TASKS:
                raise ConfigError(f"tasks: unknown task {t!r}")
        mc_tasks = {"simulate", "intertwine", "verify"} & set(self.tasks)
        if mc_tasks and self.seed is None:
            raise ConfigError(
                f"simulation.seed: required for Monte-Carlo tasks {sorted(mc_tasks)}")
        if not (len(self.region_lo) == len(self.region_hi) == len(self.region_npts)):
            raise ConfigError("model.region_*: lo/hi/npts lengths differ")
        if self.h <= 0 or self.t <= 0 or self.h > self.t:
            raise ConfigError("simulation: need 0 < h <= t")
        self.build_model()  # parses the potential and metric expressions
        self.build_twist()
        return self

    def build_manifold(self):
        k = self.manifold
        if k == "euclidean":
            return geometry.euclidean(self.dimension)
        if k == "circle":
            return geometry.circle(self.radius)
        if k == "flat-torus":
            return geometry.flat_torus(self.dimension)
        if k == "sphere2":
            return geometry.sphere2(self.margin)
        if k == "hyperbolic-half-plane":
            return geometry.hyperbolic_half_plane()
        if k == "interval":
            return geometry.interval(*self.bounds)
        if k == "user-chart":
            if not self.metric:
                raise ConfigError("model.metric: required for user-chart")
            return geometry.user_chart(self.dimension, [list(r) for r in self.metric])
        raise ConfigError(f"model.manifold: unknown kind {k!r}")

    def build_model(self):
        man = self.build_manifold()
        region = Box(self.region_lo, self.region_hi, self.region_npts)
        try:
            return ModelSpec(man, self.potential, region)
        except ConfigError:
            raise
        except TwistboundError as exc:
            raise ConfigError(f"model.potential: {exc}") from exc

    def build_twist(self):
        f = self.twist_family
        if f == "identity":
            return TwistSpec.identity()
        if f == "scalar":
            if not self.twist_expression:
                raise ConfigError("twist.expression: required for scalar family")
            return TwistSpec.scalar(self.twist_expression)
        if f == "shear":
            if not self.twist_expression:
                raise ConfigError("twist.expression: required for shear family")
            return TwistSpec.shear(self.twist_expression)
        if f == "diagonal":
            if not self.twist_expressions:
                raise ConfigError("twist.expressions: required for diagonal family")
            return TwistSpec.diagonal(list(self.twist_expressions))
        if f == "constant-matrix":
            if not self.twist_matrix:
                raise ConfigError("twist.matrix: required for constant-matrix family")
            return TwistSpec.constant([[float(e) for e in row]
                                       for row in self.twist_matrix])
        if f == "matrix":
            if not self.twist_matrix:
                raise ConfigError("twist.matrix: required for matrix family")
            return TwistSpec.matrix([list(r) for r in self.twist_matrix])
        raise ConfigError(f"twist.family: unknown family {f!r}")

    def spectral_grid(self, model):
        npts = self.spectral_npts or None
        return grid_for_model(model, npts)


def _to_jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Box):
        return {"lo": list(obj.lo), "hi": list(obj.hi), "npts": list(obj.npts)}
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if hasattr(obj, "__dataclass_fields__"):
        return _to_jsonable(asdict(obj))
    return obj


def _report_entry(ok, **payload):
    entry = {"ok": bool(ok)}
    entry.update(_to_jsonable(payload))
    return entry


def run(config: RunConfig, quiet=False):
    """Execute the configured tasks; returns (report dict, exit_code)."""
    config.validate()
    model = config.build_model()
    twist = config.build_twist()
    outdir = config.output_dir
    os.makedirs(outdir, exist_ok=True)

    report = {
        "config": config.to_dict(),
        "versions": {
            "twistbound": __version__,
            "numpy": np.__version__,
        },
        "workers_env": os.environ.get("TWISTBOUND_WORKERS", ""),
        "started_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "tasks": {},
        "wall_clock": {},
    }
    import scipy
    import sympy
    report["versions"]["scipy"] = scipy.__version__
    report["versions"]["sympy"] = sympy.__version__

    gate_violation = False
    verify_failed = False
    lambda1 = None
    bound_value = None
    verify_twist = twist

    def log(msg):
        if not quiet:
            print(msg)

    for task in TASKS:
        if task not in config.tasks:
            continue
        t0 = time.perf_counter()
        try:
            if task == "bound":
                rho = rho_inf(model, detail=True)
                rep = bound_scan(model, twist, config.mode)
                report["tasks"]["bound"] = _report_entry(
                    True, mode=rep.mode, rho=rho.value, rho_b=rep.rho_b,
                    rho_tilde_b=rep.rho_tilde_b, defect_norm=rep.defect_norm,
                    asymmetry_residual=rep.asymmetry_residual,
                    minimizer_rho_b=rep.minimizer_rho_b,
                    minimizer_rho_tilde_b=rep.minimizer_rho_tilde_b,
                    caveat=rep.caveat, region=rep.region)
                report["tasks"]["bound"]["family"] = twist.label()
                _write_bounds_csv(os.path.join(outdir, "bounds.csv"),
                                  report["tasks"]["bound"])
                bound_value = rep.value
                log(f"[bound] rho={rho.value:.6g} value={rep.value:.6g} "
                    f"(mode={rep.mode})")
            elif task == "gap":
                grid = config.spectral_grid(model)
                disc = discretize(model, grid)
                res = spectral_gap(disc)
                lambda1 = res.lambda1
                chk = refinement_check(model, grid) if max(grid.npts) <= 2500 \
                    else {"rel_change": None, "under_resolved": False}
                report["tasks"]["gap"] = _report_entry(
                    True, lambda1=res.lambda1, residual_norm=res.residual_norm,
                    lambda0=res.lambda0, grid_npts=list(grid.npts),
                    refinement_rel_change=chk["rel_change"],
                    under_resolved=chk["under_resolved"],
                    gap_ratio=(None if bound_value is None
                               else bound_value / res.lambda1))
                _write_spectrum_csv(os.path.join(outdir, "spectrum.csv"),
                                    grid, res)
                log(f"[gap] lambda1={res.lambda1:.8g}")
            elif task == "optimize":
                fam = TwistSpec.scalar_exp_poly(config.optimize_degree)
                res = optimize_twist(model, fam, config.mode,
                                     gap_grid=config.spectral_grid(model),
                                     lambda1=lambda1)
                lambda1 = res.lambda1
                verify_twist = TwistSpec("scalar", entries=fam.entries,
                                         param_names=fam.param_names,
                                         params=res.params)
                report["tasks"]["optimize"] = _report_entry(
                    True, params=list(res.params), bound=res.bound,
                    lambda1=res.lambda1, identity_bound=res.identity_bound,
                    mode=res.mode, n_evaluations=res.n_evaluations,
                    gap_ratio=res.bound / res.lambda1)
                log(f"[optimize] bound={res.bound:.6g} lambda1={res.lambda1:.6g}")
            elif task == "simulate":
                est = estimate_P(model, config.function, config.x0, config.t,
                                 config.h, config.n, config.seed)
                report["tasks"]["simulate"] = _report_entry(
                    True, value=est.value, stderr=est.stderr,
                    n_paths=est.n_paths, exit_fraction=est.exit_fraction,
                    t=est.t, h=est.h, seed=est.seed, function=config.function)
                _write_paths_csv(os.path.join(outdir, "paths.csv"), model,
                                 config)
                log(f"[simulate] P_t f = {est.value:.6g} +- {est.stderr:.2g}")
            elif task == "intertwine":
                res = intertwining_residual(
                    model, twist, config.function, config.x0, config.t,
                    config.h, config.n, config.seed, delta=config.delta)
                ok = res.passed()
                report["tasks"]["intertwine"] = _report_entry(
                    ok, residual=res.residual, stderr=res.stderr,
                    lhs=res.lhs, rhs=res.rhs, exit_fraction=res.exit_fraction,
                    gate_mode=res.gate.mode, n_paths=res.n_paths,
                    tolerance=res.tolerance())
                if not ok:
                    verify_failed = True
                log(f"[intertwine] max residual = {res.max_abs_residual:.3e} "
                    f"({'pass' if ok else 'FAIL'})")
            elif task == "verify":
                items = _verify_battery(model, verify_twist, config)
                ok = all(r.passed for r in items)
                any_viol = any(r.hypothesis_violation for r in items)
                report["tasks"]["verify"] = _report_entry(
                    ok, items=[_to_jsonable(r) for r in items],
                    n_items=len(items),
                    hypothesis_violations=sum(
                        1 for r in items if r.hypothesis_violation))
                _write_phi_csv(os.path.join(outdir, "phi.csv"), items)
                if not ok:
                    verify_failed = True
                if any_viol:
                    gate_violation = True
                log(f"[verify] {sum(r.passed for r in items)}/{len(items)} "
                    f"checks passed")
        except (ModeError, PreconditionError) as exc:
            gate_violation = True
            report["tasks"][task] = _report_entry(False, error=str(exc),
                                                  error_kind="gate-violation")
            log(f"[{task}] gate violation: {exc}")
        except TwistboundError as exc:
            verify_failed = True
            report["tasks"][task] = _report_entry(False, error=str(exc),
                                                  error_kind=type(exc).__name__)
            log(f"[{task}] error: {exc}")
        report["wall_clock"][task] = round(time.perf_counter() - t0, 3)

    report["ok"] = not (verify_failed or gate_violation)
    report["gate_violation"] = gate_violation
    path = os.path.join(outdir, "report.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")
    return report, (0 if report["ok"] else 1)


def _verify_battery(model, twist, config: RunConfig):
    items = []
    dim = model.manifold.dimension
    funcs = list(config.verify_functions) or list(vf.default_test_functions(dim))
    mode = config.mode

    def guarded(fn, *a, **kw):
        try:
            r = fn(*a, **kw)
            items.extend(r if isinstance(r, list) else [r])
        except (ModeError, PreconditionError) as exc:
            items.append(vf.InequalityReport.violation(
                getattr(fn, "__name__", "check"), str(exc), "gate"))

    try:
        bound_value = bound_scan(model, twist, mode).value
    except TwistboundError:
        bound_value = None
    for f in funcs:
        guarded(vf.check_variance_inequality, model, twist, f, "poincare",
                mode=mode, bound_value=bound_value)
    guarded(vf.check_variance_inequality, model, twist, funcs[0],
            "brascamp-lieb", mode=mode)
    # the asymmetric covariance bound and concentration assume positive
    # curvature; skip them (rather than report violations) when it fails
    if rho_inf(model) > 0:
        if len(funcs) >= 2:
            guarded(vf.check_asymmetric_bl, model, funcs[0], funcs[1])
        lip = config.lipschitz_function or "tanh(x)"
        guarded(vf.check_concentration, model, lip, list(config.radii))
    guarded(vf.check_gronwall, model, config.t, config.h,
            min(config.n, 1000), config.seed, x0=config.x0)
    guarded(vf.check_phi_decay, model, twist, funcs[0],
            list(config.phi_times), n=min(config.n, 2000), h=max(config.h, 5e-3),
            seed=config.seed, mode=mode)
    items.append(vf.check_matrix_lemma(dim=8, n_trials=1000, seed=config.seed))
    return items


def _write_bounds_csv(path, entry):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["family", "mode", "rho", "rho_b", "rho_tilde_b",
                    "defect_norm"])
        w.writerow([entry.get("family", ""), entry["mode"], entry["rho"],
                    entry["rho_b"], entry["rho_tilde_b"],
                    entry["defect_norm"]])


def _write_spectrum_csv(path, grid, res):
    axes = grid.axes()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda1", res.lambda1])
        w.writerow(["lambda0", res.lambda0])
        w.writerow([])
        if grid.dim == 1:
            w.writerow(["x", "eigenfunction"])
            for x, u in zip(axes[0], res.eigvec):
                w.writerow([x, u])
        else:
            w.writerow(["flat_index", "eigenfunction"])
            for i, u in enumerate(res.eigvec):
                w.writerow([i, u])


def _write_phi_csv(path, items):
    rows = [r for r in items if r.name.startswith("phi-decay")]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "phi", "envelope", "tolerance", "passed"])
        for r in rows:
            w.writerow([r.name, r.lhs, r.rhs, r.tolerance, r.passed])


def _write_paths_csv(path, model, config: RunConfig):
    """Dump a few full trajectories with the deformed-transport norm."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        names = list(model.manifold.coord_names)
        w.writerow(["path_index", "t"] + names + ["transport_norm"])
        for idx in range(min(5, config.n)):
            p = simulate_path(model, config.x0, config.t, config.h,
                              config.seed, path_index=idx)
            tr = transport(model, p, "deformed")
            if model.manifold.dimension == 1:
                norms = np.abs(tr.maps[:, 0, 0])
            else:
                norms = np.linalg.svd(tr.maps, compute_uv=False)[:, 0]
            for k in range(len(p.times)):
                w.writerow([idx, p.times[k]] + list(p.points[k]) + [norms[k]])


def list_builtins():
    lines = ["manifolds:"]
    lines += [f"  {m}" for m in _MANIFOLDS]
    lines.append("twist families:")
    lines += [f"  {f}" for f in _TWIST_FAMILIES]
    lines.append("tasks:")
    lines += [f"  {t}" for t in TASKS]
    lines.append("default 1D test functions:")
    lines += [f"  {f}" for f in vf.DEFAULT_TEST_FUNCTIONS_1D]
    lines.append("default 2D test functions:")
    lines += [f"  {f}" for f in vf.DEFAULT_TEST_FUNCTIONS_2D]
    return "\n".join(lines)


def load_config(path) -> RunConfig:
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return RunConfig.from_dict(data)


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="twistbound",
        description="Certified spectral-gap bounds via twisted transports.")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute the tasks in a config file")
    p_run.add_argument("config")
    p_run.add_argument("--quiet", action="store_true")
    p_val = sub.add_parser("validate", help="validate a config file")
    p_val.add_argument("config")
    sub.add_parser("list-builtins", help="list manifolds, families, tasks")
    args = parser.parse_args(argv)

    if args.command == "list-builtins":
        print(list_builtins())
        return 0
    try:
        config = load_config(args.config)
        if args.command == "validate":
            config.validate()
            print("config OK")
            return 0
        _, code = run(config, quiet=args.quiet)
        return code
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
