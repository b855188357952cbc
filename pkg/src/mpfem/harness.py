"""Experiment configuration, the end-to-end pipeline, sweeps and reports.

Configuration files are flat UTF-8 text, one ``key = value`` per line, with
``#`` starting a comment. Keys not listed in :data:`DEFAULTS` are rejected.
"""
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .assembly import assemble
from .basis import QUADRATIC, BasisFunction, Box, RegularGrid, build_families
from .dp import solve_dp
from .errors import ConfigError
from .io import write_table, write_value_grid
from .optimizer import OptimizerConfig
from .problem import (degenerate_problem, delta0, distance_problem, lq_problem, lq_smoothness,
                      make_oracle, verify_concavity)
from .propagation import initial_coordinates, reconstruct, run, steps_for

DEFAULTS = {
    "problem": "lq",
    "dim": 2,
    "T": 5.0,
    "delta": 0.5,
    "dx": 0.05,
    "c": 0.1,
    "A": 3.0,
    "L": 0.0,
    "basis": "per-theorem",
    "x_half_width": 1.0,
    "u_half_width": 3.0,
    "inner_half_width": 0.5,
    "eval_refine": 2,
    "eval_step": "",
    "multistart": 3,
    "max_iter": 500,
    "gtol": 1e-8,
    "armijo": 1e-4,
    "backtrack": 0.5,
    "prune": "none",
    "variant": "direct",
    "chunk": 50_000,
    "threads": 1,
    "seed": 0,
    "cache": "",
    "write_values": "all",
    "concavity_samples": 0,
    "degenerate_center": "",
    "sweep_deltas": "0.5,0.25,0.125",
    "sweep_dx_factor": 0.2,
    "sweep_dx": "",
    "sweep_metric": "restricted",
    "dp_coarse_step": 0.05,
    "dp_coarse_tau": 0.1,
    "dp_fine_step": 0.025,
    "dp_fine_tau": 0.05,
    "dp_control_step": 0.5,
    "dp_zoom_levels": 3,
    "dp_scheme": "heun",
    "dp_samples": 21,
}

_INT_KEYS = {"dim", "eval_refine", "multistart", "max_iter", "chunk", "threads", "seed",
             "concavity_samples", "dp_zoom_levels", "dp_samples"}
_STR_KEYS = {"problem", "basis", "prune", "variant", "cache", "write_values", "degenerate_center",
             "eval_step",
             "sweep_deltas", "sweep_dx", "sweep_metric", "dp_scheme"}


def _coerce(key, raw):
    if key not in DEFAULTS:
        raise ConfigError(f"unknown config key {key!r}")
    if isinstance(raw, str):
        raw = raw.strip()
    if key in _STR_KEYS:
        return str(raw)
    try:
        return int(raw) if key in _INT_KEYS else float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value {raw!r} for {key}") from None


def parse_config_text(text):
    out = {}
    for number, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {number}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = _coerce(key, value)
    return out


def parse_override(item):
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not key=value")
    key, value = (s.strip() for s in item.split("=", 1))
    return key, _coerce(key, value)


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict

    def __post_init__(self):
        merged = dict(DEFAULTS)
        for k, v in self.values.items():
            merged[k] = _coerce(k, v)
        object.__setattr__(self, "values", merged)
        self.validate()

    @classmethod
    def from_file(cls, path, overrides=()):
        with open(path, encoding="utf-8") as fh:
            values = parse_config_text(fh.read())
        values.update(dict(parse_override(o) for o in overrides))
        return cls(values)

    def __getitem__(self, key):
        return self.values[key]

    def replace(self, **changes):
        return ExperimentConfig({**self.values, **changes})

    def validate(self):
        v = self.values
        if v["problem"] not in ("lq", "distance", "degenerate"):
            raise ConfigError(f"unknown problem {v['problem']!r}")
        if v["basis"] not in ("per-theorem", "both-quadratic"):
            raise ConfigError(f"basis must be per-theorem or both-quadratic, got {v['basis']!r}")
        for k in ("T", "delta", "dx", "c"):
            if not v[k] > 0:
                raise ConfigError(f"{k} must be positive")
        steps_for(v["T"], v["delta"])
        if v["basis"] == "per-theorem" and v["A"] < v["L"]:
            raise ConfigError(f"A={v['A']} must be at least L={v['L']}")
        if v["sweep_metric"] not in ("restricted", "sup"):
            raise ConfigError("sweep_metric must be restricted or sup")
        try:
            ok = self.eval_step > 0
        except ValueError:
            ok = False
        if not ok:
            raise ConfigError(f"eval_step must be a positive number, got {v['eval_step']!r}")

    @property
    def prune(self):
        p = self.values["prune"].lower()
        return None if p in ("", "none", "off") else float(p)

    @property
    def eval_step(self):
        """Evaluation grid step: ``eval_step`` when set, else dx / eval_refine."""
        v = self.values
        return float(v["eval_step"]) if v["eval_step"] else v["dx"] / v["eval_refine"]

    def optimizer(self):
        v = self.values
        return OptimizerConfig(multistart=v["multistart"], max_iter=v["max_iter"], gtol=v["gtol"],
                               armijo=v["armijo"], backtrack=v["backtrack"])

    @property
    def test_kind(self):
        return QUADRATIC if self.values["basis"] == "both-quadratic" else "lipschitz"

    def families(self, X):
        v = self.values
        return build_families(X, v["dx"], v["c"], v["A"], v["L"], test_kind=self.test_kind)

    def problem(self):
        v = self.values
        if v["problem"] == "lq":
            return lq_problem(dim=v["dim"], x_half_width=v["x_half_width"],
                              u_half_width=v["u_half_width"], T=v["T"])
        if v["problem"] == "distance":
            return distance_problem(dim=v["dim"], T=v["T"])
        X = Box.cube(v["dim"], v["x_half_width"])
        primal, _ = self.families(X)
        center = (np.array([float(s) for s in v["degenerate_center"].split(",")])
                  if v["degenerate_center"] else X.center)
        hit = np.flatnonzero(np.all(np.abs(primal.centers - center) <= 1e-12, axis=1))
        if hit.size == 0:
            raise ConfigError(f"degenerate_center {center} is not a primal node")
        element = BasisFunction(QUADRATIC, primal.centers[hit[0]], v["c"])
        return degenerate_problem(X, element, T=v["T"])

    def smoothness(self, problem):
        if problem.name == "lq" and self.test_kind == QUADRATIC:
            return lq_smoothness(self["c"], dim=problem.n)
        return None


@dataclass
class ErrorReport:
    sup_error: float
    restricted_sup_error: float
    per_step: list
    timings: dict
    diagnostics: dict = field(default_factory=dict)
    eval_grid: str = ""


def time_stamp(t):
    return "%.6f" % t


def run_experiment(cfg, out_dir=None, threads=None, log=None):
    """Families, assembly, propagation and oracle errors at every step."""
    say = log or (lambda msg: None)
    timings = {}
    clock = time.perf_counter()

    def phase(name):
        nonlocal clock
        now = time.perf_counter()
        timings[name] = now - clock
        clock = now

    problem = cfg.problem()
    X = problem.X
    primal, test = cfg.families(X)
    oracle = make_oracle(problem)
    smooth = cfg.smoothness(problem)
    phase("families")
    say(f"assembling {len(test)}x{len(primal)} system")
    system = assemble(problem, test, primal, cfg["delta"], cfg.optimizer(), smooth, cfg.prune,
                      cfg["variant"], cfg["cache"] or None, cfg["chunk"],
                      threads if threads is not None else cfg["threads"])
    phase("assembly")
    lam0 = initial_coordinates(primal, problem.terminal, X, problem.terminal_is_zero,
                               cfg.optimizer())
    phase("initial")
    trajectory = run(system, lam0, cfg["T"])
    phase("propagation")

    grid = RegularGrid(X, cfg.eval_step)
    nodes = grid.nodes
    inner = Box.cube(X.dim, cfg["inner_half_width"]).contains(nodes, tol=1e-12)
    per_step = []
    for k, coords in enumerate(trajectory):
        vg = reconstruct(primal, coords, grid)
        err = np.abs(vg.values - oracle(nodes, coords.t))
        per_step.append((k, coords.t, float(err.max()),
                         float(err[inner].max()) if inner.any() else float("nan")))
        if out_dir is not None and (cfg["write_values"] == "all" or k == len(trajectory) - 1):
            write_value_grid(os.path.join(out_dir, f"values_t{time_stamp(coords.t)}.csv"),
                             nodes, coords.t, vg.values)
    phase("errors")

    meta = system.metadata
    diag = {"q": len(test), "p": len(primal), "backend": _backend_name()}
    if "iterations" in meta:
        diag.update(max_iterations=int(meta["iterations"].max()),
                    max_spread=float(np.nanmax(meta["spread"])),
                    not_converged=int((~meta["converged"]).sum()),
                    certified=bool(meta["certified"]), pruned=int(meta["pruned"]))
    if smooth is not None:
        diag["delta0"] = delta0(smooth)
        if cfg["concavity_samples"] > 0:
            rep = verify_concavity(problem, primal[0], test[0], cfg["delta"],
                                   cfg["concavity_samples"], cfg["seed"])
            diag["concavity_passed"] = rep.passed
            if cfg["delta"] > diag["delta0"]:
                say(f"warning: delta {cfg['delta']} exceeds delta0 {diag['delta0']:.4g}")
    report = ErrorReport(per_step[-1][2], per_step[-1][3], per_step, timings, diag,
                         f"regular grid over X, step {grid.step:g}, {len(grid)} nodes")
    if out_dir is not None:
        write_errors(os.path.join(out_dir, "errors.csv"), report)
        write_report(os.path.join(out_dir, "report.txt"), cfg, report)
    return report


def _backend_name():
    from ._backend import NAME
    return NAME


def write_errors(path, report):
    write_table(path, ["step", "t", "sup_error", "restricted_sup_error"],
                [(k, float(t), e, r) for k, t, e, r in report.per_step])


def write_report(path, cfg, report, extra=()):
    lines = ["max-plus finite element run", ""]
    lines += [f"{k} = {cfg[k]}" for k in sorted(cfg.values)]
    lines += ["", f"evaluation grid: {report.eval_grid}",
              f"sup error at T: {report.sup_error:.6g}",
              f"restricted sup error at T (|x|_inf <= {cfg['inner_half_width']}): "
              f"{report.restricted_sup_error:.6g}", "", "timings (s):"]
    lines += [f"  {k}: {v:.3f}" for k, v in report.timings.items()]
    lines += ["", "diagnostics:"] + [f"  {k}: {v}" for k, v in report.diagnostics.items()]
    lines += list(extra)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


# --- sweeps --------------------------------------------------------------------

def _floats(text):
    return [float(s) for s in text.split(",") if s.strip()]


def sweep_schedule(cfg):
    deltas = _floats(cfg["sweep_deltas"])
    if cfg["sweep_dx"]:
        dxs = _floats(cfg["sweep_dx"])
        if len(dxs) != len(deltas):
            raise ConfigError("sweep_dx and sweep_deltas need the same length")
    else:
        dxs = [cfg["sweep_dx_factor"] * d * d for d in deltas]
    return list(zip(deltas, dxs))


@dataclass
class SweepResult:
    rows: list
    slope: float
    metric: str


def fitted_slope(deltas, errors):
    """Least-squares slope of log(error) against log(delta)."""
    return float(np.polyfit(np.log(deltas), np.log(errors), 1)[0])


def convergence_sweep(base, schedule, out_dir=None, threads=None, log=None):
    rows = []
    for delta, dx in schedule:
        cfg = base.replace(delta=delta, dx=dx)
        rep = run_experiment(cfg, None, threads, log)
        rows.append((delta, dx, rep.sup_error, rep.restricted_sup_error))
        if log:
            log(f"delta={delta:g} dx={dx:g} sup={rep.sup_error:.5g} "
                f"restricted={rep.restricted_sup_error:.5g}")
    col = 3 if base["sweep_metric"] == "restricted" else 2
    deltas = [r[0] for r in rows]
    # A slope needs at least two distinct time steps.
    slope = fitted_slope(deltas, [r[col] for r in rows]) if len(set(deltas)) > 1 else float("nan")
    result = SweepResult(rows, slope, base["sweep_metric"])
    if out_dir is not None:
        write_table(os.path.join(out_dir, "sweep.csv"),
                    ["delta", "dx", "sup_error", "restricted_sup_error"], rows)
        with open(os.path.join(out_dir, "report.txt"), "w", encoding="utf-8") as fh:
            fh.write("convergence sweep\n\n")
            for r in rows:
                fh.write(f"delta={r[0]:g} dx={r[1]:g} sup={r[2]:.6g} restricted={r[3]:.6g}\n")
            fh.write(f"\nfitted log-log slope ({result.metric} error): {slope:.4f}\n")
    return result


# --- oracle certification ------------------------------------------------

@dataclass
class OracleCheck:
    t: float
    oracle_vs_fine: float
    coarse_vs_fine: float
    budget: float
    passed: bool


def oracle_check(problem, oracle, t, coarse, fine, control_step, scheme="heun",
                 zoom_levels=3, samples=21):
    """Compare the closed-form value with two dense-DP resolutions on a
    ``samples``-per-axis lattice of X.

    ``coarse`` and ``fine`` are ``(state_step, time_step)``. The check passes
    when the oracle is within twice the coarse-to-fine difference of the fine
    solve, which bounds the fine DP error for a first-order scheme.
    """
    axes = [np.linspace(lo, hi, samples) for lo, hi in zip(problem.X.lower, problem.X.upper)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    vals = []
    for h, tau in (coarse, fine):
        sol = solve_dp(problem, t, h, tau, control_step, scheme=scheme, zoom_levels=zoom_levels)
        vals.append(sol.evaluate(pts, t))
    exact = oracle(pts, t)
    a = float(np.abs(exact - vals[1]).max())
    b = float(np.abs(vals[0] - vals[1]).max())
    budget = 2.0 * b + 1e-9
    return OracleCheck(t, a, b, budget, a <= budget)


def run_oracle_check(cfg, out_dir=None):
    problem = cfg.problem()
    oracle = make_oracle(problem)
    res = oracle_check(problem, oracle, cfg["T"], (cfg["dp_coarse_step"], cfg["dp_coarse_tau"]),
                       (cfg["dp_fine_step"], cfg["dp_fine_tau"]), cfg["dp_control_step"],
                       cfg["dp_scheme"], cfg["dp_zoom_levels"], cfg["dp_samples"])
    if out_dir is not None:
        write_table(os.path.join(out_dir, "oracle_check.csv"),
                    ["t", "oracle_vs_fine", "coarse_vs_fine", "budget", "passed"],
                    [(res.t, res.oracle_vs_fine, res.coarse_vs_fine, res.budget, int(res.passed))])
        with open(os.path.join(out_dir, "report.txt"), "w", encoding="utf-8") as fh:
            fh.write(f"oracle check for {problem.name} at t={res.t:g}\n"
                     f"|oracle - fine DP| = {res.oracle_vs_fine:.6g}\n"
                     f"|coarse DP - fine DP| = {res.coarse_vs_fine:.6g}\n"
                     f"budget = {res.budget:.6g}\n"
                     f"result: {'pass' if res.passed else 'FAIL'}\n")
    return res
