"""Convergence-study harness, rate computation and output emission.

Uniform studies red-refine level by level, warm-starting Newton with the
prolonged previous solution.  For manufactured problems they record energy
and L2 errors against the exact solution; for the device they record the
discrete energy and the mesh-dependent/L2 norms of the difference between
successive-level solutions (computed on the finer mesh via exact
prolongation), which is what the successive-difference orders are fitted
to.  Adaptive studies wrap the adaptive loop.

Outputs: ``convergence.csv`` (full-precision, byte-reproducible),
``meta.json`` (every knob that affects numbers) and a self-contained
matplotlib script plotting the log-log convergence history.
"""

import csv
import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .adapt import AdaptConfig, LevelRecord, adaptive_loop
from .estimator import estimate
from .exceptions import ConfigError
from .fespace import (CONTINUOUS, DG, Field, Space, discrete_norm,
                      energy_error_norm, free_energy, l2_error_norm, l2_norm,
                      prolong)
from .forms import MethodConfig
from .mesh import build_initial_mesh, red_refine
from .problems import ProblemSpec, make_problem
from .solver import NewtonConfig, director_guess, laplace_guess, newton_solve

# red refinements applied to the coarse shape mesh before level 0; the
# L-shape default puts level 0 at 42 dofs and the device default at
# h = sqrt(2)/64, the coarsest rows of the benchmark tables
DEFAULT_INITIAL_REFINE = {"lshape": 1, "slit": 1, "device": 6}
UNIFORM_COLUMNS = ["level", "h", "ndof", "err_energy", "err_l2",
                   "order_energy", "order_l2", "estimator", "energy"]
ADAPTIVE_COLUMNS = ["level", "ndof", "err_energy", "estimator", "order_e",
                    "order_est", "c_eff", "newton_iters"]


@dataclass(frozen=True)
class RunConfig:
    """Fully deterministic description of one study."""

    problem: str
    method: str = "nitsche"
    refine: str = "uniform"
    levels: int = 4
    epsilon: float = 0.4
    sigma: float = 10.0
    lam: float = 1.0
    newton_tol: float = 1e-8
    newton_max_iter: int = 50
    theta: float = 0.3
    state: Optional[str] = None
    initial_refine: Optional[int] = None
    out: Optional[str] = None
    dump_meshes: bool = False

    def __post_init__(self):
        if self.refine not in ("uniform", "adaptive"):
            raise ConfigError(f"unknown refinement mode {self.refine!r}")
        if self.levels < 1:
            raise ConfigError("levels must be at least 1")

    def method_config(self) -> MethodConfig:
        return MethodConfig(method=self.method, epsilon=self.epsilon,
                            sigma=self.sigma, lam=self.lam)

    def newton_config(self) -> NewtonConfig:
        return NewtonConfig(tol=self.newton_tol, max_iter=self.newton_max_iter)

    def pre_refine(self) -> int:
        if self.initial_refine is not None:
            return self.initial_refine
        return DEFAULT_INITIAL_REFINE[self.problem]


@dataclass
class ConvergenceTable:
    mode: str
    records: list

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records], dtype=float)


def initial_mesh_for(cfg: RunConfig):
    problem = make_problem(cfg.problem, cfg.epsilon)
    mesh = build_initial_mesh(problem.shape)
    for _ in range(cfg.pre_refine()):
        mesh = red_refine(mesh)
    return problem, mesh


def _solve_level(problem: ProblemSpec, space: Space, cfg: RunConfig, guess):
    mcfg = cfg.method_config()
    if guess is None:
        if cfg.state is not None:
            guess = director_guess(space, problem.epsilon, cfg.state)
        else:
            guess = laplace_guess(space, mcfg, problem.g, problem.f)
    return newton_solve(space, mcfg, problem.g, problem.f, guess,
                        cfg.newton_config())


def run_uniform_study(cfg: RunConfig) -> ConvergenceTable:
    if cfg.refine != "uniform":
        raise ConfigError("run_uniform_study needs a uniform-mode config")
    problem, mesh = initial_mesh_for(cfg)
    mcfg = cfg.method_config()
    kind = CONTINUOUS if cfg.method == "nitsche" else DG

    records = []
    previous = None
    for level in range(cfg.levels):
        space = Space(mesh, kind)
        guess = prolong(previous, space) if previous is not None else None
        field, report = _solve_level(problem, space, cfg, guess)
        breakdown = estimate(field, mcfg, problem.g, problem.f)
        rec = LevelRecord(
            level=level, ndof=space.ndof, n_triangles=mesh.n_triangles,
            h_max=mesh.max_diameter(), energy=free_energy(field, cfg.epsilon),
            estimator=breakdown.total, newton_iters=report.iterations)
        if problem.has_exact:
            rec.err_energy = energy_error_norm(field, problem.exact_grad,
                                               problem.g, cfg.method, cfg.sigma)
            rec.err_l2 = l2_error_norm(field, problem.exact)
            rec.c_eff = rec.estimator / rec.err_energy
        elif previous is not None:
            coarse_on_fine = prolong(previous, space)
            diff = Field(space, field.coeffs - coarse_on_fine.coeffs)
            rec.err_energy = discrete_norm(diff, cfg.method, cfg.sigma)
            rec.err_l2 = l2_norm(diff)
        records.append(rec)
        if level < cfg.levels - 1:
            mesh = red_refine(mesh)
            previous = field
    _fill_uniform_orders(records)
    return ConvergenceTable("uniform", records)


def _fill_uniform_orders(records):
    for prev, rec in zip(records, records[1:]):
        hratio = np.log(rec.h_max / prev.h_max)
        nratio = np.log(rec.ndof / prev.ndof)
        if np.isfinite(rec.err_energy) and np.isfinite(prev.err_energy):
            rec.order_energy = float(np.log(rec.err_energy / prev.err_energy) / hratio)
            rec.order_e = float(np.log(prev.err_energy / rec.err_energy) / nratio)
        if np.isfinite(rec.err_l2) and np.isfinite(prev.err_l2):
            rec.order_l2 = float(np.log(rec.err_l2 / prev.err_l2) / hratio)
        rec.order_est = float(np.log(prev.estimator / rec.estimator) / nratio)


def run_adaptive_study(cfg: RunConfig) -> ConvergenceTable:
    if cfg.refine != "adaptive":
        raise ConfigError("run_adaptive_study needs an adaptive-mode config")
    problem, mesh = initial_mesh_for(cfg)
    acfg = AdaptConfig(dorfler_theta=cfg.theta, max_levels=cfg.levels)
    dump_dir = None
    if cfg.dump_meshes:
        dump_dir = Path(cfg.out or ".") / "meshes"
    records = adaptive_loop(problem, mesh, cfg.method_config(),
                            cfg.newton_config(), acfg, state=cfg.state,
                            mesh_dump_dir=dump_dir)
    return ConvergenceTable("adaptive", records)


def run_study(cfg: RunConfig) -> ConvergenceTable:
    if cfg.refine == "uniform":
        return run_uniform_study(cfg)
    return run_adaptive_study(cfg)


def ndof_orders(table: ConvergenceTable, column: str = "err_energy"):
    """Orders of the given column against Ndof, recomputed from the table."""
    vals = table.column(column)
    ndof = table.column("ndof")
    out = np.full(len(vals), np.nan)
    for i in range(1, len(vals)):
        out[i] = np.log(vals[i - 1] / vals[i]) / np.log(ndof[i] / ndof[i - 1])
    return out


# -- emission -------------------------------------------------------------------


def _format(value):
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if np.isnan(value):
            return ""
        return repr(value)
    return str(value)


def _row_values(rec: LevelRecord, mode: str):
    if mode == "uniform":
        return [rec.level, rec.h_max, rec.ndof, rec.err_energy, rec.err_l2,
                rec.order_energy, rec.order_l2, rec.estimator, rec.energy]
    return [rec.level, rec.ndof, rec.err_energy, rec.estimator, rec.order_e,
            rec.order_est, rec.c_eff, rec.newton_iters]


def emit_outputs(table: ConvergenceTable, cfg: RunConfig, out_dir=None):
    """Write convergence.csv, meta.json and plot_convergence.py; returns the
    output directory."""
    out = Path(out_dir if out_dir is not None else (cfg.out or "."))
    try:
        out.mkdir(parents=True, exist_ok=True)
        columns = UNIFORM_COLUMNS if table.mode == "uniform" else ADAPTIVE_COLUMNS
        csv_path = out / "convergence.csv"
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(columns)
            for rec in table.records:
                writer.writerow([_format(v) for v in _row_values(rec, table.mode)])

        meta = {name: getattr(cfg, name) for name in
                (f.name for f in fields(RunConfig))}
        meta["initial_refine_effective"] = cfg.pre_refine()
        meta["warm_start"] = ("prolongation" if table.mode == "uniform"
                              else "nvb-prolongation")
        meta["newton_stopping"] = "discrete norm of increment"
        meta["newton_iterations_per_level"] = [int(r.newton_iters)
                                               for r in table.records]
        meta["version"] = __version__
        with open(out / "meta.json", "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")

        with open(out / "plot_convergence.py", "w", encoding="utf-8") as fh:
            fh.write(_plot_script(table.mode))
    except OSError as exc:
        raise OSError(f"failed writing outputs under {out}: {exc}") from exc
    return out


def load_table(path) -> ConvergenceTable:
    """Reconstruct a ConvergenceTable from an emitted convergence.csv."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    mode = "uniform" if header == UNIFORM_COLUMNS else "adaptive"
    if header != (UNIFORM_COLUMNS if mode == "uniform" else ADAPTIVE_COLUMNS):
        raise ValueError(f"unrecognized CSV header {header}")

    def fval(s):
        return float(s) if s else np.nan

    records = []
    for row in rows:
        d = dict(zip(header, row))
        rec = LevelRecord(level=int(d["level"]), ndof=int(d["ndof"]),
                          n_triangles=0,
                          h_max=fval(d.get("h", "")),
                          energy=fval(d.get("energy", "")),
                          estimator=fval(d["estimator"]),
                          err_energy=fval(d["err_energy"]))
        if mode == "uniform":
            rec.err_l2 = fval(d["err_l2"])
            rec.order_energy = fval(d["order_energy"])
            rec.order_l2 = fval(d["order_l2"])
        else:
            rec.order_e = fval(d["order_e"])
            rec.order_est = fval(d["order_est"])
            rec.c_eff = fval(d["c_eff"])
            rec.newton_iters = int(d["newton_iters"])
        records.append(rec)
    return ConvergenceTable(mode, records)


def _plot_script(mode: str) -> str:
    xcol, xlabel = ("h", "h") if mode == "uniform" else ("ndof", "Ndof")
    l2_lines = ""
    if mode == "uniform":
        l2_lines = ('if col("err_l2"):\n'
                    '    ax.loglog(x[-len(col("err_l2")):], col("err_l2"), '
                    '"s-", label="L2 error")\n')
    invert = "ax.invert_xaxis()\n" if mode == "uniform" else ""
    return f'''"""Log-log convergence plot for the run in this directory."""

import csv
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

rows = list(csv.DictReader(open(Path(__file__).parent / "convergence.csv")))


def col(name):
    return [float(r[name]) for r in rows if r[name]]


x = col("{xcol}")
fig, ax = plt.subplots(figsize=(6, 4.5))
if col("err_energy"):
    ax.loglog(x[-len(col("err_energy")):], col("err_energy"), "o-",
              label="energy-norm error")
{l2_lines}ax.loglog(x[-len(col("estimator")):], col("estimator"), "d--", label="estimator")
ax.set_xlabel("{xlabel}")
ax.set_ylabel("error / estimator")
{invert}ax.grid(True, which="both", alpha=0.3)
ax.legend()
fig.tight_layout()
fig.savefig(Path(__file__).parent / "convergence.png", dpi=150)
print("wrote", Path(__file__).parent / "convergence.png")
'''
