"""End-to-end driver: FE solve, works, kernel closure, element solves, report."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import eet
from .element import ElementSpace, ErrorEstimate, element_estimate
from .fem import exact_error, solve
from .optimization import eet_norm_matrix, erdc_optimize, fe_edge_works, optimize_norm, scatter_works
from .problems import Problem
from .prolongation import Frame, build_system, corrected_residuals, reaction_partition

log = logging.getLogger(__name__)

CRITERIA = ("l2", "eet", "erdc", "classic")
ALIASES = {"eet_norm": "eet"}
SCHEMA_VERSION = 1

GATE_PROLONGATION = 1e-10
GATE_EQUILIBRIUM = 1e-10
GATE_MISMATCH = 1e-8


@dataclass
class RunConfig:
    criterion: str = "eet"
    order: int = 3
    alpha: str = "half"

    def __post_init__(self):
        self.criterion = ALIASES.get(self.criterion, self.criterion)
        if self.criterion not in CRITERIA:
            raise ValueError(f"criterion must be one of {CRITERIA}, got {self.criterion!r}")
        if self.order not in (2, 3):
            raise ValueError(f"order must be 2 or 3, got {self.order}")
        if self.alpha not in ("half", "length"):
            raise ValueError(f"alpha must be 'half' or 'length', got {self.alpha!r}")


@dataclass
class ReportRow:
    problem: str
    h: float
    ndof: int
    n_triangles: int
    holes: int
    criterion: str
    order: int
    alpha: str
    estimate: float
    e_ex: float
    effectivity: float
    t_fe: float
    t_works: float
    t_elements: float
    prolongation_residual: float
    consistency_residual: float
    equilibrium_residual: float
    form_mismatch: float
    elementwise_nonnegative: bool
    bound: bool
    regularized: bool

    @property
    def gates_ok(self) -> bool:
        return (
            self.prolongation_residual <= GATE_PROLONGATION
            and self.consistency_residual <= GATE_PROLONGATION
            and self.equilibrium_residual <= GATE_EQUILIBRIUM
            and self.form_mismatch <= GATE_MISMATCH
            and self.elementwise_nonnegative
            and self.bound
        )


@dataclass
class RunResult:
    row: ReportRow
    estimate: ErrorEstimate
    W: np.ndarray


def run(problem: Problem, config: RunConfig | None = None) -> RunResult:
    """Run one estimator on one problem and collect timings and invariant checks."""
    cfg = config or RunConfig()
    mesh = problem.mesh
    t0 = time.perf_counter()
    sol = solve(mesh, problem.material, problem.load)
    t1 = time.perf_counter()

    frame = Frame.for_mesh(mesh)
    alpha = reaction_partition(mesh, cfg.alpha)
    regularized = False
    if cfg.criterion == "classic":
        res = eet.estimate_classic(sol, frame, alpha, cfg.order)
        W, est = res.W, res.estimate
        t_works, t_elem = res.timings["works"], res.timings["elements"]
        system = build_system(mesh, frame)
        R, _ = corrected_residuals(sol, frame, alpha)
    else:
        R, bw = corrected_residuals(sol, frame, alpha)
        system = build_system(mesh, frame)
        W0 = system.particular_solution(R)
        space = None
        if cfg.criterion == "erdc":
            space = ElementSpace(mesh, frame, problem.material, cfg.order)
            body = space.body_loads(problem.load.body_force)
            opt = erdc_optimize(system, space, W0, bw, body)
        else:
            W_H = fe_edge_works(system, sol).W_H
            M = eet_norm_matrix(system) if cfg.criterion == "eet" else None
            opt = optimize_norm(W0, system.Z, W_H, M)
            body = None
        W, regularized = opt.W, opt.regularized
        t2 = time.perf_counter()
        t_works = t2 - t1
        if space is None:
            space = ElementSpace(mesh, frame, problem.material, cfg.order)
        est = element_estimate(space, sol, scatter_works(system, W, bw), body)
        t_elem = time.perf_counter() - t2

    rep = system.verify(W, R)
    value = est.global_estimate
    if problem.exact_strain is not None:
        e_ex = exact_error(sol, problem.exact_strain).e_ex
        eff = value / e_ex if e_ex > 0 else float("nan")
        bound = value > e_ex or (e_ex == 0 and value <= 1e-10)
    else:
        e_ex, eff = float("nan"), float("nan")
        bound = est.bound_ok
    row = ReportRow(
        problem=problem.name,
        h=float(problem.h),
        ndof=problem.ndof,
        n_triangles=mesh.n_triangles,
        holes=mesh.n_holes,
        criterion=cfg.criterion,
        order=cfg.order,
        alpha=cfg.alpha,
        estimate=value,
        e_ex=float(e_ex),
        effectivity=float(eff),
        t_fe=t1 - t0,
        t_works=t_works,
        t_elements=t_elem,
        prolongation_residual=rep.delta_residual,
        consistency_residual=rep.consistency_residual,
        equilibrium_residual=est.rigid_residual,
        form_mismatch=est.mismatch,
        elementwise_nonnegative=est.bound_ok,
        bound=bool(bound),
        regularized=regularized,
    )
    log.info("%s h=%g %s: estimate %.6g", problem.name, problem.h, cfg.criterion, value)
    return RunResult(row, est, W)


def write_csv(rows: list[ReportRow], path) -> None:
    names = [f.name for f in fields(ReportRow)]
    with open(path, "w", newline="") as fh:
        fh.write(f"# crebound report schema v{SCHEMA_VERSION}\n")
        writer = csv.DictWriter(fh, fieldnames=names)
        writer.writeheader()
        for row in rows:
            writer.writerow(asdict(row))


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(lines))


def loglog_slope(h, values) -> float:
    """Least-squares slope of log(values) against log(h)."""
    return float(np.polyfit(np.log(np.asarray(h, float)), np.log(np.asarray(values, float)), 1)[0])
