"""Experiment configs, the run loop for every solver family, and run comparison."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter1d

from . import iterative, losses, pinn_nd
from .linalg import (NotPositiveDefiniteError, SparseMatrix, condition_number_spd,
                     eta_max_bound)
from .optimizers import (AdamState, LbfgsState, Schedule, adam_step, gd_step, lbfgs_step,
                         schedule_lr)
from .problems import (DiscreteProblem, StructuredGrid2D, allen_cahn_grid, allen_cahn_initial,
                       allen_cahn_problem, cavity_initial, cavity_problem, newton_outer,
                       newton_reference, poisson_problem)
from .records import (BUDGET_EXHAUSTED, CONVERGED, DIVERGED, ConvergenceRecord,
                      DivergenceMonitor, records_to_csv, relative_l2_error)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

FAMILIES = ("cg", "gmres", "newton_outer", "etm", "odil", "pinn_nd")
EXIT_CODES = {CONVERGED: 0, DIVERGED: 2, BUDGET_EXHAUSTED: 3}


# --- configuration ------------------------------------------------------------

@dataclass
class ProblemConfig:
    name: str = "poisson"  # poisson | allen_cahn | cavity
    n1: int = 50
    n2: int = 50
    Re: float = 100.0
    reference: str = "discrete"  # discrete | exact (poisson only)


@dataclass
class SolverConfig:
    family: str = "odil"
    restart: int = 300  # gmres; 0 = no restart
    n_linear: int = 20  # newton_outer inner cap
    normal: bool = False  # solve A^T A q = A^T b instead
    tol: float = 0.0  # relative residual stop for Krylov / ||f||/sqrt(n) for newton
    dtau: float = 0.0  # etm step; 0 = bisection for the largest stable step
    dtau_probes: int = 20
    dtau_probe_steps: int = 200
    init: str = "default"  # default | zeros | initial_condition | lid


@dataclass
class LossConfig:
    kind: str = "SGR"
    omega: float = 1.0


@dataclass
class OptimizerConfig:
    name: str = "adam"  # gd | adam | lbfgs
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    memory: int = 10
    line_search: bool = False


@dataclass
class ScheduleConfig:
    kind: str = "constant"
    lr0: float = 1e-3
    factor: float = 0.5
    every: int = 1000
    floor: float = 0.0
    eta_factor: float = 0.0  # > 0: lr0 = eta_factor * eta_max of the (initial) Jacobian


@dataclass
class NetworkConfig:
    layers: list = field(default_factory=lambda: [2, 128, 128, 128, 128, 1])
    hard_bc: bool = False
    stacked: bool = False
    lambda_pde: float = 1.0
    lambda_bc: float = 1.0
    lambda_ic: float = 1.0


@dataclass
class RunConfig:
    seed: int = 0
    max_iters: int = 10000
    err_tol: float = 0.0  # stop once rel_error < err_tol
    loss_tol: float = 0.0  # stop once ||f||/sqrt(n) < loss_tol
    log_every: int = 10
    output: str = ""


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    run: RunConfig = field(default_factory=RunConfig)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        """Build a config; unknown sections or keys raise ``ValueError``."""
        data = dict(data)
        kwargs = {}
        for f in dataclasses.fields(cls):
            if f.name not in data:
                continue
            value = data.pop(f.name)
            if f.name == "name":
                kwargs["name"] = str(value)
                continue
            sub = f.default_factory()
            if not isinstance(value, dict):
                raise ValueError(f"section [{f.name}] must be a table")
            known = {g.name for g in dataclasses.fields(sub)}
            unknown = set(value) - known
            if unknown:
                raise ValueError(f"unknown keys in [{f.name}]: {sorted(unknown)}")
            kwargs[f.name] = dataclasses.replace(sub, **value)
        if data:
            raise ValueError(f"unknown top-level keys: {sorted(data)}")
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def validate(self) -> None:
        if self.solver.family not in FAMILIES:
            raise ValueError(f"unknown solver family {self.solver.family!r}")
        if self.problem.name not in ("poisson", "allen_cahn", "cavity"):
            raise ValueError(f"unknown problem {self.problem.name!r}")
        if self.optimizer.name not in ("gd", "adam", "lbfgs"):
            raise ValueError(f"unknown optimizer {self.optimizer.name!r}")
        losses.LossKind(self.loss.kind, self.loss.omega)
        Schedule(self.schedule.kind, self.schedule.lr0, self.schedule.factor,
                 self.schedule.every, self.schedule.floor)
        if self.run.log_every < 1 or self.run.max_iters < 0:
            raise ValueError("log_every must be >= 1 and max_iters >= 0")


def load_config(path) -> ExperimentConfig:
    """Read a TOML (or JSON) experiment file; the name defaults to the file stem."""
    path = Path(path)
    if path.suffix == ".json":
        data = json.loads(path.read_text())
    else:
        data = tomllib.loads(path.read_text())
    data.setdefault("name", path.stem)
    return ExperimentConfig.from_dict(data)


# --- problem construction -------------------------------------------------------

def build_problem(cfg: ProblemConfig) -> DiscreteProblem:
    if cfg.name == "poisson":
        return poisson_problem(StructuredGrid2D(cfg.n1, cfg.n2))
    if cfg.name == "allen_cahn":
        return allen_cahn_problem(allen_cahn_grid(cfg.n1, cfg.n2))
    problem = cavity_problem(StructuredGrid2D(cfg.n1, cfg.n2), cfg.Re)
    ref = newton_reference(problem)
    return dataclasses.replace(problem, q_ref=ref)


def reference_solution(problem: DiscreteProblem, cfg: ProblemConfig) -> np.ndarray:
    """Vector errors are measured against.

    Poisson: the discrete solution (``reference="discrete"``) or the
    manufactured one. Allen-Cahn: the level-by-level march. Cavity: Newton.
    """
    if problem.name == "poisson" and cfg.reference == "discrete":
        system = problem.meta["system"]
        q, trace = iterative.cg(system.A, system.b, tol=1e-14, max_iter=20 * problem.dim)
        return q
    return problem.q_ref


def initial_state(problem: DiscreteProblem, init: str) -> np.ndarray:
    if init in ("default", "zeros") and problem.name != "cavity":
        if init == "zeros" or problem.name != "allen_cahn":
            return np.zeros(problem.dim)
    if problem.name == "allen_cahn" and init in ("default", "initial_condition"):
        x = problem.grid.axis1()[:-1]
        return np.tile(allen_cahn_initial(x), problem.grid.n2)
    if problem.name == "cavity" and init in ("default", "lid"):
        return cavity_initial(problem)
    if init == "zeros":
        return np.zeros(problem.dim)
    raise ValueError(f"init {init!r} does not apply to {problem.name}")


# --- result container -------------------------------------------------------------

@dataclass
class ExperimentResult:
    config: ExperimentConfig
    status: str
    records: list
    q: np.ndarray
    loss_history: np.ndarray
    error_history: np.ndarray
    iterations: int
    info: dict = field(default_factory=dict)
    iter_axis: np.ndarray | None = None  # iteration count per history entry (Newton: inner)

    def axis(self) -> np.ndarray:
        if self.iter_axis is not None:
            return self.iter_axis
        return np.arange(len(self.loss_history))

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.status]

    def iterations_to(self, threshold: float, metric: str = "rel_error"):
        """First iteration whose metric is below ``threshold`` (None if never)."""
        hist = self.error_history if metric == "rel_error" else self.loss_history
        idx = np.flatnonzero(hist < threshold)
        return int(self.axis()[idx[0]]) if len(idx) else None

    def write(self, directory) -> Path:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        stem = out / self.config.name
        records_to_csv(self.records, stem.with_suffix(".csv"))
        np.savetxt(stem.with_suffix(".solution.csv"), self.q, delimiter=",")
        summary = {"name": self.config.name, "status": self.status,
                   "iterations": self.iterations, "final_loss": _f(self.loss_history),
                   "final_rel_error": _f(self.error_history), "info": self.info,
                   "config": self.config.to_dict()}
        stem.with_suffix(".json").write_text(json.dumps(summary, indent=2, default=float))
        return stem


def _f(hist):
    return float(hist[-1]) if len(hist) else math.nan


class _Logger:
    def __init__(self, log_every):
        self.log_every = log_every
        self.t0 = time.perf_counter()
        self.records = []
        self.losses = []
        self.errors = []
        self.axis = None

    def __call__(self, it, loss, err, lr, force=False):
        self.losses.append(loss)
        self.errors.append(err)
        if it % self.log_every == 0 or force:
            self._emit(it, loss, err, lr)

    def _emit(self, it, loss, err, lr):
        if self.records and self.records[-1].iter == it:
            return
        self.records.append(ConvergenceRecord(
            it, loss, err, lr, 1e3 * (time.perf_counter() - self.t0)))

    def close(self, lr):
        it = len(self.losses) - 1
        if it >= 0:
            self._emit(it, self.losses[-1], self.errors[-1], lr)


# --- solver families -----------------------------------------------------------------

def _krylov(cfg, problem, q_ref, q0):
    system = problem.meta.get("system")
    if system is None:
        raise ValueError("cg/gmres need a linear problem")
    A, b = system.A, system.b
    if cfg.solver.normal:
        A, b = iterative.normal_equations(A, b)
    err_tol = cfg.run.err_tol or None
    kw = dict(q0=q0, tol=cfg.solver.tol, max_iter=cfg.run.max_iters, q_ref=q_ref, err_tol=err_tol)
    if cfg.solver.family == "cg":
        q, trace = iterative.cg(A, b, **kw)
    else:
        q, trace = iterative.gmres(A, b, restart=cfg.solver.restart, **kw)
    scale = math.sqrt(problem.dim)
    lg = _Logger(cfg.run.log_every)
    for k, rn, e in zip(trace.steps, trace.residual_norm, trace.rel_error):
        lg(k, rn / scale, e, math.nan)
    lg.close(math.nan)
    # breakdowns (stagnation, indefinite curvature) end the run without blow-up
    status = trace.status if trace.status in EXIT_CODES else BUDGET_EXHAUSTED
    return q, lg, status, {"solver_status": trace.status, "message": trace.message}


def max_stable_dtau(problem: DiscreteProblem, q0, probes: int = 20, steps: int = 200,
                    seed: int = 0, power_steps: int = 100) -> float:
    """Largest stable pseudo-time step found by bisection.

    A probe marches ``steps`` explicit steps from ``q0`` and from ``q0``
    plus a small seeded random perturbation, and counts as stable if the
    gap between the two trajectories did not grow over the second half
    (or has decayed into rounding).
    The gap follows the linearized error dynamics, so the smooth part of
    f(q0) cannot mask a slowly growing stiff mode. The perturbation is
    first tilted toward the stiffest modes by ``power_steps`` Jacobian
    products. ``probes`` bisection steps follow the initial bracketing.
    """
    rng = np.random.default_rng(seed)
    p = rng.standard_normal(len(q0))
    J = problem.jacobian(q0)
    for _ in range(power_steps):
        p = J.matvec(p)
        p /= np.linalg.norm(p)
    q0 = np.asarray(q0, dtype=np.float64)
    eps = 1e-4 * max(1.0, float(np.linalg.norm(q0)))

    def stable(dtau):
        a, b = q0.copy(), q0 + eps * p
        gaps = []
        with np.errstate(all="ignore"):
            for _ in range(steps):
                a = a - dtau * problem.residual(a)
                b = b - dtau * problem.residual(b)
                gaps.append(float(np.linalg.norm(b - a)))
        if not all(math.isfinite(g) for g in gaps) or not np.all(np.isfinite(a)):
            return False
        floor = 1e-12 * (1.0 + float(np.linalg.norm(a)))  # gap lost in rounding
        return gaps[-1] <= max(gaps[steps // 2], floor) and gaps[-1] <= 1e3 * eps

    lo, hi = 0.0, 1e-6
    while stable(hi):
        lo, hi = hi, 2 * hi
        if hi > 1e6:
            return lo
    for _ in range(probes):
        mid = 0.5 * (lo + hi)
        if stable(mid):
            lo = mid
        else:
            hi = mid
    return lo


def _etm(cfg, problem, q_ref, q0):
    dtau = cfg.solver.dtau
    info = {}
    if dtau <= 0:
        dtau = max_stable_dtau(problem, q0, cfg.solver.dtau_probes, cfg.solver.dtau_probe_steps,
                               cfg.run.seed)
        info["dtau_bisection"] = dtau
    lg = _Logger(cfg.run.log_every)
    scale = math.sqrt(problem.dim)
    q = q0.copy()
    f = problem.residual(q)
    monitor = DivergenceMonitor()
    status = BUDGET_EXHAUSTED
    for k in range(cfg.run.max_iters + 1):
        loss = float(np.linalg.norm(f)) / scale
        err = relative_l2_error(q, q_ref) if q_ref is not None else math.nan
        if monitor(loss):
            status = DIVERGED
            lg(k, loss, err, dtau, force=True)
            break
        lg(k, loss, err, dtau)
        if _done(cfg, loss, err):
            status = CONVERGED
            break
        if k == cfg.run.max_iters:
            break
        q = q - dtau * f
        f = problem.residual(q)
    lg.close(dtau)
    info["dtau"] = dtau
    return q, lg, status, info


def _done(cfg, loss, err):
    return ((cfg.run.err_tol > 0 and err < cfg.run.err_tol)
            or (cfg.run.loss_tol > 0 and loss < cfg.run.loss_tol))


def _newton(cfg, problem, q_ref, q0):
    tol = cfg.run.loss_tol or cfg.solver.tol or 1e-8
    q, recs = newton_outer(problem, q0, cfg.solver.n_linear, tol=tol,
                           max_outer=cfg.run.max_iters, normal=cfg.solver.normal, q_ref=q_ref)
    lg = _Logger(1)
    lg.records = list(recs)
    lg.losses = [r.loss for r in recs]
    lg.errors = [r.rel_error for r in recs]
    lg.axis = np.array([r.iter for r in recs])
    status = CONVERGED if recs[-1].loss < tol else (
        DIVERGED if not math.isfinite(recs[-1].loss) else BUDGET_EXHAUSTED)
    return q, lg, status, {"inner_iterations": recs[-1].iter, "outer_iterations": len(recs) - 1}


def gradient_operator(problem: DiscreteProblem, q, kind: losses.LossKind) -> SparseMatrix:
    """Linear map from q-perturbations to gradient changes for the given loss.

    J for GR and QP, J^T J for MSE, and (1 - omega) J^T J + omega J for SGR.
    """
    J = problem.jacobian(q).to_scipy()
    if kind.tag in ("GR", "QP"):
        M = J
    else:
        omega = kind.omega if kind.tag == "SGR" else 0.0
        M = (1.0 - omega) * (J.T @ J) + omega * J if omega < 1 else J
    return SparseMatrix.from_scipy(M.tocsr())


def resolve_lr0(cfg, problem, q0) -> float:
    """``lr0``, or ``eta_factor`` times the step bound of the loss's gradient operator."""
    if cfg.schedule.eta_factor > 0:
        kind = losses.LossKind(cfg.loss.kind, cfg.loss.omega)
        spec = eta_max_bound(gradient_operator(problem, q0, kind))
        return cfg.schedule.eta_factor * spec.eta_max
    return cfg.schedule.lr0


def _optimize(cfg, problem, q_ref, q0, value_and_grad, state_of, theta0):
    """Shared loop for ODIL (theta = q) and PINNs-ND (theta = network weights)."""
    lr0 = resolve_lr0(cfg, problem, q0) if cfg.solver.family == "odil" else cfg.schedule.lr0
    sched = Schedule(cfg.schedule.kind, lr0, cfg.schedule.factor, cfg.schedule.every,
                     cfg.schedule.floor)
    opt = cfg.optimizer
    adam = AdamState.zeros(len(theta0), beta1=opt.beta1, beta2=opt.beta2, eps=opt.eps)
    lbfgs = LbfgsState(memory=opt.memory, line_search=opt.line_search)
    theta = theta0.copy()
    lg = _Logger(cfg.run.log_every)
    monitor = DivergenceMonitor()
    scale = math.sqrt(problem.dim)
    status = BUDGET_EXHAUSTED
    lr = lr0
    for k in range(cfg.run.max_iters + 1):
        with np.errstate(all="ignore"):
            value, grad = value_and_grad(theta)
        q = state_of(theta)
        loss = math.sqrt(2 * value / problem.dim) if value >= 0 else math.nan
        if cfg.loss.kind.upper() == "QP":
            loss = float(np.linalg.norm(problem.residual(q))) / scale
        err = relative_l2_error(q, q_ref) if q_ref is not None and np.all(np.isfinite(q)) else math.nan
        lr = schedule_lr(sched, k)
        if monitor(loss):
            status = DIVERGED
            lg(k, loss, err, lr, force=True)
            break
        lg(k, loss, err, lr)
        if _done(cfg, loss, err):
            status = CONVERGED
            break
        if k == cfg.run.max_iters:
            break
        if opt.name == "gd":
            theta = gd_step(theta, grad, lr)
        elif opt.name == "adam":
            adam, theta = adam_step(adam, theta, grad, lr)
        else:
            loss_fn = (lambda t: value_and_grad(t)[0]) if opt.line_search else None
            lbfgs, theta = lbfgs_step(lbfgs, theta, value, grad, lr, loss_fn)
    lg.close(lr)
    info = {"lr0": lr0}
    if opt.name == "lbfgs":
        info.update(lbfgs_fallbacks=lbfgs.fallbacks, lbfgs_skipped=lbfgs.skipped)
    return theta, lg, status, info


def _odil(cfg, problem, q_ref, q0):
    kind = losses.LossKind(cfg.loss.kind, cfg.loss.omega)

    def value_and_grad(q):
        ev = losses.evaluate(kind, problem, q)
        return ev.value, ev.grad_q

    return _optimize(cfg, problem, q_ref, q0, value_and_grad, lambda q: q, q0)


def _pinn(cfg, problem, q_ref, q0):
    kind = losses.LossKind(cfg.loss.kind, cfg.loss.omega)
    net = cfg.network
    layers = list(net.layers)
    layers[-1] = problem.nfields
    params0 = pinn_nd.init_params(layers, cfg.run.seed)
    work = problem
    if net.stacked:
        d = pinn_nd.row_weights(problem, net.lambda_pde, net.lambda_bc, net.lambda_ic)
        work = pinn_nd.weighted_problem(problem, d)
    model = pinn_nd.NdModel(work, hard_bc=net.hard_bc)

    def value_and_grad(theta):
        params = params0.with_flat(theta)
        q = model.state(params)
        ev = losses.evaluate(kind, work, q)
        return ev.value, pinn_nd.flatten_grads(model.pullback(params, ev.grad_q))

    theta, lg, status, info = _optimize(
        cfg, work, q_ref, q0, value_and_grad, lambda t: model.state(params0.with_flat(t)),
        params0.flat())
    info["params"] = params0.with_flat(theta)
    return model.state(info["params"]), lg, status, info


_RUNNERS = {"cg": _krylov, "gmres": _krylov, "etm": _etm, "newton_outer": _newton,
            "odil": _odil}


def run_experiment(config: ExperimentConfig, problem: DiscreteProblem | None = None,
                   write: bool = True) -> ExperimentResult:
    """Run one configured experiment; deterministic given the config (including seed)."""
    config.validate()
    problem = problem or build_problem(config.problem)
    q_ref = reference_solution(problem, config.problem)
    q0 = initial_state(problem, config.solver.init)
    runner = _pinn if config.solver.family == "pinn_nd" else _RUNNERS[config.solver.family]
    try:
        q, lg, status, info = runner(config, problem, q_ref, q0)
    except (NotPositiveDefiniteError, FloatingPointError, np.linalg.LinAlgError) as err:
        log.error("%s failed: %s", config.name, err)
        q, lg, status, info = q0, _Logger(1), DIVERGED, {"error": str(err)}
        lg(0, math.nan, math.nan, math.nan, force=True)
    params = info.pop("params", None)
    result = ExperimentResult(config, status, lg.records, np.asarray(q),
                              np.asarray(lg.losses, dtype=float),
                              np.asarray(lg.errors, dtype=float),
                              int(lg.axis[-1]) if lg.axis is not None else len(lg.losses) - 1,
                              info, lg.axis)
    if write and config.run.output:
        stem = result.write(config.run.output)
        if params is not None:
            pinn_nd.save_checkpoint(stem.with_suffix(".params.bin"), params)
    return result


# --- analysis helpers ----------------------------------------------------------------

def gaussian_smooth(series, sigma: float) -> np.ndarray:
    """Gaussian-filtered copy of a 1-D series with reflected boundaries."""
    x = np.asarray(series, dtype=np.float64)
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return x.copy()
    return gaussian_filter1d(x, sigma, mode="reflect")


def compare_runs(configs, metric: str = "rel_error", threshold: float = 1e-3,
                 budget: int | None = None, results=None) -> dict:
    """Iterations-to-threshold and metric-at-budget for each run, with ratios to the first.

    Thresholds are read from the per-iteration history, so the report does
    not depend on ``log_every``. A run that never reaches the threshold is
    censored: its count is taken as one past its last iteration and the
    row is flagged, so ratios against it are bounds rather than values.
    """
    if results is None:
        if len(configs) < 2:
            raise ValueError("compare_runs needs at least two configs")
        results = [run_experiment(c, write=False) for c in configs]
    if metric not in ("rel_error", "loss"):
        raise ValueError("metric must be 'rel_error' or 'loss'")
    rows = []
    for res in results:
        hist = res.error_history if metric == "rel_error" else res.loss_history
        axis = res.axis()
        if budget is not None:
            keep = axis <= budget
            hist, axis = hist[keep], axis[keep]
        idx = np.flatnonzero(hist < threshold)
        reached = bool(len(idx))
        last = int(axis[-1]) if len(axis) else 0
        rows.append({"name": res.config.name, "status": res.status,
                     "iterations_to_threshold": int(axis[idx[0]]) if reached else None,
                     "censored": not reached,
                     "count": int(axis[idx[0]]) if reached else last + 1,
                     "final_metric": float(hist[-1]) if len(hist) else math.nan,
                     "iterations": last})
    base = rows[0]["count"]
    for row in rows:
        row["ratio"] = row["count"] / base if base else (1.0 if row["count"] == 0 else math.inf)
    return {"metric": metric, "threshold": threshold, "budget": budget, "runs": rows}


def format_report(report: dict) -> str:
    lines = [f"metric={report['metric']} threshold={report['threshold']:g} "
             f"budget={report['budget']}",
             f"{'run':32s} {'status':17s} {'iters_to_thr':>12s} {'final':>11s} {'ratio':>8s}"]
    for r in report["runs"]:
        it = f">{r['count'] - 1}" if r["censored"] else str(r["count"])
        lines.append(f"{r['name'][:32]:32s} {r['status']:17s} {it:>12s} "
                     f"{r['final_metric']:11.3e} {r['ratio']:8.3f}")
    return "\n".join(lines)


def spectrum_report(config: ExperimentConfig) -> dict:
    """Condition number (SPD case) and the GR step bound of the problem Jacobian at q0."""
    problem = build_problem(config.problem)
    q0 = initial_state(problem, config.solver.init)
    J = problem.jacobian(q0)
    out = {"name": config.name, "dim": problem.dim}
    if J.is_symmetric():
        try:
            out["kappa"] = condition_number_spd(J)
        except NotPositiveDefiniteError as err:
            out["kappa"] = None
            out["kappa_error"] = str(err)
    else:
        out["kappa"] = None
    try:
        spec = eta_max_bound(J)
        out.update(eta_max=spec.eta_max, lambda_min_real=spec.lambda_min_real,
                   lambda_max_modulus=spec.lambda_max_modulus, method=spec.method)
    except NotPositiveDefiniteError as err:
        out.update(eta_max=None, eta_error=str(err))
    return out


def worker_count(jobs: int) -> int:
    cap = os.environ.get("SGR_LAB_THREADS")
    jobs = max(1, int(jobs))
    if cap:
        jobs = min(jobs, max(1, int(cap)))
    return jobs
