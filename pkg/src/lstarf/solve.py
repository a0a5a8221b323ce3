"""Solvers for nuclear-minus-Frobenius regularized recovery.

The penalized objective is

    J(X) = ||X||_* - ||X||_F + ||A(X) - b||^2 / (2 lam).

:func:`dca_solve` linearizes the concave part ``-||X||_F`` at the current
iterate (difference-of-convex algorithm) and solves each convex subproblem
by proximal gradient with singular value thresholding.  The linearization is
a majorizer that is tight at the current iterate, so ``J`` never increases.
"""
from __future__ import annotations

import csv
import io
import json
import math
import weakref
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import LstarfError, NumericalFailure
from .matcore import _svt, as_matrix, frob_subgrad, inner, lstar_f
from .measure import LinearOperator, ProblemInstance, adjoint, apply, operator_norm
from .mtx import atomic_write_text, write_mtx
from .seeding import check_seed, rng_for

STEP_RULES = ("fixed", "backtracking")
INITS = ("adjoint", "random", "zero")
FIXED_STEP_SAFETY = 0.95

_NORM_CACHE: "weakref.WeakKeyDictionary[LinearOperator, float]" = weakref.WeakKeyDictionary()


def _norm2(op: LinearOperator) -> float:
    """``||A||^2``, cached per operator object."""
    val = _NORM_CACHE.get(op)
    if val is None:
        val = operator_norm(op) ** 2
        _NORM_CACHE[op] = val
    return val


@dataclass(frozen=True)
class SolverConfig:
    max_outer: int = 500
    max_inner: int = 300
    tol_outer: float = 1e-10  # relative change of J between outer steps
    tol_inner: float = 1e-10  # relative change of the inner iterate
    tol_x: float = 1e-8  # relative change of the outer iterate
    step_rule: str = "fixed"
    acceleration: bool = True
    init: str = "adjoint"
    seed: int = 0
    stat_tol: float = 1e-6  # stationarity residual, relative to the gradient scale

    def __post_init__(self):
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration caps must be >= 1")
        for name in ("tol_outer", "tol_inner", "tol_x", "stat_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.step_rule not in STEP_RULES:
            raise ValueError(f"step_rule must be one of {STEP_RULES}")
        if self.init not in INITS:
            raise ValueError(f"init must be one of {INITS}")
        check_seed(self.seed)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PathPoint:
    lam: float
    residual: float
    objective: float
    bound: Optional[float]
    bound_holds: Optional[bool]
    safeguarded: bool
    outer_iterations: int


@dataclass
class SolveResult:
    x: np.ndarray
    objective_trace: np.ndarray
    residual: float
    inner_iterations: int
    lambda_used: float
    status: str
    solver: str = "dca"
    outer_iterations: int = 0
    stationarity: float = 0.0
    residual_trace: np.ndarray = field(default=None, repr=False)
    path: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def objective(self) -> float:
        return float(self.objective_trace[-1])

    def to_dict(self, x_file: Optional[str] = None) -> dict:
        return {
            "solver": self.solver,
            "status": self.status,
            "lambda_used": self.lambda_used,
            "residual": self.residual,
            "objective": self.objective,
            "outer_iterations": self.outer_iterations,
            "inner_iterations": self.inner_iterations,
            "stationarity": self.stationarity,
            "objective_trace": [float(v) for v in self.objective_trace],
            "path": [asdict(p) for p in self.path],
            "info": self.info,
            "x_file": x_file,
        }


# --- inner convex solver -------------------------------------------------

def _inner_solve(op: LinearOperator, b: np.ndarray, lam: float, g: np.ndarray, x: np.ndarray,
                 step: float, cfg: SolverConfig) -> tuple[np.ndarray, float, int, float]:
    """Minimize ``||X||_* - <g, X> + ||A(X) - b||^2/(2 lam)`` from ``x``.

    Accelerated proximal gradient with function-value restart.  Only
    iterates that do not increase the objective are accepted, so the result
    is never worse than the starting point.
    """
    mat = op.matrix
    shape = x.shape

    def smooth(z):
        r = mat @ z.ravel() - b
        return -inner(g, z) + float(r @ r) / (2.0 * lam), r

    def grad(r):
        return -g + (mat.T @ r).reshape(shape) / lam

    f_x, r_x = smooth(x)
    big_f = float(np.sum(np.linalg.svd(x, compute_uv=False))) + f_x
    y, f_y, r_y = x, f_x, r_x
    t_mom = 1.0
    its = 0
    while its < cfg.max_inner:
        its += 1
        gy = grad(r_y)
        while True:
            z, sz = _svt(y - step * gy, step)
            f_z, r_z = smooth(z)
            if cfg.step_rule == "fixed":
                break
            d = z - y
            if f_z <= f_y + inner(gy, d) + inner(d, d) / (2.0 * step) + 1e-14 * abs(f_y):
                break
            step *= 0.5
        f_new = float(np.sum(sz)) + f_z
        if not math.isfinite(f_new):
            raise NumericalFailure("inner objective became non-finite")
        if f_new > big_f:
            if y is x:
                break  # no descent even without momentum: round-off level
            y, f_y, r_y, t_mom = x, f_x, r_x, 1.0
            continue
        dx = float(np.linalg.norm(z - x))
        x_prev = x
        x, f_x, r_x, big_f = z, f_z, r_z, f_new
        if dx <= cfg.tol_inner * max(1.0, float(np.linalg.norm(x))):
            break
        if cfg.acceleration:
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_mom * t_mom))
            y = x + ((t_mom - 1.0) / t_new) * (x - x_prev)
            f_y, r_y = smooth(y)
            t_mom = t_new
        else:
            y, f_y, r_y = x, f_x, r_x
    return x, big_f, its, step


# --- outer loop --------------------------------------------------------------

def _initial_point(instance: ProblemInstance, cfg: SolverConfig, x0) -> np.ndarray:
    op = instance.operator
    if x0 is not None:
        x = as_matrix(x0).copy()
        if x.shape != op.shape:
            raise ValueError(f"x0 has shape {x.shape}, expected {op.shape}")
        return x
    if cfg.init == "zero":
        return np.zeros(op.shape)
    if cfg.init == "random":
        z = rng_for(cfg.seed, "solver-init").standard_normal(op.shape)
    else:
        z = adjoint(op, instance.b)
    az = float(np.linalg.norm(apply(op, z)))
    if az == 0.0:
        return np.zeros(op.shape)
    return z * (float(np.linalg.norm(instance.b)) / az)


def _objective(instance: ProblemInstance, x: np.ndarray, lam: float, dc: bool) -> tuple[float, float]:
    lf = lstar_f(x)
    res = instance.residual(x)
    reg = lf.difference if dc else lf.nuclear
    return reg + res * res / (2.0 * lam), res


def _stationarity(op: LinearOperator, b: np.ndarray, lam: float, x: np.ndarray, dc: bool) -> tuple[float, float]:
    """Prox-gradient residual of the subproblem linearized at ``x`` and its scale."""
    g = frob_subgrad(x) if dc else np.zeros_like(x)
    fit = adjoint(op, apply(op, x) - b) / lam
    nrm2 = _norm2(op)
    s = lam / nrm2 if nrm2 > 0 else 1.0
    z, _ = _svt(x - s * (fit - g), s)
    res = float(np.linalg.norm(x - z)) / s
    scale = max(1.0, float(np.linalg.norm(g)) + float(np.linalg.norm(fit)))
    return res, scale


def _run(instance: ProblemInstance, lam: float, cfg: Optional[SolverConfig], x0, dc: bool) -> SolveResult:
    if not lam > 0 or not math.isfinite(lam):
        raise ValueError(f"lambda must be positive and finite, got {lam}")
    cfg = cfg or SolverConfig()
    op, b = instance.operator, instance.b
    name = "dca" if dc else "nuclear"
    x = _initial_point(instance, cfg, x0)
    nrm2 = _norm2(op)
    if nrm2 == 0.0:
        # A = 0: the fit term is constant and X = 0 minimizes the regularizer
        x = np.zeros(op.shape)
        j, res = _objective(instance, x, lam, dc)
        return SolveResult(x, np.array([j]), res, 0, lam, "converged", name, 0, 0.0, np.array([res]))
    if cfg.step_rule == "fixed":
        step = FIXED_STEP_SAFETY * lam / nrm2
    else:
        step = 4.0 * lam / nrm2

    j, res = _objective(instance, x, lam, dc)
    trace, rtrace = [j], [res]
    total_inner = 0
    outer = 0
    settled = False
    for outer in range(1, cfg.max_outer + 1):
        g = frob_subgrad(x) if dc else np.zeros_like(x)
        x_new, _, its, step = _inner_solve(op, b, lam, g, x, step, cfg)
        total_inner += its
        j_new, res = _objective(instance, x_new, lam, dc)
        if not math.isfinite(j_new):
            exc = NumericalFailure(f"objective became non-finite at outer iteration {outer}")
            exc.trace = trace
            raise exc
        dj = j - j_new
        dx = float(np.linalg.norm(x_new - x))
        x, j = x_new, j_new
        trace.append(j)
        rtrace.append(res)
        if dj <= cfg.tol_outer * max(1.0, abs(j)) and dx <= cfg.tol_x * max(1.0, float(np.linalg.norm(x))):
            settled = True
            break
    stat, scale = _stationarity(op, b, lam, x, dc)
    if not settled:
        status = "iteration-cap"
    elif stat <= cfg.stat_tol * scale:
        status = "converged"
    else:
        status = "stalled"
    return SolveResult(x, np.asarray(trace), res, total_inner, lam, status, name, outer,
                       stat, np.asarray(rtrace))


def dca_solve(instance: ProblemInstance, lam: float, config: Optional[SolverConfig] = None,
              x0=None) -> SolveResult:
    """Minimize ``J`` by DC iterations from ``x0`` (default: rescaled ``A*(b)``)."""
    return _run(instance, lam, config, x0, dc=True)


def nuclear_solve(instance: ProblemInstance, lam: float, config: Optional[SolverConfig] = None,
                  x0=None) -> SolveResult:
    """Convex baseline ``||X||_* + ||A(X) - b||^2/(2 lam)`` with the same machinery."""
    return _run(instance, lam, config, x0, dc=False)


# --- continuation in the penalty weight ------------------------------------

def _resolve_reference(instance: ProblemInstance, reference):
    if isinstance(reference, str):
        if reference != "auto":
            raise ValueError("reference must be a matrix, None or 'auto'")
        if instance.x_true is None or instance.epsilon != 0.0:
            return None
        reference = instance.x_true
    if reference is None:
        return None
    ref = as_matrix(reference)
    if ref.shape != instance.operator.shape:
        raise ValueError("reference has the wrong shape")
    return ref


def penalty_path_solve(instance: ProblemInstance, lambda0: float = 0.1, decay: float = 0.5,
                       feas_tol: float = 1e-8, config: Optional[SolverConfig] = None,
                       max_steps: int = 60, reference: Union[str, np.ndarray, None] = "auto",
                       safeguard: bool = False, x0=None) -> SolveResult:
    """Warm-started DCA along ``lam_n = lambda0 * decay**n`` until ``residual <= feas_tol``.

    With a feasible ``reference`` (``A(ref) = b``; by default the ground truth
    of a noiseless instance) each path point records the bound
    ``residual^2 <= 2 lam_n (||ref||_* - ||ref||_F)``, which holds whenever
    ``J(X_n) <= J(ref)``.  With ``safeguard=True`` a point violating that
    comparison is re-solved from ``ref``; this uses the reference as side
    information and is off by default.
    """
    if not lambda0 > 0:
        raise ValueError("lambda0 must be positive")
    if not 0 < decay < 1:
        raise ValueError("decay must lie in (0, 1)")
    if not feas_tol > 0:
        raise ValueError("feas_tol must be positive")
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    cfg = config or SolverConfig()
    ref = _resolve_reference(instance, reference)
    ref_value = None
    if ref is not None and instance.residual(ref) <= 1e-12 * max(1.0, float(np.linalg.norm(instance.b))):
        ref_value = lstar_f(ref).difference
    elif safeguard:
        raise ValueError("safeguard needs a feasible reference")

    x = None if x0 is None else as_matrix(x0)
    path: list[PathPoint] = []
    total_inner = 0
    res = None
    status = "iteration-cap"
    for step_n in range(max_steps):
        lam = lambda0 * decay ** step_n
        res = dca_solve(instance, lam, cfg, x0=x)
        guarded = False
        if safeguard and res.objective > instance.objective(ref, lam):
            alt = dca_solve(instance, lam, cfg, x0=ref)
            total_inner += alt.inner_iterations
            guarded = True
            res = alt
        total_inner += res.inner_iterations
        bound = holds = None
        if ref_value is not None:
            bound = 2.0 * lam * ref_value
            holds = res.residual ** 2 <= bound + 1e-10
        path.append(PathPoint(lam, res.residual, res.objective, bound, holds, guarded, res.outer_iterations))
        x = res.x
        if res.residual <= feas_tol:
            status = "converged"
            break
    return SolveResult(res.x, res.objective_trace, res.residual, total_inner, res.lambda_used, status,
                       "path", res.outer_iterations, res.stationarity, res.residual_trace, path,
                       {"safeguard_resolves": sum(p.safeguarded for p in path)})


# --- noise-level constrained approximation ---------------------------------

def discrepancy_solve(instance: ProblemInstance, epsilon: Optional[float] = None,
                      lambda_bracket: Optional[tuple[float, float]] = None,
                      config: Optional[SolverConfig] = None, max_bisect: int = 60,
                      max_expand: int = 40) -> SolveResult:
    """Approximate ``min L(X) s.t. ||A(X) - b|| <= epsilon`` by choosing ``lam``.

    Log-bisection on ``lam`` targets ``residual = epsilon``.  Every solve is
    kept, and the returned point is the strictly feasible one
    (``residual <= epsilon``) with the smallest ``||X||_* - ||X||_F``; the
    residual can jump across ``epsilon`` as ``lam`` varies, so the last
    bisection point need not be the best one.  Bracket endpoints are solved
    from the default start, interior points warm-start from the feasible end.
    """
    eps = instance.epsilon if epsilon is None else float(epsilon)
    if eps < 0:
        raise ValueError("epsilon must be nonnegative")
    cfg = config or SolverConfig()
    op, b = instance.operator, instance.b
    bnorm = float(np.linalg.norm(b))
    if eps >= bnorm:
        x = np.zeros(op.shape)
        return SolveResult(x, np.array([0.0]), bnorm, 0, math.inf, "converged", "discrepancy",
                           0, 0.0, np.array([bnorm]), info={"reason": "zero is feasible"})
    if eps == 0.0:
        res = penalty_path_solve(instance, 0.1, 0.5, 1e-10, cfg, max_steps=60, reference=None)
        res.solver = "discrepancy"
        res.info["delegated"] = "penalty-path"
        return res

    if lambda_bracket is None:
        hi = max(float(np.linalg.norm(adjoint(op, b), 2)), eps)
        lo = eps / 10.0
    else:
        lo, hi = map(float, lambda_bracket)
        if not 0 < lo < hi:
            raise ValueError("lambda_bracket must satisfy 0 < lo < hi")

    evals: list[tuple[float, SolveResult]] = []
    total_inner = 0

    def solve_at(lam, x0=None):
        nonlocal total_inner
        r = dca_solve(instance, lam, cfg, x0=x0)
        total_inner += r.inner_iterations
        evals.append((lam, r))
        return r

    r_lo = solve_at(lo)
    for _ in range(max_expand):
        if r_lo.residual <= eps:
            break
        lo /= 10.0
        r_lo = solve_at(lo)
    else:
        raise LstarfError(f"no lambda down to {lo:.3g} reaches residual <= epsilon={eps}")
    r_hi = solve_at(hi)
    saturated = False
    for _ in range(8):
        if r_hi.residual > eps:
            break
        hi *= 10.0
        r_hi = solve_at(hi)
    else:
        saturated = True

    slack = max(1e-3 * eps, 1e-8)
    bisections = 0
    if not saturated:
        x_warm = r_lo.x
        while bisections < max_bisect and hi / lo > 1.0 + 1e-10:
            bisections += 1
            mid = math.sqrt(lo * hi)
            r_mid = solve_at(mid, x_warm)
            if r_mid.residual <= eps:
                lo, x_warm = mid, r_mid.x
            else:
                hi = mid
            if abs(r_mid.residual - eps) <= slack and r_mid.residual <= eps:
                break

    feasible = [(lam, r) for lam, r in evals if r.residual <= eps]
    lam, best = min(feasible, key=lambda p: (lstar_f(p[1].x).difference, -p[1].residual))
    best.solver = "discrepancy"
    best.inner_iterations = total_inner
    best.info = {
        "epsilon": eps,
        "evaluations": len(evals),
        "bisections": bisections,
        "bracket": [lo, hi],
        "saturated": saturated,
        "selection": "min nuclear-minus-Frobenius among residual <= epsilon",
    }
    return best


# --- serialization ---------------------------------------------------------

def trace_csv(result: SolveResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "J", "residual"])
    rtrace = result.residual_trace if result.residual_trace is not None else [float("nan")] * len(result.objective_trace)
    for i, (j, r) in enumerate(zip(result.objective_trace, rtrace)):
        w.writerow([i, repr(float(j)), repr(float(r))])
    return buf.getvalue()


def save_result(result: SolveResult, path) -> None:
    """JSON summary at ``path``; ``X`` as ``<stem>.x.mtx``; the trace as ``<stem>.trace.csv``."""
    path = Path(path)
    stem = path.name[: -len(".json")] if path.name.endswith(".json") else path.name
    x_file = f"{stem}.x.mtx"
    write_mtx(path.parent / x_file, result.x)
    atomic_write_text(path.parent / f"{stem}.trace.csv", trace_csv(result))
    atomic_write_text(path, json.dumps(result.to_dict(x_file), indent=2, sort_keys=True) + "\n")
