"""Reproducible recovery experiments and the randomized lemma suite."""
from __future__ import annotations

import csv
import io
import itertools
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .certify import (
    ConstrainedBoundParams,
    alpha_hat,
    check_constrained_recovery,
    check_regularized_recovery,
    constrained_constants,
    delta4r_threshold,
    lstar_f_bounds,
    mn_min_max,
    mn_min_max_bruteforce,
    polytope_decompose,
    power_sum_check,
)
from .measure import KINDS, build_operator, make_instance, random_low_rank
from .mtx import atomic_write_text
from .ripest import check_orthogonal_pair_bound
from .seeding import check_seed, hash64, rng_for
from .solve import SolverConfig, dca_solve, discrepancy_solve, nuclear_solve, penalty_path_solve

SOLVERS = ("dca", "nuclear", "path", "discrepancy")
CSV_HEADER = ["m", "n", "r", "l", "eps", "lambda", "solver", "trial", "seed",
              "rel_err", "residual", "wall_ms", "verdict"]


def parse_lambda_policy(policy: str) -> tuple[str, float]:
    """``fixed:<value>`` or ``noise:<factor>`` (``lambda = factor * eps``)."""
    try:
        kind, val = policy.split(":", 1)
        val = float(val)
    except ValueError:
        raise ValueError(f"lambda policy must look like 'fixed:1e-3' or 'noise:1', got {policy!r}") from None
    if kind not in ("fixed", "noise") or not val > 0 or not math.isfinite(val):
        raise ValueError(f"invalid lambda policy {policy!r}")
    return kind, val


@dataclass(frozen=True)
class ExperimentSpec:
    sizes: tuple = ((10, 10),)  # (m, n) pairs
    ranks: tuple = (1,)
    measurements: tuple = (100,)
    epsilons: tuple = (0.0,)
    lambda_policy: str = "fixed:1e-3"
    solvers: tuple = ("discrepancy",)
    trials: int = 5
    operator: str = "gaussian"
    operator_params: dict = field(default_factory=dict)
    base_seed: int = 0
    success_threshold: float = 1e-3
    certify: bool = False
    record_timing: bool = False
    solver_config: SolverConfig = field(default_factory=SolverConfig)

    def validate(self) -> None:
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValueError(f"trials must be a positive integer, got {self.trials}")
        if not self.sizes or not self.ranks or not self.measurements or not self.epsilons or not self.solvers:
            raise ValueError("every grid axis needs at least one value")
        for m, n in self.sizes:
            if int(m) != m or int(n) != n or m < 1 or n < 1:
                raise ValueError(f"invalid size {(m, n)}")
            for r in self.ranks:
                if int(r) != r or not 1 <= r <= min(m, n):
                    raise ValueError(f"rank {r} invalid for size {(m, n)}")
        for l in self.measurements:
            if int(l) != l or l < 1:
                raise ValueError(f"invalid measurement count {l}")
        for e in self.epsilons:
            if not e >= 0:
                raise ValueError(f"noise level must be nonnegative, got {e}")
        kind, _ = parse_lambda_policy(self.lambda_policy)
        if kind == "noise" and any(e == 0 for e in self.epsilons):
            raise ValueError("a noise-proportional lambda needs every epsilon > 0")
        for s in self.solvers:
            if s not in SOLVERS:
                raise ValueError(f"unknown solver {s!r}; expected one of {SOLVERS}")
        if self.operator not in KINDS:
            raise ValueError(f"unknown operator kind {self.operator!r}")
        if not self.success_threshold > 0:
            raise ValueError("success_threshold must be positive")
        check_seed(self.base_seed)

    def cells(self):
        for (m, n), r, l, eps, solver in itertools.product(
                self.sizes, self.ranks, self.measurements, self.epsilons, self.solvers):
            yield int(m), int(n), int(r), int(l), float(eps), solver


@dataclass
class TrialRecord:
    m: int
    n: int
    r: int
    l: int
    eps: float
    lam: float
    solver: str
    trial: int
    seed: int
    rel_err: float
    residual: float
    wall_ms: Optional[float]
    verdict: str

    @property
    def key(self):
        return (self.m, self.n, self.r, self.l, self.eps, SOLVERS.index(self.solver), self.trial)

    def row(self) -> list:
        return [self.m, self.n, self.r, self.l, repr(self.eps), repr(self.lam), self.solver, self.trial,
                self.seed, repr(self.rel_err), repr(self.residual),
                "NA" if self.wall_ms is None else f"{self.wall_ms:.3f}", self.verdict]


def trial_seed(base: int, m: int, n: int, r: int, l: int, eps: float, trial: int) -> int:
    return hash64(base, m, n, r, l, float(eps), trial)


def _certify(spec: ExperimentSpec, inst, x, r: int, lam: float, solver: str) -> str:
    op = inst.operator
    if op.exact_delta is None:
        return "NA"
    d = float(op.exact_delta)
    if solver in ("discrepancy", "path"):
        t_hat = min(op.m, op.n) - r
        k = min(max(2, 2 * r), max(t_hat, 2))
        return check_constrained_recovery(inst, x, ConstrainedBoundParams(r, k, d, d, inst.epsilon)).verdict
    return check_regularized_recovery(inst, x, 2, 6, d, lam).verdict


def _run_trial(spec: ExperimentSpec, cell, trial: int) -> TrialRecord:
    m, n, r, l, eps, solver = cell
    seed = trial_seed(spec.base_seed, m, n, r, l, eps, trial)
    op = build_operator(spec.operator, m, n, l, seed, spec.operator_params)
    x_true = random_low_rank(m, n, r, rng_for(seed, "ground-truth"))
    inst = make_instance(op, x_true, "gaussian-rescaled" if eps > 0 else "none", eps, seed)
    kind, val = parse_lambda_policy(spec.lambda_policy)
    lam = val if kind == "fixed" else val * eps
    cfg = spec.solver_config
    t0 = time.perf_counter()
    if solver == "dca":
        res = dca_solve(inst, lam, cfg)
    elif solver == "nuclear":
        res = nuclear_solve(inst, lam, cfg)
    elif solver == "path":
        res = penalty_path_solve(inst, lam, 0.5, max(eps, 1e-10), cfg, reference=None)
    else:
        res = discrepancy_solve(inst, eps, None, cfg)
    wall = (time.perf_counter() - t0) * 1e3 if spec.record_timing else None
    rel = float(np.linalg.norm(res.x - x_true) / np.linalg.norm(x_true))
    verdict = _certify(spec, inst, res.x, r, res.lambda_used, solver) if spec.certify else "NA"
    return TrialRecord(m, n, r, l, eps, float(res.lambda_used), solver, trial, seed, rel,
                       float(res.residual), wall, verdict)


def records_csv(records: list[TrialRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for rec in records:
        w.writerow(rec.row())
    return buf.getvalue()


def run_experiment(spec: ExperimentSpec, out_csv=None, threads: int = 1) -> list[TrialRecord]:
    """Run every (cell, trial), sort canonically and optionally write the CSV atomically."""
    spec.validate()
    jobs = [(cell, t) for cell in spec.cells() for t in range(spec.trials)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(lambda job: _run_trial(spec, *job), jobs))
    else:
        records = [_run_trial(spec, *job) for job in jobs]
    records.sort(key=lambda rec: rec.key)
    if out_csv is not None:
        atomic_write_text(Path(out_csv), records_csv(records))
    return records


def success_summary(records: list[TrialRecord], threshold: float = 1e-3) -> dict:
    """Success rate per cell, with a flag where the rate drops as ``l`` grows.

    A drop larger than one trial's worth between adjacent measurement counts
    is flagged; this is a diagnostic, since nonconvex solvers can fluctuate.
    """
    groups: dict = {}
    for rec in records:
        key = (rec.m, rec.n, rec.r, rec.eps, rec.solver)
        groups.setdefault(key, {}).setdefault(rec.l, []).append(rec.rel_err <= threshold)
    cells = []
    for key in sorted(groups, key=lambda k: (k[0], k[1], k[2], k[3], SOLVERS.index(k[4]))):
        by_l = groups[key]
        ls = sorted(by_l)
        rates = [sum(by_l[l]) / len(by_l[l]) for l in ls]
        flags = [ls[i + 1] for i in range(len(ls) - 1)
                 if rates[i] - rates[i + 1] > 1.0 / len(by_l[ls[i]]) + 1e-12]
        m, n, r, eps, solver = key
        cells.append({"m": m, "n": n, "r": r, "eps": eps, "solver": solver,
                      "l": ls, "success_rate": rates, "nonmonotone_at_l": flags})
    return {"threshold": threshold, "cells": cells}


# --- lemma suite -----------------------------------------------------------

class _Tally:
    def __init__(self):
        self.cases = 0
        self.violations = 0
        self.max_violation = 0.0
        self.extra: dict = {}

    def add(self, violation: float, tol: float = 0.0) -> None:
        """``violation`` is how far the check is on the wrong side (<= 0 when it holds)."""
        self.cases += 1
        if violation > tol:
            self.violations += 1
        self.max_violation = max(self.max_violation, float(violation))

    def report(self, runtime: Optional[float]) -> dict:
        d = {"cases": self.cases, "passed": self.cases - self.violations,
             "violations": self.violations, "max_violation": self.max_violation}
        d.update(self.extra)
        if runtime is not None:
            d["runtime_s"] = runtime
        return d


def _suite_block_sizes(rng) -> _Tally:
    t = _Tally()
    for r in range(1, 13):
        for k in range(1, 13):
            t.add(abs(mn_min_max(r, k) - mn_min_max_bruteforce(r, k)))
    return t


def _random_matrix(rng, max_m: int = 8, max_n: int = 6) -> np.ndarray:
    m, n = int(rng.integers(1, max_m + 1)), int(rng.integers(1, max_n + 1))
    rank = int(rng.integers(1, min(m, n) + 1))
    x = rng.standard_normal((m, rank)) @ rng.standard_normal((rank, n))
    return x * 10.0 ** rng.uniform(-2, 2)


def _suite_sandwich(rng, count: int) -> _Tally:
    t = _Tally()
    rank1_max = 0.0
    for i in range(count):
        if i % 10 == 0:
            m, n = int(rng.integers(1, 9)), int(rng.integers(1, 7))
            x = np.outer(rng.standard_normal(m), rng.standard_normal(n))
            x /= np.linalg.norm(x)
            rep = lstar_f_bounds(x)
            rank1_max = max(rank1_max, abs(rep["value"]))
            t.add(abs(rep["value"]) - 1e-10)
            continue
        x = _random_matrix(rng)
        x /= np.linalg.norm(x)
        rep = lstar_f_bounds(x)
        t.add(-rep["min_slack"], 1e-9)
    t.extra["rank1_max_value"] = rank1_max
    return t


def _random_polytope_member(rng, max_dim: int = 20) -> tuple[np.ndarray, float, int]:
    p = int(rng.integers(1, max_dim + 1))
    s = int(rng.integers(1, p + 1))
    alpha = float(rng.uniform(0.1, 3.0))
    v = rng.uniform(-alpha, alpha, p)
    if rng.random() < 0.4:
        v[rng.random(p) < 0.4] = 0.0
    if rng.random() < 0.3:
        # ties and entries on the box boundary
        v = np.round(v / alpha * 2) / 2 * alpha
    l1 = float(np.sum(np.abs(v)))
    if l1 > s * alpha:
        v *= s * alpha / l1 * (1.0 if rng.random() < 0.3 else rng.uniform(0.3, 1.0))
    return v, alpha, s


def _suite_polytope(rng, count: int) -> _Tally:
    t = _Tally()
    max_atoms = 0
    for _ in range(count):
        v, alpha, s = _random_polytope_member(rng)
        rep = polytope_decompose(v, alpha, s).check()
        scale_err = max(rep["reconstruction_error"], rep["weight_sum_error"], rep["l1_error"],
                        rep["linf_excess"], -rep["min_weight"])
        t.add(0.0 if rep["ok"] else max(scale_err, 1e-300))
        max_atoms = max(max_atoms, rep["n_atoms"] - int(np.count_nonzero(v)))
    t.extra["max_atoms_minus_support"] = max_atoms
    return t


def _suite_power_sums(rng, count: int) -> _Tally:
    t = _Tally()
    exps = (1.0, 1.5, 2.0, 3.0)
    for i in range(count):
        size = int(rng.integers(2, 21))
        a = np.sort(rng.exponential(1.0, size))[::-1]
        r = int(rng.integers(1, size))
        head, tail = a[:r].sum(), a[r:].sum()
        if tail > head:
            # shrink the tail so the head dominates, keeping the order
            a[r:] *= head / tail * rng.uniform(0.5, 1.0)
        rep = power_sum_check(a, r, 0.0, exps[i % len(exps)])
        t.add(-rep["slack"])
    return t


def _suite_constants() -> _Tally:
    t = _Tally()
    for r in range(1, 7):
        thr = delta4r_threshold(r)
        for frac in (0.0, 0.25, 0.5, 0.75, 0.95):
            d = frac * thr
            a1 = constrained_constants(ConstrainedBoundParams(r, 2 * r, d, d)).alpha
            a2 = alpha_hat(r, d)
            t.add(abs(a1 - a2) / abs(a2), 1e-12)
    return t


def _suite_orthogonal_pairs(seed: int) -> _Tally:
    t = _Tally()
    for kind, params in (("identity", {}), ("scaled-identity", {"a": 0.1})):
        op = build_operator(kind, 6, 5, 30, seed, params)
        for r, rp in ((1, 1), (1, 2), (2, 2)):
            rep = check_orthogonal_pair_bound(op, op.exact_delta, r, rp, trials=50, seed=seed)
            t.cases += rep["trials"]
            t.violations += rep["violations"]
            t.max_violation = max(t.max_violation, rep["max_excess"])
    return t


def run_lemma_suite(seed: int = 0, record_timing: bool = False, sandwich_count: int = 10_000,
                    polytope_count: int = 500, power_count: int = 10_000) -> dict:
    """Run the randomized oracles and report per-check pass counts and worst violation."""
    seed = check_seed(seed)
    checks = {}
    suites = [
        ("block_size_minmax", lambda rng: _suite_block_sizes(rng)),
        ("lstar_f_sandwich", lambda rng: _suite_sandwich(rng, sandwich_count)),
        ("polytope_decomposition", lambda rng: _suite_polytope(rng, polytope_count)),
        ("power_sum", lambda rng: _suite_power_sums(rng, power_count)),
        ("specialized_constant", lambda rng: _suite_constants()),
        ("orthogonal_pairs", lambda rng: _suite_orthogonal_pairs(seed)),
    ]
    for i, (name, fn) in enumerate(suites):
        t0 = time.perf_counter()
        tally = fn(rng_for(seed, "lemma-suite", i))
        checks[name] = tally.report(time.perf_counter() - t0 if record_timing else None)
    total = sum(c["violations"] for c in checks.values())
    return {"seed": seed, "checks": checks, "total_violations": total, "ok": total == 0}
