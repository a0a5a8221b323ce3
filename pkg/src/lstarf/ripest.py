"""Restricted isometry constants of concrete operators.

Computing ``delta_r`` exactly is intractable in general.  For operators built
with a closed-form constant (identity, scaled identity) the exact value is
returned.  Otherwise :func:`estimate_delta` searches for a unit-Frobenius
rank-``r`` matrix ``W`` maximizing ``| ||A(W)||^2 - 1 |``; the value at the
best ``W`` found is a certified *lower* bound on ``delta_r`` and ``W`` is
returned as its witness.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import LstarfError
from .matcore import inner
from .measure import LinearOperator, apply, gram_apply, operator_norm
from .mtx import atomic_write_text, write_mtx
from .seeding import check_seed, rng_for

EXACT = "exact"
LOWER_BOUND = "lower-bound"


@dataclass
class RipEstimate:
    r: int
    delta: float
    certainty: str
    restarts: int
    iterations: int
    seed: int
    witness: np.ndarray
    side: str = "both"
    traces: list = field(default_factory=list, repr=False)

    def deviation(self, op: LinearOperator) -> float:
        return abs(float(np.sum(apply(op, self.witness) ** 2)) - 1.0)

    def to_dict(self, witness_file: Optional[str] = None) -> dict:
        return {
            "r": self.r,
            "delta": self.delta,
            "certainty": self.certainty,
            "restarts": self.restarts,
            "iterations": self.iterations,
            "seed": self.seed,
            "side": self.side,
            "witness_file": witness_file,
        }


def save_estimate(est: RipEstimate, path) -> None:
    path = Path(path)
    witness_name = path.with_suffix("").name + ".witness.mtx"
    write_mtx(path.parent / witness_name, est.witness)
    atomic_write_text(path, json.dumps(est.to_dict(witness_name), indent=2, sort_keys=True) + "\n")


def _check_rank(op: LinearOperator, r: int) -> int:
    t = min(op.m, op.n)
    if int(r) != r or not 1 <= r <= t:
        raise ValueError(f"rank r must be an integer in [1, {t}], got {r}")
    return int(r)


def _retract(y: np.ndarray, r: int) -> np.ndarray:
    """Best rank-r approximation followed by Frobenius normalization."""
    u, s, vt = np.linalg.svd(y, full_matrices=False)
    x = (u[:, :r] * s[:r]) @ vt[:r]
    nrm = np.linalg.norm(x)
    if nrm == 0.0:
        return x
    return x / nrm


def _ascent(op: LinearOperator, x: np.ndarray, r: int, side: int, shift: float, iterations: int):
    """Projected gradient ascent of ``side * (||A x||^2 - 1)`` on the unit rank-r set.

    The search direction is the gradient of the convex surrogate
    ``side*||A x||^2 + shift*||x||^2``, which agrees with the objective up to a
    constant on the unit sphere.  Each iteration tries a Barzilai-Borwein step
    with backtracking and the infinite-step limit ``P_r(d)/||P_r(d)||``; the
    latter never decreases the objective by convexity.  Only nondecreasing
    moves are accepted, so the returned trace is monotone.
    """
    def objective(z):
        return side * (float(np.sum(apply(op, z) ** 2)) - 1.0)

    def direction(z):
        return 2.0 * (side * gram_apply(op, z) + shift * z)

    f = objective(x)
    trace = [f]
    d = direction(x)
    x_prev = d_prev = None
    used = 0
    for it in range(iterations):
        used = it + 1
        if x_prev is None:
            step = 1.0 / max(np.linalg.norm(d), 1e-300)
        else:
            dx, dd = x - x_prev, d - d_prev
            denom = abs(inner(dx, dd))
            step = inner(dx, dx) / denom if denom > 0 else 1.0 / max(np.linalg.norm(d), 1e-300)
        best_x, best_f = None, f
        for _ in range(30):
            cand = _retract(x + step * d, r)
            fc = objective(cand)
            if fc > best_f:
                best_x, best_f = cand, fc
                break
            step *= 0.5
        cand = _retract(d, r)
        fc = objective(cand)
        if fc > best_f:
            best_x, best_f = cand, fc
        if best_x is None or best_f - f <= 1e-15 * max(1.0, abs(f)):
            if best_x is not None:
                x, f = best_x, best_f
                trace.append(f)
            break
        x_prev, d_prev = x, d
        x, f = best_x, best_f
        d = direction(x)
        trace.append(f)
    return x, f, np.asarray(trace), used


def _random_unit_rank(rng: np.random.Generator, m: int, n: int, r: int) -> np.ndarray:
    x = rng.standard_normal((m, r)) @ rng.standard_normal((r, n))
    return x / np.linalg.norm(x)


def estimate_delta(op: LinearOperator, r: int, restarts: int = 16, iterations: int = 200,
                   seed: int = 0, threads: int = 1) -> RipEstimate:
    """Estimate the rank-``r`` isometry constant of ``op``.

    Exact for operators carrying ``exact_delta``; otherwise a multi-start
    ascent lower bound, deterministic for a given ``seed``.
    """
    r = _check_rank(op, r)
    seed = check_seed(seed)
    if restarts < 1 or iterations < 1:
        raise ValueError("restarts and iterations must be >= 1")
    if op.exact_delta is not None:
        w = np.zeros((op.m, op.n))
        w[0, 0] = 1.0
        return RipEstimate(r, float(op.exact_delta), EXACT, 0, 0, seed, w, "both")

    # margin keeps the lower-side surrogate convex despite the estimated norm
    shift = 1.01 * operator_norm(op, tol=1e-8) ** 2

    def run(restart: int):
        rng = rng_for(seed, "rip-ascent", restart)
        x0 = _random_unit_rank(rng, op.m, op.n, r)
        out = []
        for side in (1, -1):
            x, f, trace, used = _ascent(op, x0, r, side, 0.0 if side > 0 else shift, iterations)
            out.append((restart, side, x, trace, used))
        return out

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            runs = [item for chunk in pool.map(run, range(restarts)) for item in chunk]
    else:
        runs = [item for k in range(restarts) for item in run(k)]

    best = None
    total = 0
    for restart, side, x, trace, used in runs:
        total += used
        dev = abs(float(np.sum(apply(op, x) ** 2)) - 1.0)
        if best is None or dev > best[0]:
            best = (dev, side, x)
    dev, side, x = best
    return RipEstimate(r, dev, LOWER_BOUND, restarts, total, seed, x,
                       "upper" if side > 0 else "lower",
                       traces=[t for *_, t, _ in runs])


def estimate_deltas(op: LinearOperator, r_max: int, restarts: int = 16, iterations: int = 200,
                    seed: int = 0, threads: int = 1) -> list[RipEstimate]:
    """Estimates for ranks ``1..r_max``, made monotone in ``r`` by a running maximum.

    When an estimate is lifted to the previous rank's value it also inherits
    that witness, which has rank below ``r`` and so stays valid.
    """
    r_max = _check_rank(op, r_max)
    out: list[RipEstimate] = []
    for r in range(1, r_max + 1):
        est = estimate_delta(op, r, restarts, iterations, seed, threads)
        if out and est.delta < out[-1].delta:
            prev = out[-1]
            est = RipEstimate(r, prev.delta, est.certainty, est.restarts, est.iterations,
                              est.seed, prev.witness, prev.side, est.traces)
        out.append(est)
    return out


def random_sampling_bound(op: LinearOperator, r: int, samples: int, seed: int = 0,
                          batch: int = 20_000) -> float:
    """Largest ``| ||A(X)||^2 - 1 |`` over random unit rank-``r`` matrices."""
    r = _check_rank(op, r)
    rng = rng_for(seed, "rip-ascent", 2**31)
    best = 0.0
    done = 0
    while done < samples:
        k = min(batch, samples - done)
        a = rng.standard_normal((k, op.m, r))
        b = rng.standard_normal((k, r, op.n))
        x = (a @ b).reshape(k, -1)
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        vals = np.sum((x @ op.matrix.T) ** 2, axis=1)
        best = max(best, float(np.max(np.abs(vals - 1.0))))
        done += k
    return best


# --- orthogonal pairs ------------------------------------------------------

def orthogonal_pair(rng: np.random.Generator, m: int, n: int, r: int, r_prime: int,
                    retry_budget: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Random unit matrices of ranks ``<= r`` and ``<= r_prime`` with ``<X, X'> = 0``.

    ``X' = A2 B2^T`` is made orthogonal to ``X`` by projecting the first
    column of ``B2`` off the direction ``X^T a``, which keeps its rank.
    """
    for _ in range(retry_budget):
        x = rng.standard_normal((m, r)) @ rng.standard_normal((r, n))
        a2 = rng.standard_normal((m, r_prime))
        b2 = rng.standard_normal((n, r_prime))
        w = x.T @ a2[:, 0]
        ww = float(w @ w)
        if ww <= 1e-12 * np.linalg.norm(x) ** 2 * float(a2[:, 0] @ a2[:, 0]):
            continue
        scale = np.linalg.norm(a2) * np.linalg.norm(b2)
        c = inner(x, a2 @ b2.T)
        b2[:, 0] -= (c / ww) * w
        xp = a2 @ b2.T
        nx, nxp = np.linalg.norm(x), np.linalg.norm(xp)
        # projection can cancel xp down to rounding noise
        if nx == 0.0 or nxp <= 1e-8 * scale:
            continue
        return x / nx, xp / nxp
    raise LstarfError(f"could not draw a nondegenerate orthogonal pair in {retry_budget} attempts")


def orthogonal_pair_ratio(op: LinearOperator, x, xp) -> tuple[float, float]:
    """``|<A(X), A(X')>|`` and ``||X||_F ||X'||_F``."""
    lhs = abs(float(apply(op, x) @ apply(op, xp)))
    return lhs, float(np.linalg.norm(x) * np.linalg.norm(xp))


def check_orthogonal_pair_bound(op: LinearOperator, delta_upper: float, r: int, r_prime: int,
                                trials: int = 100, seed: int = 0, retry_budget: int = 100) -> dict:
    """Check ``|<A X, A X'>| <= delta_upper ||X|| ||X'||`` on random orthogonal pairs.

    ``delta_upper`` must be a trusted upper bound on ``delta_{r + r'}``; for
    operators without a closed-form constant it is taken on the caller's word.
    """
    _check_rank(op, r)
    _check_rank(op, r_prime)
    rng = rng_for(seed, "rip-pairs")
    max_ratio = 0.0
    max_excess = -np.inf
    violations = 0
    for _ in range(trials):
        x, xp = orthogonal_pair(rng, op.m, op.n, r, r_prime, retry_budget)
        lhs, scale = orthogonal_pair_ratio(op, x, xp)
        excess = lhs - (delta_upper * scale + 1e-10)
        max_excess = max(max_excess, excess)
        if excess > 0:
            violations += 1
        if scale > 0:
            max_ratio = max(max_ratio, lhs / scale)
    return {
        "r": r,
        "r_prime": r_prime,
        "delta_upper": float(delta_upper),
        "trials": trials,
        "max_ratio": max_ratio,
        "max_excess": float(max_excess),
        "violations": violations,
        "holds": violations == 0,
    }
