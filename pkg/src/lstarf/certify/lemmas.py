"""Brute-force checks of the auxiliary inequalities.

Each check returns a plain dict with the two sides and their slack
(``upper - lower``; nonnegative means the inequality holds).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import InfeasibleInputError, NumericalFailure
from ..matcore import RANK_RTOL, numerical_rank, singular_values

SLACK_TOL = 1e-9
ALGEBRA_TOL = 1e-12


# --- nuclear-minus-Frobenius sandwich bounds ------------------------------

def lstar_f_bounds(x) -> dict:
    """Lower and upper bounds on ``||X||_* - ||X||_F`` in terms of the spectrum.

    With ``t = min(m, n)`` and ``r`` the numerical rank:

    * full-index bounds ``(t - sqrt t) sigma_t <= L <= (sqrt t - 1) ||X||_F``
    * rank bounds ``(r - sqrt r) sigma_r <= L <= (sqrt r - 1) ||X||_F``
    * coarse rank bound ``(r - 1)/2 * min_{i <= r} sigma_i <= L``
    * ``L == 0`` exactly when ``r == 1``
    """
    s = singular_values(x)
    t = s.size
    nuc, fro = float(np.sum(s)), float(np.linalg.norm(s))
    diff = nuc - fro
    r = numerical_rank(s, RANK_RTOL)
    out = {"t": t, "rank": r, "value": diff}
    out["full_lower_slack"] = diff - (t - math.sqrt(t)) * float(s[-1])
    out["full_upper_slack"] = (math.sqrt(t) - 1) * fro - diff
    if r >= 1:
        sr = float(s[r - 1])
        out["rank_lower_slack"] = diff - (r - math.sqrt(r)) * sr
        out["rank_upper_slack"] = (math.sqrt(r) - 1) * fro - diff
        out["coarse_lower_slack"] = diff - (r - 1) / 2 * sr
    else:
        out["rank_lower_slack"] = out["rank_upper_slack"] = out["coarse_lower_slack"] = -diff
    out["min_slack"] = min(v for k, v in out.items() if k.endswith("_slack"))
    return out


# --- sparse representation of a polytope -----------------------------------

@dataclass
class PolytopeDecomposition:
    atoms: list  # (weight, vector) pairs
    alpha: float
    s: int
    v: np.ndarray = field(repr=False, default=None)

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.atoms])

    def reconstruct(self) -> np.ndarray:
        return sum(w * u for w, u in self.atoms)

    def check(self, tol: float = ALGEBRA_TOL) -> dict:
        """Membership and reconstruction residuals; ``ok`` when all are within ``tol``."""
        v = self.v
        l1 = float(np.sum(np.abs(v)))
        off_support = 0.0
        max_card = 0
        l1_err = 0.0
        linf_excess = -np.inf
        for _, u in self.atoms:
            off_support = max(off_support, float(np.max(np.abs(u[v == 0]), initial=0.0)))
            max_card = max(max_card, int(np.count_nonzero(u)))
            l1_err = max(l1_err, abs(float(np.sum(np.abs(u))) - l1))
            linf_excess = max(linf_excess, float(np.max(np.abs(u), initial=0.0)) - self.alpha)
        w = self.weights
        rep = {
            "n_atoms": len(self.atoms),
            "weight_sum_error": abs(float(np.sum(w)) - 1.0),
            "min_weight": float(np.min(w)),
            "reconstruction_error": float(np.max(np.abs(self.reconstruct() - v), initial=0.0)),
            "off_support": off_support,
            "max_cardinality": max_card,
            "l1_error": l1_err,
            "linf_excess": float(linf_excess),
        }
        rep["ok"] = (
            rep["weight_sum_error"] <= tol
            and rep["min_weight"] >= -tol
            and float(np.max(w)) <= 1 + tol
            and rep["reconstruction_error"] <= tol
            and off_support == 0.0
            and max_card <= self.s
            and l1_err <= tol
            and rep["linf_excess"] <= tol
        )
        return rep


def _peel_atom(w: np.ndarray, alpha: float, kk: int, f: float) -> tuple[np.ndarray, np.ndarray]:
    """Atom with ``alpha`` on the ``kk`` largest entries of ``w`` and ``f`` on the next one."""
    order = np.argsort(-w, kind="stable")
    u = np.zeros_like(w)
    u[order[:kk]] = alpha
    if f > 0:
        u[order[kk]] = f
    return u, order


def polytope_decompose(v, alpha: float, s: int, snap: float = 1e-14) -> PolytopeDecomposition:
    """Write ``v`` in ``T(alpha, s)`` as a convex combination of sparse atoms.

    An ``s``-sparse ``v`` is returned as its own single atom.  Otherwise
    works on ``|v|`` restricted to its support.  Every atom places ``alpha``
    on the ``K = floor(||v||_1 / alpha)`` largest residual entries and the
    remainder on the next one, so it is ``s``-sparse with the same l1 mass.
    At each step the largest weight keeping the rescaled residual inside the
    box ``[0, alpha]`` is taken; that pins one more residual entry to 0 or
    ``alpha`` (or turns the residual into an atom), so at most ``p + 1``
    atoms are produced for a support of size ``p``.
    """
    v = np.asarray(v, dtype=np.float64).ravel()
    if alpha <= 0 or int(s) != s or s < 1:
        raise ValueError("alpha must be positive and s a positive integer")
    s = int(s)
    if not np.all(np.isfinite(v)):
        raise InfeasibleInputError("v has non-finite entries")
    linf, l1 = float(np.max(np.abs(v), initial=0.0)), float(np.sum(np.abs(v)))
    if linf > alpha * (1 + ALGEBRA_TOL) or l1 > s * alpha * (1 + ALGEBRA_TOL):
        raise InfeasibleInputError(
            f"v is not in T(alpha={alpha}, s={s}): ||v||_inf={linf}, ||v||_1={l1}"
        )
    supp = np.flatnonzero(v)
    if supp.size <= s:
        # already an atom
        return PolytopeDecomposition([(1.0, np.clip(v, -alpha, alpha))], alpha, s, v)

    sign = np.sign(v[supp])
    w = np.minimum(np.abs(v[supp]), alpha)
    p = supp.size
    total = float(np.sum(w))
    kk = int(math.floor(total / alpha))
    f = total - kk * alpha
    if f <= snap * alpha:
        f = 0.0
    elif alpha - f <= snap * alpha:
        kk, f = kk + 1, 0.0
    if kk >= p:
        kk, f = p, 0.0

    # peel in unnormalized form: ``res`` is what remains of ``|v|`` after the
    # atoms so far, carrying total weight ``rho``; rescaling only happens
    # when forming ``w = res / rho``, so rounding never compounds
    res = w.copy()
    rho = 1.0
    pieces = []  # (weight, atom)
    for _ in range(p + 2):
        w = np.clip(res / rho, 0.0, alpha)
        w[w <= snap * alpha] = 0.0
        w[alpha - w <= snap * alpha] = alpha
        u, order = _peel_atom(w, alpha, kk, f)
        if rho * float(np.max(np.abs(w - u))) <= 1e-13 * alpha:
            pieces.append((rho, u))
            break
        pos = u > 0
        lam = min(1.0, float(np.min(w[pos] / u[pos])))
        if f > 0:
            j = order[kk]
            lam = min(lam, (alpha - w[j]) / (alpha - f))
        zero = ~pos
        if np.any(zero):
            lam = min(lam, float(np.min(1.0 - w[zero] / alpha)))
        if lam >= 1.0:
            pieces.append((rho, u))
            break
        if lam <= 0.0:
            raise NumericalFailure("polytope peeling made no progress")
        weight = rho * lam
        pieces.append((weight, u))
        res = res - weight * u
        rho -= weight
    else:
        raise NumericalFailure("polytope peeling exceeded its atom budget")

    atoms = []
    for weight, u in pieces:
        full = np.zeros_like(v)
        full[supp] = sign * u
        atoms.append((weight, full))
    return PolytopeDecomposition(atoms, alpha, s, v)


# --- power-sum comparison --------------------------------------------------

def power_sum_check(a, r: int, eta: float, alpha_exp: float) -> dict:
    """Compare the tail power sum of a sorted vector with its head.

    Checks ``sum_{j>r} a_j^p <= r * ((sum_{i<=r} a_i^p / r)^(1/p) + eta/r)^p``
    for ``p = alpha_exp``, assuming ``sum_{i<=r} a_i + eta >= sum_{j>r} a_j``.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    if int(r) != r or not 1 <= r <= a.size:
        raise ValueError(f"r must be an integer in [1, {a.size}], got {r}")
    r = int(r)
    if alpha_exp < 1 or eta < 0:
        raise ValueError("alpha_exp must be >= 1 and eta >= 0")
    if np.any(a < 0) or np.any(np.diff(a) > 0):
        raise InfeasibleInputError("a must be nonnegative and sorted nonincreasing")
    head, tail = a[:r], a[r:]
    if float(np.sum(head)) + eta < float(np.sum(tail)) * (1 - ALGEBRA_TOL):
        raise InfeasibleInputError("head sum plus eta is below the tail sum")
    lhs = float(np.sum(tail ** alpha_exp))
    rhs = r * ((float(np.sum(head ** alpha_exp)) / r) ** (1.0 / alpha_exp) + eta / r) ** alpha_exp
    slack = rhs + 1e-10 - lhs
    return {"lhs": lhs, "rhs": rhs, "slack": slack, "holds": slack >= 0}
