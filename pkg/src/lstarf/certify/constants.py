"""Closed-form recovery constants and isometry thresholds.

Every function here is a direct formula evaluation.  Results carry a list of
:class:`Constant` records (name, formula text, inputs, value) so reports can
show exactly how each number was obtained.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

from ..errors import LstarfError

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class Constant:
    name: str
    formula: str
    inputs: dict
    value: Optional[float]

    def to_dict(self) -> dict:
        return asdict(self)


# --- block-size combinatorics ----------------------------------------------

def mn_min_max(r: int, k: int) -> int:
    """``max(r + ceil(3k/2), 2k)``: the smallest RIP order covering both block pairs."""
    if r < 1 or k < 1:
        raise ValueError(f"r and k must be >= 1, got r={r}, k={k}")
    return max(r + (3 * k + 1) // 2, 2 * k)


def mn_min_max_bruteforce(r: int, k: int, max_r: int = 64) -> int:
    """Exhaustive ``min max(m1+n1+k, m2+n2+2k)`` over ``m1+m2 = n1+n2 = r``."""
    if r < 1 or k < 1:
        raise ValueError(f"r and k must be >= 1, got r={r}, k={k}")
    if r > max_r:
        raise LstarfError(f"enumeration budget exceeded: r={r} > {max_r}")
    best = None
    for m1 in range(r + 1):
        for n1 in range(r + 1):
            val = max(m1 + n1 + k, (r - m1) + (r - n1) + 2 * k)
            if best is None or val < best:
                best = val
    return best


def block_split(r: int, k: int) -> tuple[int, int, int, int]:
    """Block sizes ``(m1, m2, n1, n2)`` attaining :func:`mn_min_max`.

    For ``k >= 2r`` all of the rank-``r`` part goes to the first block;
    otherwise the ceiling formulas from the constructive argument are used.
    """
    if k >= 2 * r:
        return r, 0, r, 0
    if k % 2:
        c = -(-(2 * r + k + 1) // 4)  # ceil(r/2 + k/4 + 1/4)
        m1 = c
        n1 = r + (k + 1) // 2 - c
        n2 = c - (k + 1) // 2
    else:
        c = -(-(2 * r + k) // 4)  # ceil(r/2 + k/4)
        m1 = c
        n1 = r + k // 2 - c
        n2 = c - k // 2
    return m1, r - m1, n1, n2


# --- constrained problem ----------------------------------------------------

@dataclass(frozen=True)
class ConstrainedBoundParams:
    r: int
    k: int
    delta_2r_plus_k: float
    delta_big: float
    epsilon: float = 0.0

    def __post_init__(self):
        if self.r < 1:
            raise ValueError(f"r must be >= 1, got {self.r}")
        if self.k < 2:
            raise ValueError(f"k must be >= 2 (sqrt(k) - 1 > 0), got {self.k}")
        for name in ("delta_2r_plus_k", "delta_big"):
            d = getattr(self, name)
            if not 0.0 <= d < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {d}")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")

    @property
    def big_order(self) -> int:
        return mn_min_max(self.r, self.k)


@dataclass
class ConstrainedConstants:
    beta: float
    alpha: Optional[float]
    alpha_bar: Optional[float]
    hypothesis_ok: bool
    provenance: list = field(default_factory=list)


def constrained_constants(p: ConstrainedBoundParams) -> ConstrainedConstants:
    r, k = p.r, p.k
    d1, d2 = p.delta_2r_plus_k, p.delta_big
    s2r, sk = math.sqrt(2 * r), math.sqrt(k)
    inputs = {"r": r, "k": k, "delta_2r_plus_k": d1, "delta_big": d2,
              "big_order": p.big_order}
    beta = SQRT2 * d2 * (s2r + 1) / ((1 - d1) * (sk - 1))
    ok = beta < 1 and d1 < 1
    alpha = alpha_bar = None
    if ok:
        alpha = (2 * (s2r + 1) + 2 * beta * (sk - 1)) / ((sk - 1) * (1 - beta) * (s2r + 1))
        alpha_bar = 2 * (sk + s2r) * math.sqrt(1 + d1) / ((sk - 1) * (1 - beta) * (1 - d1))
    prov = [
        Constant("beta", "sqrt(2)*delta_big*(sqrt(2r)+1) / ((1-delta_2r_plus_k)*(sqrt(k)-1))", inputs, beta),
        Constant("alpha", "(2(sqrt(2r)+1) + 2 beta (sqrt(k)-1)) / ((sqrt(k)-1)(1-beta)(sqrt(2r)+1))",
                 {**inputs, "beta": beta}, alpha),
        Constant("alpha_bar", "2(sqrt(k)+sqrt(2r)) sqrt(1+delta_2r_plus_k) / ((sqrt(k)-1)(1-beta)(1-delta_2r_plus_k))",
                 {**inputs, "beta": beta}, alpha_bar),
    ]
    return ConstrainedConstants(beta, alpha, alpha_bar, ok, prov)


def delta4r_threshold(r: int) -> float:
    """Largest ``delta_4r`` admitted by the ``k = 2r`` specialization."""
    if r < 1:
        raise ValueError(f"r must be >= 1, got {r}")
    s = math.sqrt(2 * r)
    return (s - 1) / (s - 1 + SQRT2 * (s + 1))


def alpha_hat(r: int, delta_4r: float) -> Optional[float]:
    """Error constant of the ``k = 2r`` specialization; ``None`` above the threshold."""
    if r < 1:
        raise ValueError(f"r must be >= 1, got {r}")
    s = math.sqrt(2 * r)
    den = (s - 1) - ((s - 1) + SQRT2 * (s + 1)) * delta_4r
    if den <= 0:
        return None
    return (2 + (2 * SQRT2 - 2) * delta_4r) / den


# --- regularized problem ---------------------------------------------------

@dataclass
class RegularizedConstants:
    t: int
    k: int
    delta_tk: float
    eta: float
    theta_k: float
    threshold: float
    beta1: float
    gamma1: float
    beta1_hat: float
    gamma1_hat: float
    xi1: float
    kappa1: float
    C1: Optional[float]
    C2: Optional[float]
    hypothesis_ok: bool
    provenance: list = field(default_factory=list)


def tail_bound_constants(t: int, delta_tk: float) -> tuple[float, float]:
    """``(beta1, gamma1)`` bounding the top singular values of any matrix by its tail."""
    if int(t) != t or t <= 1:
        raise ValueError(f"t must be an integer > 1, got {t}")
    if not 0.0 <= delta_tk < 1.0:
        raise ValueError(f"delta_tk must lie in [0, 1), got {delta_tk}")
    d = float(delta_tk)
    return d / math.sqrt((t - 1) * (1 - d * d)), 2.0 / ((1 - d) * math.sqrt(1 + d))


def theta_k(k: int) -> float:
    if k < 6:
        raise ValueError(f"k must be >= 6, got {k}")
    sk = math.sqrt(k)
    return (sk + SQRT2 - 1) / (sk - SQRT2 - 1)


def regularized_constants(t: int, k: int, delta_tk: float, eta: float = 0.0) -> RegularizedConstants:
    """All constants of the regularized error bound ``C1 ||X||_* + C2 lambda``.

    ``eta`` is the noise-to-penalty ratio ``epsilon / lambda``.
    """
    if int(t) != t or t <= 1:
        raise ValueError(f"t must be an integer > 1, got {t}")
    if int(k) != k or k < 6:
        raise ValueError(f"k must be an integer >= 6, got {k}")
    if not 0.0 <= delta_tk < 1.0:
        raise ValueError(f"delta_tk must lie in [0, 1), got {delta_tk}")
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    t, k = int(t), int(k)
    sk = math.sqrt(k)
    th = theta_k(k)
    threshold = math.sqrt((t - 1) / (t + th * th - 1))
    d = delta_tk
    beta1, gamma1 = tail_bound_constants(t, d)
    beta1_hat = (SQRT2 - 1) * beta1 + 1
    gamma1_hat = sk * gamma1 + eta
    xi1 = math.sqrt(2 * k) * gamma1 + beta1_hat * eta
    kappa1 = 1 - (beta1_hat * gamma1_hat + xi1) / (sk * (1 - beta1) * gamma1_hat)
    ok = d < threshold and kappa1 > 0 and beta1 < 1
    c1 = c2 = None
    if ok:
        c1 = 2 * (beta1_hat * gamma1_hat + xi1) / (sk * (1 - beta1) * gamma1_hat * kappa1)
        c2 = 2 * xi1 * gamma1_hat / (sk * (1 - beta1) * kappa1)
    base = {"t": t, "k": k, "delta_tk": d, "eta": eta}
    prov = [
        Constant("theta_k", "(sqrt(k)+sqrt(2)-1)/(sqrt(k)-sqrt(2)-1)", {"k": k}, th),
        Constant("threshold", "sqrt((t-1)/(t+theta_k^2-1))", {"t": t, "theta_k": th}, threshold),
        Constant("beta1", "delta_tk/sqrt((t-1)(1-delta_tk^2))", base, beta1),
        Constant("gamma1", "2/((1-delta_tk) sqrt(1+delta_tk))", base, gamma1),
        Constant("beta1_hat", "(sqrt(2)-1) beta1 + 1", {"beta1": beta1}, beta1_hat),
        Constant("gamma1_hat", "sqrt(k) gamma1 + eta", {"k": k, "gamma1": gamma1, "eta": eta}, gamma1_hat),
        Constant("xi1", "sqrt(2k) gamma1 + beta1_hat eta",
                 {"k": k, "gamma1": gamma1, "beta1_hat": beta1_hat, "eta": eta}, xi1),
        Constant("kappa1", "1 - (beta1_hat gamma1_hat + xi1)/(sqrt(k)(1-beta1) gamma1_hat)",
                 {"k": k, "beta1": beta1, "beta1_hat": beta1_hat, "gamma1_hat": gamma1_hat, "xi1": xi1}, kappa1),
        Constant("C1", "2(beta1_hat gamma1_hat + xi1)/(sqrt(k)(1-beta1) gamma1_hat kappa1)",
                 {"kappa1": kappa1}, c1),
        Constant("C2", "2 xi1 gamma1_hat/(sqrt(k)(1-beta1) kappa1)", {"kappa1": kappa1}, c2),
    ]
    return RegularizedConstants(t, k, d, eta, th, threshold, beta1, gamma1, beta1_hat,
                                gamma1_hat, xi1, kappa1, c1, c2, ok, prov)


def suggest_lambdas(epsilon: float) -> list[float]:
    """Penalty weights around the noise level: ``epsilon/2, epsilon, 2*epsilon``."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive to suggest a penalty weight")
    return [epsilon / 2, epsilon, 2 * epsilon]
