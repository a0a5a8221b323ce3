"""Linear measurement operators and recovery problem instances.

An operator maps an ``m x n`` matrix to a length-``l`` vector through a dense
``l x (m*n)`` array whose ``i``-th row is the row-major vectorization of the
``i``-th sensing matrix.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .matcore import as_matrix, lstar_f
from .mtx import atomic_write_text, read_mtx, write_mtx
from .seeding import check_seed, rng_for

KINDS = ("gaussian", "entry-sampling", "identity", "scaled-identity")
NOISE_KINDS = ("none", "gaussian-rescaled")


@dataclass(frozen=True, eq=False)
class LinearOperator:
    m: int
    n: int
    l: int
    kind: str
    matrix: np.ndarray
    seed: int = 0
    params: dict = field(default_factory=dict)
    # closed-form isometry constant, identical for every rank; None if unknown
    exact_delta: Optional[float] = None

    def __post_init__(self):
        if self.matrix.shape != (self.l, self.m * self.n):
            raise ValueError(
                f"dense representation has shape {self.matrix.shape}, "
                f"expected {(self.l, self.m * self.n)}"
            )
        self.matrix.setflags(write=False)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.m, self.n)

    def __call__(self, x) -> np.ndarray:
        return apply(self, x)

    def header(self) -> dict:
        return {
            "kind": self.kind,
            "m": self.m,
            "n": self.n,
            "l": self.l,
            "seed": self.seed,
            "params": self.params,
            "exact_delta": self.exact_delta,
        }


def build_operator(kind: str, m: int, n: int, l: int, seed: int = 0, params: Optional[dict] = None) -> LinearOperator:
    """Construct a measurement operator.

    ``params`` carries ``a`` for ``scaled-identity`` and optionally
    ``omega`` (flat row-major indices) for ``entry-sampling``; without
    ``omega`` the index set is drawn from the seed.
    """
    params = dict(params or {})
    seed = check_seed(seed)
    m, n, l = int(m), int(n), int(l)
    if min(m, n, l) < 1:
        raise ValueError(f"m, n, l must be >= 1, got {(m, n, l)}")
    mn = m * n
    exact = None
    if kind == "gaussian":
        rng = rng_for(seed, "gaussian")
        mat = rng.normal(0.0, 1.0 / np.sqrt(l), size=(l, mn))
    elif kind == "entry-sampling":
        if l > mn:
            raise ValueError(f"entry sampling needs l <= m*n, got l={l}, m*n={mn}")
        if "omega" in params:
            omega = np.asarray(params["omega"], dtype=np.int64)
            if omega.shape != (l,):
                raise ValueError(f"omega must have exactly l={l} indices")
            if np.unique(omega).size != l:
                raise ValueError("omega contains duplicate indices")
            if omega.min() < 0 or omega.max() >= mn:
                raise ValueError("omega index out of range")
        else:
            omega = np.sort(rng_for(seed, "entry-sampling").choice(mn, size=l, replace=False))
        params["omega"] = [int(i) for i in omega]
        mat = np.zeros((l, mn))
        mat[np.arange(l), omega] = 1.0
    elif kind == "identity":
        if l != mn:
            raise ValueError(f"identity operator needs l = m*n = {mn}, got {l}")
        mat = np.eye(mn)
        exact = 0.0
    elif kind == "scaled-identity":
        if l != mn:
            raise ValueError(f"scaled-identity operator needs l = m*n = {mn}, got {l}")
        a = float(params.get("a", float("nan")))
        if not 0.0 <= a < 1.0:
            raise ValueError(f"scaled-identity factor a must lie in [0, 1), got {a}")
        params["a"] = a
        mat = np.sqrt(1.0 + a) * np.eye(mn)
        exact = a
    else:
        raise ValueError(f"unknown operator kind {kind!r}; expected one of {KINDS}")
    return LinearOperator(m, n, l, kind, mat, seed, params, exact)


def apply(op: LinearOperator, x) -> np.ndarray:
    x = as_matrix(x)
    if x.shape != op.shape:
        raise ValueError(f"operator expects a {op.shape} matrix, got {x.shape}")
    return op.matrix @ x.reshape(-1)


def adjoint(op: LinearOperator, y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (op.l,):
        raise ValueError(f"adjoint expects a vector of length {op.l}, got shape {y.shape}")
    return (op.matrix.T @ y).reshape(op.m, op.n)


def gram_apply(op: LinearOperator, x: np.ndarray) -> np.ndarray:
    """``A*(A(x))`` without validation, for inner loops."""
    return (op.matrix.T @ (op.matrix @ x.reshape(-1))).reshape(op.m, op.n)


def operator_norm(op: LinearOperator, tol: float = 1e-10, max_iter: int = 100_000) -> float:
    """Largest singular value of the dense representation by power iteration on ``A*A``.

    Stops once the eigen-residual ``||A*A x - mu x||`` drops below
    ``tol * mu``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    mat = op.matrix
    x = rng_for(0, "power-iteration").standard_normal(mat.shape[1])
    x /= np.linalg.norm(x)
    mu = 0.0
    for _ in range(max_iter):
        z = mat.T @ (mat @ x)
        mu = float(x @ z)
        if mu <= 0.0:
            if not np.any(mat):
                return 0.0
            # start vector hit the null space
            x = np.ones(mat.shape[1]) / np.sqrt(mat.shape[1])
            continue
        if np.linalg.norm(z - mu * x) <= tol * mu:
            break
        x = z / np.linalg.norm(z)
    return float(np.sqrt(mu))


def random_low_rank(m: int, n: int, r: int, rng: np.random.Generator) -> np.ndarray:
    """Product of Gaussian ``m x r`` and ``r x n`` factors."""
    return rng.standard_normal((m, r)) @ rng.standard_normal((r, n))


@dataclass(eq=False)
class ProblemInstance:
    operator: LinearOperator
    b: np.ndarray
    x_true: Optional[np.ndarray] = None
    epsilon: float = 0.0
    s: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.b.shape != (self.operator.l,):
            raise ValueError(f"b must have length {self.operator.l}")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.x_true is not None:
            self.x_true = as_matrix(self.x_true)

    def residual(self, x) -> float:
        return float(np.linalg.norm(apply(self.operator, x) - self.b))

    def objective(self, x, lam: float) -> float:
        """Penalized objective ``||x||_* - ||x||_F + ||A(x) - b||^2 / (2 lam)``."""
        if lam <= 0:
            raise ValueError(f"lambda must be positive, got {lam}")
        return lstar_f(x).difference + self.residual(x) ** 2 / (2.0 * lam)


def make_instance(op: LinearOperator, x_true, noise_kind: str = "none", epsilon: float = 0.0, seed: int = 0) -> ProblemInstance:
    """Assemble ``b = A(x_true) + s`` with ``||s||_2 = epsilon`` for Gaussian-rescaled noise."""
    if epsilon < 0:
        raise ValueError(f"epsilon must be nonnegative, got {epsilon}")
    if noise_kind not in NOISE_KINDS:
        raise ValueError(f"unknown noise kind {noise_kind!r}; expected one of {NOISE_KINDS}")
    x_true = as_matrix(x_true)
    clean = apply(op, x_true)
    if noise_kind == "none" or epsilon == 0:
        s = np.zeros(op.l)
        epsilon = 0.0
    else:
        g = rng_for(seed, "noise").standard_normal(op.l)
        s = float(epsilon) * g / np.linalg.norm(g)
    meta = {"noise_kind": noise_kind, "seed": check_seed(seed)}
    return ProblemInstance(op, clean + s, x_true, float(epsilon), s, meta)


# --- serialization ---------------------------------------------------------

def save_operator(op: LinearOperator, path) -> None:
    """JSON header at ``path`` plus the dense representation as ``<stem>.mtx``."""
    path = Path(path)
    mtx_path = path.with_suffix(".mtx")
    write_mtx(mtx_path, op.matrix)
    header = op.header()
    header["matrix_file"] = mtx_path.name
    atomic_write_text(path, json.dumps(header, indent=2, sort_keys=True) + "\n")


def load_operator(path) -> LinearOperator:
    path = Path(path)
    header = json.loads(path.read_text())
    mat = read_mtx(path.parent / header["matrix_file"])
    return LinearOperator(
        int(header["m"]), int(header["n"]), int(header["l"]), header["kind"], mat,
        int(header["seed"]), dict(header.get("params") or {}), header.get("exact_delta"),
    )


def save_instance(inst: ProblemInstance, path, operator_file: Optional[str] = None) -> None:
    """Write the instance JSON; the operator and ``x_true`` go to sibling files."""
    path = Path(path)
    stem = path.name[: -len(".json")] if path.name.endswith(".json") else path.name
    if operator_file is None:
        operator_file = f"{stem}.operator.json"
        save_operator(inst.operator, path.parent / operator_file)
    doc: dict[str, Any] = {
        "operator_file": operator_file,
        "b": [float(v) for v in inst.b],
        "epsilon": inst.epsilon,
        "s": None if inst.s is None else [float(v) for v in inst.s],
        "x_true_file": None,
        "meta": inst.meta,
    }
    if inst.x_true is not None:
        doc["x_true_file"] = f"{stem}.xtrue.mtx"
        write_mtx(path.parent / doc["x_true_file"], inst.x_true)
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_instance(path) -> ProblemInstance:
    path = Path(path)
    doc = json.loads(path.read_text())
    op = load_operator(path.parent / doc["operator_file"])
    x_true = read_mtx(path.parent / doc["x_true_file"]) if doc.get("x_true_file") else None
    s = None if doc.get("s") is None else np.asarray(doc["s"], dtype=np.float64)
    return ProblemInstance(op, np.asarray(doc["b"], dtype=np.float64), x_true,
                           float(doc["epsilon"]), s, dict(doc.get("meta") or {}))
