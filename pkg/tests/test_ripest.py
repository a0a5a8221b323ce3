import numpy as np
import pytest

from lstarf.errors import LstarfError
from lstarf.measure import build_operator
from lstarf.ripest import (
    EXACT,
    LOWER_BOUND,
    check_orthogonal_pair_bound,
    estimate_delta,
    estimate_deltas,
    orthogonal_pair,
    random_sampling_bound,
    save_estimate,
)
from lstarf.seeding import rng_for


def test_exact_operators_report_exact():
    for kind, params, val in (("identity", {}, 0.0), ("scaled-identity", {"a": 0.3}, 0.3)):
        est = estimate_delta(build_operator(kind, 3, 3, 9, params=params), 2)
        assert est.certainty == EXACT and est.delta == val


def test_estimate_is_witnessed_lower_bound():
    op = build_operator("gaussian", 5, 4, 15, seed=1)
    est = estimate_delta(op, 2, restarts=4, iterations=60, seed=2)
    assert est.certainty == LOWER_BOUND
    assert np.linalg.norm(est.witness) == pytest.approx(1.0, abs=1e-12)
    assert np.linalg.matrix_rank(est.witness, tol=1e-9) <= 2
    assert est.deviation(op) == pytest.approx(est.delta, abs=1e-12)


def test_estimate_deterministic_and_thread_invariant():
    op = build_operator("gaussian", 5, 4, 15, seed=1)
    a = estimate_delta(op, 1, restarts=4, iterations=40, seed=3)
    b = estimate_delta(op, 1, restarts=4, iterations=40, seed=3, threads=3)
    assert a.delta == b.delta and np.array_equal(a.witness, b.witness)


def test_estimate_dominates_sampling():
    op = build_operator("gaussian", 5, 5, 20, seed=4)
    est = estimate_delta(op, 2, restarts=6, iterations=80, seed=4)
    assert est.delta >= random_sampling_bound(op, 2, 20_000, seed=4)


def test_estimates_monotone_in_rank():
    op = build_operator("gaussian", 4, 4, 12, seed=7)
    ests = estimate_deltas(op, 4, restarts=2, iterations=30, seed=0)
    deltas = [e.delta for e in ests]
    assert deltas == sorted(deltas)
    for e in ests:
        assert e.deviation(op) == pytest.approx(e.delta, abs=1e-12)


def test_invalid_rank_and_budget():
    op = build_operator("gaussian", 3, 2, 6)
    with pytest.raises(ValueError):
        estimate_delta(op, 3)
    with pytest.raises(ValueError):
        estimate_delta(op, 0)
    with pytest.raises(ValueError):
        estimate_delta(op, 1, restarts=0)


def test_orthogonal_pair_properties():
    rng = rng_for(0, "rip-pairs")
    for r, rp in ((1, 1), (2, 1), (2, 3)):
        x, xp = orthogonal_pair(rng, 6, 5, r, rp)
        assert abs(np.sum(x * xp)) <= 1e-12
        assert np.linalg.norm(x) == pytest.approx(1.0) and np.linalg.norm(xp) == pytest.approx(1.0)
        assert np.linalg.matrix_rank(x, tol=1e-9) <= r
        assert np.linalg.matrix_rank(xp, tol=1e-9) <= rp


def test_orthogonal_pair_retry_budget():
    # a 1x1 space has no nonzero orthogonal pair
    with pytest.raises(LstarfError):
        orthogonal_pair(np.random.default_rng(0), 1, 1, 1, 1, retry_budget=5)


def test_orthogonal_pair_bound_exact_operators():
    for a in (0.0, 0.2):
        op = build_operator("scaled-identity", 4, 4, 16, params={"a": a})
        rep = check_orthogonal_pair_bound(op, a, 1, 2, trials=30)
        assert rep["holds"] and rep["violations"] == 0
    # a deliberately too-small constant is caught on a Gaussian operator
    op = build_operator("gaussian", 4, 4, 10, seed=0)
    assert not check_orthogonal_pair_bound(op, 0.0, 1, 1, trials=30)["holds"]


def test_save_estimate(tmp_path):
    op = build_operator("gaussian", 3, 3, 9, seed=0)
    est = estimate_delta(op, 1, restarts=2, iterations=10)
    save_estimate(est, tmp_path / "rip.json")
    assert (tmp_path / "rip.json").exists()
    assert (tmp_path / "rip.witness.mtx").exists()


def test_ascent_dominates_large_sample_same_run():
    op = build_operator("gaussian", 6, 6, 72, seed=0)
    est = estimate_delta(op, 1, restarts=64, iterations=200, seed=0)
    assert random_sampling_bound(op, 1, 100_000, seed=0) <= est.delta + 1e-9


def test_ascent_traces_nondecreasing():
    op = build_operator("gaussian", 5, 4, 15, seed=2)
    est = estimate_delta(op, 2, restarts=3, iterations=50, seed=1)
    assert len(est.traces) == 6
    for tr in est.traces:
        assert np.all(np.diff(tr) >= 0)


def test_orthogonal_pair_ratios_for_exact_operators():
    ident = build_operator("identity", 4, 4, 16)
    assert check_orthogonal_pair_bound(ident, 0.0, 2, 1, trials=30)["max_ratio"] <= 1e-10
    sc = build_operator("scaled-identity", 4, 4, 16, params={"a": 0.2})
    assert check_orthogonal_pair_bound(sc, 0.2, 1, 1, trials=30)["max_ratio"] <= 0.2 + 1e-12
