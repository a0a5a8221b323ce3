import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lstarf.measure import (
    adjoint,
    apply,
    build_operator,
    gram_apply,
    load_instance,
    load_operator,
    make_instance,
    operator_norm,
    random_low_rank,
    save_instance,
    save_operator,
)
from lstarf.mtx import read_mtx, write_mtx
from lstarf.seeding import check_seed, hash64, rng_for


def _op(kind, m=4, n=3, l=12, seed=0, params=None):
    return build_operator(kind, m, n, l, seed, params)


@pytest.mark.parametrize("kind,l,params", [
    ("gaussian", 7, None), ("entry-sampling", 5, None), ("identity", 12, None),
    ("scaled-identity", 12, {"a": 0.3}),
])
def test_adjoint_identity(kind, l, params):
    op = _op(kind, l=l, params=params)
    rng = np.random.default_rng(0)
    for _ in range(10):
        x, y = rng.standard_normal((4, 3)), rng.standard_normal(l)
        assert apply(op, x) @ y == pytest.approx(np.sum(x * adjoint(op, y)), rel=1e-12, abs=1e-12)
        np.testing.assert_allclose(gram_apply(op, x), adjoint(op, apply(op, x)), atol=1e-12)


@given(st.integers(0, 2**64 - 1), st.integers(1, 5), st.integers(1, 5), st.integers(1, 20))
def test_operator_norm_matches_lapack(seed, m, n, l):
    op = build_operator("gaussian", m, n, l, seed)
    assert operator_norm(op) == pytest.approx(np.linalg.norm(op.matrix, 2), rel=1e-8)


def test_operator_norm_special_cases():
    assert operator_norm(_op("scaled-identity", params={"a": 0.44})) == pytest.approx(1.2, abs=1e-12)
    assert operator_norm(_op("identity")) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        operator_norm(_op("identity"), tol=0.0)


def test_exact_deltas_and_closed_forms():
    assert _op("identity").exact_delta == 0.0
    sc = _op("scaled-identity", params={"a": 0.25})
    assert sc.exact_delta == 0.25
    x = np.arange(12.0).reshape(4, 3)
    assert np.sum(apply(sc, x) ** 2) == pytest.approx(1.25 * np.sum(x ** 2))
    assert _op("gaussian").exact_delta is None


def test_entry_sampling_selects_entries():
    op = _op("entry-sampling", l=5, params={"omega": [0, 4, 5, 7, 11]})
    x = np.arange(12.0).reshape(4, 3)
    np.testing.assert_array_equal(apply(op, x), [0, 4, 5, 7, 11])
    drawn = _op("entry-sampling", l=6, seed=3)
    assert len(set(drawn.params["omega"])) == 6


@pytest.mark.parametrize("kind,l,params", [
    ("identity", 11, None), ("scaled-identity", 12, {"a": 1.0}), ("scaled-identity", 12, None),
    ("entry-sampling", 13, None), ("entry-sampling", 3, {"omega": [1, 1, 2]}),
    ("entry-sampling", 2, {"omega": [0, 12]}), ("nope", 12, None), ("gaussian", 0, None),
])
def test_build_operator_rejects(kind, l, params):
    with pytest.raises(ValueError):
        _op(kind, l=l, params=params)


def test_gaussian_operator_is_seeded():
    a, b, c = _op("gaussian", seed=5), _op("gaussian", seed=5), _op("gaussian", seed=6)
    assert np.array_equal(a.matrix, b.matrix)
    assert not np.array_equal(a.matrix, c.matrix)


def test_shape_validation():
    op = _op("gaussian")
    with pytest.raises(ValueError):
        apply(op, np.zeros((3, 4)))
    with pytest.raises(ValueError):
        adjoint(op, np.zeros(5))


def test_noise_has_exact_norm():
    op = _op("gaussian")
    x = random_low_rank(4, 3, 1, rng_for(0, "ground-truth"))
    inst = make_instance(op, x, "gaussian-rescaled", 0.37, seed=2)
    assert np.linalg.norm(inst.s) == pytest.approx(0.37, rel=1e-14)
    assert inst.residual(x) == pytest.approx(0.37, rel=1e-12)
    clean = make_instance(op, x)
    assert clean.epsilon == 0.0 and not np.any(clean.s)
    with pytest.raises(ValueError):
        make_instance(op, x, "laplace", 0.1)
    with pytest.raises(ValueError):
        make_instance(op, x, "gaussian-rescaled", -1.0)


def test_objective():
    op = _op("identity")
    x = np.zeros((4, 3))
    x[0, 0] = x[1, 1] = 1.0
    inst = make_instance(op, x)
    assert inst.objective(x, 1.0) == pytest.approx(2 - np.sqrt(2))
    assert inst.objective(np.zeros((4, 3)), 0.5) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        inst.objective(x, 0.0)


def test_random_low_rank_rank():
    x = random_low_rank(6, 5, 2, rng_for(1, "ground-truth"))
    assert np.linalg.matrix_rank(x) == 2


@pytest.mark.parametrize("kind,l,params", [
    ("gaussian", 7, None), ("entry-sampling", 5, None), ("scaled-identity", 12, {"a": 0.1}),
])
def test_operator_round_trip(tmp_path, kind, l, params):
    op = _op(kind, l=l, params=params)
    save_operator(op, tmp_path / "op.json")
    back = load_operator(tmp_path / "op.json")
    assert np.array_equal(back.matrix, op.matrix)
    assert (back.kind, back.exact_delta, back.params) == (op.kind, op.exact_delta, op.params)


def test_instance_round_trip(tmp_path):
    op = _op("gaussian")
    x = random_low_rank(4, 3, 2, rng_for(0, "ground-truth"))
    inst = make_instance(op, x, "gaussian-rescaled", 0.1, seed=9)
    save_instance(inst, tmp_path / "inst.json")
    back = load_instance(tmp_path / "inst.json")
    assert np.array_equal(back.b, inst.b)
    assert np.array_equal(back.x_true, inst.x_true)
    assert np.array_equal(back.s, inst.s)
    assert back.epsilon == inst.epsilon and back.meta == inst.meta


def test_mtx_round_trip_exact(tmp_path):
    x = np.random.default_rng(0).standard_normal((5, 3)) * 1e-7
    write_mtx(tmp_path / "x.mtx", x)
    assert (tmp_path / "x.mtx").read_text().startswith("%%MatrixMarket matrix array real general")
    assert np.array_equal(read_mtx(tmp_path / "x.mtx"), x)
    # symmetric input must still be written in general form
    write_mtx(tmp_path / "i.mtx", np.eye(3))
    assert np.array_equal(read_mtx(tmp_path / "i.mtx"), np.eye(3))


def test_mtx_rejects_other_formats(tmp_path):
    p = tmp_path / "bad.mtx"
    p.write_text("%%MatrixMarket matrix coordinate real general\n1 1 1\n1 1 1.0\n")
    with pytest.raises(ValueError):
        read_mtx(p)


def test_seed_validation_and_streams():
    assert check_seed(2**64 - 1) == 2**64 - 1
    for bad in (-1, 2**64, 1.5, True):
        with pytest.raises(ValueError):
            check_seed(bad)
    a = rng_for(7, "noise").standard_normal(4)
    assert np.array_equal(a, rng_for(7, "noise").standard_normal(4))
    assert not np.array_equal(a, rng_for(7, "gaussian").standard_normal(4))
    assert not np.array_equal(a, rng_for(7, "noise", 1).standard_normal(4))


def test_hash64_stable_and_type_aware():
    assert hash64(1, 2.0, "x") == hash64(1, 2.0, "x")
    assert hash64(1) != hash64(1.0)
    assert hash64("ab", "c") != hash64("a", "bc")
    assert 0 <= hash64(3) < 2**64


def test_linearity_and_identity_isometry():
    rng = np.random.default_rng(11)
    for kind, l in (("gaussian", 9), ("entry-sampling", 6), ("identity", 12)):
        op = _op(kind, l=l)
        for _ in range(10):
            x, y = rng.standard_normal((2, 4, 3))
            a, b = rng.standard_normal(2)
            np.testing.assert_allclose(apply(op, a * x + b * y), a * apply(op, x) + b * apply(op, y), atol=1e-10)
        assert not np.any(apply(op, np.zeros((4, 3))))
    ident = _op("identity")
    for r in (1, 2, 3):
        x = random_low_rank(4, 3, r, rng)
        np.testing.assert_array_equal(apply(ident, x), x.reshape(-1))
        assert abs(np.sum(apply(ident, x) ** 2) - np.sum(x ** 2)) <= 1e-12 * np.sum(x ** 2)


def test_documented_operator_examples():
    sc = build_operator("scaled-identity", 3, 3, 9, params={"a": 0.2})
    assert operator_norm(sc) == pytest.approx(math.sqrt(1.2), rel=1e-10)
    g1 = build_operator("gaussian", 8, 8, 96, seed=7)
    g2 = build_operator("gaussian", 8, 8, 96, seed=7)
    assert g1.matrix.tobytes() == g2.matrix.tobytes()
    x = random_low_rank(3, 3, 2, rng_for(0, "ground-truth"))
    inst = make_instance(build_operator("identity", 3, 3, 9), x)
    np.testing.assert_array_equal(inst.b, x.reshape(-1))
    again = make_instance(g1, np.eye(8), "gaussian-rescaled", 0.1, seed=4)
    assert np.array_equal(make_instance(g1, np.eye(8), "gaussian-rescaled", 0.1, seed=4).b, again.b)
