import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from l1perturb.algebra import (
    KINDS,
    Element,
    NumericError,
    Projection,
    ShapeMismatch,
    abs_polar,
    build_algebra,
    left_support,
    norm1,
    op_norm,
    proj_meet_join,
    projection_defects,
    proj_sup,
    random_suite,
    right_support,
    schatten_norm,
    sign,
    spectral_projection,
    support,
    trace,
)
from oracles import dense, eigen_count_above, intersection_dim, naive_matmul, trace_norm, weight_matrix

SHAPES = [([1] * 5, [0.2] * 5), ([3], [1.0]), ([2, 3], [0.5, 1.5]), ([2, 2, 1], [0.3, 1.0, 2.0])]

shape_st = st.sampled_from(SHAPES).map(lambda s: build_algebra(*s))
seed_st = st.integers(0, 2**32 - 1)


def test_shape_validation():
    with pytest.raises(ValueError):
        build_algebra([2], [0.0])
    with pytest.raises(ValueError):
        build_algebra([2, 2], [1.0])
    with pytest.raises(ValueError):
        build_algebra([0], [1.0])
    sh = build_algebra([2, 2, 3], [1, 1, 2])
    assert [g[0] for g in sh.groups] == [2, 3]
    assert sh.tau_unit == pytest.approx(10.0)


def test_shape_mismatch():
    a = random_suite(build_algebra([2], [1.0]), "generic", 0)
    b = random_suite(build_algebra([3], [1.0]), "generic", 0)
    with pytest.raises(ShapeMismatch):
        a + b
    with pytest.raises(ShapeMismatch):
        build_algebra([2], [1.0]).from_blocks([np.eye(3)])


@pytest.mark.parametrize("dims,weights", SHAPES)
def test_products_match_naive(dims, weights):
    sh = build_algebra(dims, weights)
    x = random_suite(sh, "generic", 1)
    y = random_suite(sh, "generic", 2)
    np.testing.assert_allclose(dense(x @ y), naive_matmul(dense(x), dense(y)), atol=1e-12)
    np.testing.assert_allclose(dense(x.H), dense(x).conj().T)


@pytest.mark.parametrize("dims,weights", SHAPES)
def test_trace_and_norms_match_dense(dims, weights):
    sh = build_algebra(dims, weights)
    x = random_suite(sh, "generic", 3)
    w = weight_matrix(sh)
    assert trace(x) == pytest.approx(np.sum(w * np.diag(dense(x))))
    assert norm1(x) == pytest.approx(trace_norm(x))
    assert op_norm(x) == pytest.approx(np.linalg.norm(dense(x), 2))
    assert trace(sh.identity()) == pytest.approx(sh.tau_unit)


@pytest.mark.parametrize("kind", KINDS)
def test_random_suite_deterministic(kind):
    sh = build_algebra([2, 3], [0.5, 1.5])
    a, b = random_suite(sh, kind, 42), random_suite(sh, kind, 42)
    assert all(np.array_equal(p, q) for p, q in zip(a.parts, b.parts))


def test_json_round_trip():
    sh = build_algebra([2, 1], [0.5, 2.0])
    x = random_suite(sh, "generic", 5)
    y = Element.from_json(x.to_json())
    assert y.shape == sh and y.allclose(x, atol=0)


@settings(max_examples=40, deadline=None)
@given(shape_st, seed_st)
def test_polar_decomposition(sh, seed):
    x = random_suite(sh, "generic", seed)
    u, a = abs_polar(x)
    assert (u @ a).allclose(x, atol=1e-10)
    assert a.is_selfadjoint()
    assert min(np.linalg.eigvalsh(dense(a))) > -1e-10
    assert op_norm(u) <= 1 + 1e-10


def test_polar_of_zero_and_rank_deficient():
    sh = build_algebra([3], [1.0])
    u, a = abs_polar(sh.zeros())
    assert op_norm(u) == 0 and op_norm(a) == 0
    v = np.array([1.0, 2.0, 0.0])
    x = sh.from_blocks([np.outer(v, v)])
    u, _ = abs_polar(x)
    assert norm1(u.H @ u) == pytest.approx(1.0)


@settings(max_examples=40, deadline=None)
@given(shape_st, seed_st, seed_st)
def test_norm_inequalities(sh, s1, s2):
    x = random_suite(sh, "generic", s1)
    y = random_suite(sh, "generic", s2)
    assert norm1(x + y) <= norm1(x) + norm1(y) + 1e-10
    assert abs(trace(x @ y)) <= norm1(x) * op_norm(y) + 1e-10
    assert norm1(x.H) == pytest.approx(norm1(x))
    assert schatten_norm(x, 2) ** 2 == pytest.approx(np.real(trace(x.H @ x)))


@settings(max_examples=30, deadline=None)
@given(shape_st, seed_st, st.floats(0.05, 2.0))
def test_spectral_projection_mass(sh, seed, eps):
    x = random_suite(sh, "generic", seed)
    _, a = abs_polar(x)
    p = spectral_projection(a, eps)
    assert np.real(trace(p)) == pytest.approx(eigen_count_above(x, eps), abs=1e-12)
    assert Projection.verified(p) is not None


def test_spectral_projection_ties():
    sh = build_algebra([1, 1], [1.0, 1.0])
    x = sh.diagonal([1.0, 2.0])
    assert np.real(trace(spectral_projection(x, 1.0))) == pytest.approx(1.0)
    assert np.real(trace(spectral_projection(x, 1.0, "at_or_above"))) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        spectral_projection(random_suite(build_algebra([2], [1.0]), "generic", 0), 0.5)


def test_supports_and_sign():
    sh = build_algebra([2, 3], [0.5, 1.5])
    x = random_suite(sh, "selfadjoint", 7)
    s = sign(x)
    assert (s @ x).allclose(abs_polar(x)[1], atol=1e-10)
    y = random_suite(sh, "generic", 8)
    l, r = left_support(y), right_support(y)
    assert (l @ y).allclose(y, atol=1e-10) and (y @ r).allclose(y, atol=1e-10)
    p = random_suite(sh, "projection", 9)
    assert support(p).allclose(p, atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(shape_st, seed_st, seed_st)
def test_meet_join(sh, s1, s2):
    p = random_suite(sh, "projection", s1)
    q = random_suite(sh, "projection", s2)
    meet, join = proj_meet_join(p, q)
    for m in (meet, join):
        assert not projection_defects(m)
    assert (p @ meet).allclose(meet, atol=1e-9) and (q @ meet).allclose(meet, atol=1e-9)
    assert (join @ p).allclose(p, atol=1e-9) and (join @ q).allclose(q, atol=1e-9)
    for bp, bq, bm in zip(p.blocks, q.blocks, meet.blocks):
        assert np.trace(bm).real == pytest.approx(intersection_dim(bp, bq), abs=1e-9)
    assert abs(trace(p - meet) - trace(join - q)) <= 1e-9


def test_meet_with_shared_subspace():
    sh = build_algebra([4], [1.0])
    e = np.eye(4)
    p = sh.from_blocks([e[:, :2] @ e[:, :2].T])
    v = (e[:, 1] + e[:, 2]) / np.sqrt(2)
    q = sh.from_blocks([np.outer(e[:, 0], e[:, 0]) + np.outer(v, v)])
    meet, join = proj_meet_join(p, q)
    assert np.real(trace(meet)) == pytest.approx(1.0)
    assert np.real(trace(join)) == pytest.approx(3.0)
    assert np.real(trace(proj_sup([p, q]))) == pytest.approx(3.0)
    assert norm1(proj_sup([], shape=sh)) == 0


def test_numeric_error_is_arithmetic():
    assert issubclass(NumericError, ArithmeticError)
