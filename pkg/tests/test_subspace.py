import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

import corpus
from gradsub import matcore, subspace
from gradsub.matcore import EmptySubspaceError
from gradsub.subspace import DimensionMismatch, pss_cross_check, pss_trace

E = np.eye(3)
R2 = 2**-0.5


def col(*xs):
    return np.array(xs, dtype=float).reshape(-1, 1)


# -- examples ----------------------------------------------------------------


def test_projector_examples():
    np.testing.assert_allclose(subspace.projector(col(1, 0, 0)), np.diag([1.0, 0, 0]), atol=1e-15)
    g = np.random.default_rng(1).standard_normal((4, 4))
    np.testing.assert_allclose(subspace.projector(g), np.eye(4), atol=1e-12)
    np.testing.assert_allclose(subspace.projector(col(1, 1)), [[0.5, 0.5], [0.5, 0.5]], atol=1e-15)


def test_projector_rank_zero():
    with pytest.raises(EmptySubspaceError):
        subspace.projector(np.zeros((3, 2)))


def test_projector_properties():
    rng = np.random.default_rng(2)
    for _ in range(50):
        g_a, _ = corpus.random_pair(rng)
        p = subspace.projector(g_a)
        assert np.linalg.norm(p - p.T) < 1e-9
        assert np.linalg.norm(p @ p - p) < 1e-9
        assert abs(np.trace(p) - matcore.rank(g_a)) < 1e-8


def test_pss_identical():
    g = np.random.default_rng(3).standard_normal((6, 2))
    assert pss_trace(g, g).value == pytest.approx(1.0, abs=1e-12)


def test_pss_orthogonal():
    r = pss_trace(col(1, 0), col(0, 1))
    assert r.value == pytest.approx(0.0, abs=1e-12)
    assert r.principal_cosines == pytest.approx((0.0,), abs=1e-12)


def test_pss_45_degrees():
    r = pss_trace(col(1, 0), col(R2, R2))
    assert r.value == pytest.approx(0.5, abs=1e-12)
    assert (r.rank_a, r.rank_b) == (1, 1)


def test_pss_shared_direction():
    r = pss_trace(E[:, :2], E[:, 1:])
    assert r.value == pytest.approx(0.5, abs=1e-12)
    assert r.principal_cosines == pytest.approx((1.0, 0.0), abs=1e-12)
    np.testing.assert_allclose(subspace.principal_cosines(E[:, :2], E[:, 1:]), [1.0, 0.0], atol=1e-12)


def test_principal_cosines_examples():
    g = np.random.default_rng(4).standard_normal((5, 3))
    np.testing.assert_allclose(subspace.principal_cosines(g, g @ np.diag([2.0, -1, 3])), [1, 1, 1], atol=1e-12)
    np.testing.assert_allclose(subspace.principal_cosines(col(1, 0, 0), col(0, 0, 1)), [0.0], atol=1e-15)


@pytest.mark.parametrize(
    "g_a, g_b",
    [(col(1, 0), col(R2, R2)), (E[:, :2], E[:, 1:]), (col(1, 0), col(0, 1))],
)
def test_cross_check_matches_examples(g_a, g_b):
    assert abs(pss_cross_check(g_a, g_b) - pss_trace(g_a, g_b).value) < 1e-8


def test_cross_check_seeded_pairs():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(100):
        g_a = rng.standard_normal((32, 7))
        g_b = rng.standard_normal((32, 11))
        worst = max(worst, abs(pss_trace(g_a, g_b).value - pss_cross_check(g_a, g_b)))
    assert worst < 1e-8


def test_cross_check_duplicated_columns():
    rng = np.random.default_rng(12)
    base = rng.standard_normal((10, 3))
    g_a = np.hstack([base, base, base[:, :1]])
    g_b = np.hstack([base[:, :1] + rng.standard_normal((10, 1)), rng.standard_normal((10, 2))] * 2)
    r = pss_trace(g_a, g_b)
    assert (r.rank_a, r.rank_b) == (3, 3)
    assert abs(r.value - pss_cross_check(g_a, g_b)) < 1e-8


def test_errors():
    with pytest.raises(DimensionMismatch):
        pss_trace(np.ones((3, 1)), np.ones((4, 1)))
    with pytest.raises(EmptySubspaceError, match="vanished"):
        pss_trace(np.zeros((3, 2)), np.ones((3, 1)))
    with pytest.raises(EmptySubspaceError):
        pss_cross_check(np.ones((3, 1)), np.zeros((3, 1)))
    with pytest.raises(ValueError, match="limited"):
        pss_cross_check(np.ones((600, 1)), np.ones((600, 1)))


def test_full_space_shortcut_matches_explicit():
    rng = np.random.default_rng(13)
    g_a = rng.standard_normal((6, 6))
    g_b = rng.standard_normal((6, 2))
    r = pss_trace(g_a, g_b)
    assert r.principal_cosines == (1.0, 1.0)
    assert r.value == pytest.approx(1.0, abs=1e-12)


def test_result_to_dict():
    d = pss_trace(E[:, :2], E[:, 1:]).to_dict()
    assert set(d) == {"value", "rank_a", "rank_b", "principal_cosines"}
    assert isinstance(d["principal_cosines"], list)


# -- seeded pair suite -------------------------------------------------------


def pairs(count, seed):
    rng = np.random.default_rng(seed)
    return [corpus.random_pair(rng) for _ in range(count)]


PAIRS = pairs(500, 21)


def invertible(rng, n):
    # well-conditioned random invertible matrix
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return q @ np.diag(rng.uniform(0.5, 2.0, n))


def test_suite_range_symmetry_consistency():
    for g_a, g_b in PAIRS:
        r = pss_trace(g_a, g_b)
        assert 0.0 <= r.value <= 1.0 + 1e-12
        assert len(r.principal_cosines) == min(r.rank_a, r.rank_b)
        assert all(0.0 <= c <= 1.0 for c in r.principal_cosines)
        assert list(r.principal_cosines) == sorted(r.principal_cosines, reverse=True)
        assert abs(r.value - np.mean(np.square(r.principal_cosines))) < 1e-10
        assert abs(r.value - pss_trace(g_b, g_a).value) < 1e-10


def test_suite_invariances():
    rng = np.random.default_rng(22)
    for g_a, g_b in PAIRS[:200]:
        base = pss_trace(g_a, g_b).value
        ra = invertible(rng, g_a.shape[1])
        rb = invertible(rng, g_b.shape[1])
        assert abs(pss_trace(g_a @ ra, g_b @ rb).value - base) < 1e-9
        u, _ = np.linalg.qr(rng.standard_normal((g_a.shape[0],) * 2))
        assert abs(pss_trace(u @ g_a, u @ g_b).value - base) < 1e-9
        assert abs(pss_trace(g_a, g_a @ ra).value - 1.0) < 1e-10


def test_suite_dual_path():
    worst = max(abs(pss_trace(a, b).value - pss_cross_check(a, b)) for a, b in PAIRS)
    assert worst < 1e-8


def test_cosines_match_scipy_angles():
    # independent oracle for principal angles
    for g_a, g_b in PAIRS[:100]:
        qa = matcore.orthonormal_range_basis(g_a)
        qb = matcore.orthonormal_range_basis(g_b)
        expect = np.sort(np.cos(scipy.linalg.subspace_angles(qa, qb)))[::-1]
        got = subspace.principal_cosines(g_a, g_b)
        np.testing.assert_allclose(got, expect, atol=1e-9)


# -- properties --------------------------------------------------------------


@st.composite
def gradient_pairs(draw):
    seed = draw(st.integers(0, 2**32 - 1))
    m = draw(st.integers(2, 12))
    na = draw(st.integers(1, 6))
    nb = draw(st.integers(1, 6))
    rng = np.random.default_rng(seed)
    ra = draw(st.integers(1, min(m, na)))
    rb = draw(st.integers(1, min(m, nb)))
    g_a = rng.standard_normal((m, ra)) @ rng.standard_normal((ra, na))
    g_b = rng.standard_normal((m, rb)) @ rng.standard_normal((rb, nb))
    share = draw(st.integers(0, min(ra, rb)))
    if share:
        g_b[:, :share] = g_a[:, :share]
    return g_a, g_b


@settings(max_examples=200, deadline=None)
@given(gradient_pairs())
def test_property_trace_equals_projector_trace(pair):
    g_a, g_b = pair
    r = pss_trace(g_a, g_b)
    assert -1e-12 <= r.value <= 1.0 + 1e-12
    assert abs(r.value - pss_cross_check(g_a, g_b)) < 1e-8
    assert abs(r.value - pss_trace(g_b, g_a).value) < 1e-10


@settings(max_examples=100, deadline=None)
@given(gradient_pairs(), st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_property_scale_invariance(pair, ca, cb):
    g_a, g_b = pair
    assert abs(pss_trace(ca * g_a, cb * g_b).value - pss_trace(g_a, g_b).value) < 1e-9
