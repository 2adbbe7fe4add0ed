"""Dense linear-algebra primitives, checked against loop-level oracles."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from igkls import (
    dag,
    embed_support,
    eye,
    frob,
    herm,
    im_part,
    kron,
    nearest_isometry,
    orthonormalize_span,
    partial_trace,
    subspace_residual,
    svd_rank,
    unvec,
    vec,
)
from conftest import crandn, haar_isometry, haar_unitary, kron_oracle, ptrace_oracle, rng_for


# ---------------------------------------------------------------------------
# kron
# ---------------------------------------------------------------------------


def test_kron_matches_quadruple_loop_oracle():
    rng = rng_for(101)
    for ra, ca, rb, cb in [(2, 3, 4, 2), (1, 1, 3, 3), (3, 2, 2, 5)]:
        a = crandn(rng, ra, ca)
        b = crandn(rng, rb, cb)
        assert frob(kron(a, b) - kron_oracle(a, b)) <= 1e-13


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**9))
def test_kron_associative(seed):
    rng = rng_for(seed)
    dims = rng.integers(1, 4, size=6)
    a = crandn(rng, dims[0], dims[1])
    b = crandn(rng, dims[2], dims[3])
    c = crandn(rng, dims[4], dims[5])
    assert frob(kron(kron(a, b), c) - kron(a, kron(b, c))) <= 1e-12


def test_kron_mixed_product_rule():
    rng = rng_for(102)
    a, b = crandn(rng, 3, 2), crandn(rng, 2, 4)
    c, d = crandn(rng, 2, 3), crandn(rng, 3, 2)
    lhs = kron(a, c) @ kron(b, d)
    rhs = kron(a @ b, c @ d)
    assert frob(lhs - rhs) <= 1e-12 * max(1.0, frob(lhs))


# ---------------------------------------------------------------------------
# vec / unvec (row-major convention)
# ---------------------------------------------------------------------------


def test_vec_unvec_round_trip():
    rng = rng_for(103)
    x = crandn(rng, 3, 5)
    assert np.array_equal(unvec(vec(x), 3, 5), x)


def test_vec_of_sandwich_is_kron_action():
    # row-major convention: vec(A X B) = (A ⊗ Bᵀ) vec(X)
    rng = rng_for(104)
    a = crandn(rng, 3, 3)
    x = crandn(rng, 3, 4)
    b = crandn(rng, 4, 4)
    lhs = vec(a @ x @ b)
    rhs = kron(a, b.T) @ vec(x)
    assert frob((lhs - rhs).reshape(-1, 1)) <= 1e-12 * max(1.0, float(np.linalg.norm(lhs)))


# ---------------------------------------------------------------------------
# partial trace
# ---------------------------------------------------------------------------


def test_partial_trace_of_product_states():
    rng = rng_for(105)
    p = crandn(rng, 3, 3)
    q = crandn(rng, 2, 2)
    m = kron_oracle(p, q)
    out_b = partial_trace(m, 3, 2, over="B")
    out_a = partial_trace(m, 3, 2, over="A")
    assert frob(out_b - np.trace(q) * p) <= 1e-12
    assert frob(out_a - np.trace(p) * q) <= 1e-12


def test_partial_trace_matches_loop_oracle_and_preserves_trace():
    rng = rng_for(106)
    m = crandn(rng, 12, 12)
    for over, (da, db) in (("A", (3, 4)), ("B", (4, 3)), ("A", (2, 6))):
        got = partial_trace(m, da, db, over=over)
        want = ptrace_oracle(m, da, db, over=over)
        assert frob(got - want) <= 1e-13
        assert abs(np.trace(got) - np.trace(m)) <= 1e-12


def test_partial_trace_rejects_bad_shapes():
    with pytest.raises(ValueError):
        partial_trace(np.eye(5), 2, 2, over="A")
    with pytest.raises(ValueError):
        partial_trace(np.eye(4), 2, 2, over="C")


# ---------------------------------------------------------------------------
# spans, ranks, residuals
# ---------------------------------------------------------------------------


def test_orthonormalize_span_dimension_matches_rank_oracle():
    rng = rng_for(107)
    amb, r = 8, 3
    gens = crandn(rng, amb, r)
    # 6 vectors, all combinations of the same r independent columns
    vectors = [gens @ crandn(rng, r, 1).reshape(-1) for _ in range(6)]
    sb = orthonormalize_span(vectors, ambient_dim=amb)
    stacked = np.stack(vectors, axis=1)
    assert sb.count == np.linalg.matrix_rank(stacked, tol=1e-9)
    gram = sb.vectors @ dag(sb.vectors)  # basis vectors are the rows
    assert frob(gram - eye(sb.count)) <= 1e-10


def test_orthonormalize_span_empty_and_zero_input():
    sb = orthonormalize_span([], ambient_dim=4)
    assert sb.count == 0 and sb.ambient_dim == 4
    sb2 = orthonormalize_span([np.zeros(4)], ambient_dim=4)
    assert sb2.count == 0


def test_subspace_residual_matches_projector_oracle():
    rng = rng_for(108)
    basis_vectors = haar_isometry(rng, 6, 2)
    sb = orthonormalize_span([basis_vectors[:, 0], basis_vectors[:, 1]], ambient_dim=6)
    # oracle projector from the known orthonormal generating columns
    proj = basis_vectors @ dag(basis_vectors)
    for _ in range(5):
        v = crandn(rng, 6, 1).reshape(-1)
        want = float(np.linalg.norm(v - proj @ v))
        assert abs(subspace_residual(sb, v) - want) <= 1e-12
    # vectors inside the span have zero residual
    inside = basis_vectors @ crandn(rng, 2, 1).reshape(-1)
    assert subspace_residual(sb, inside) <= 1e-12


def test_svd_rank_detects_constructed_rank():
    rng = rng_for(109)
    left = crandn(rng, 7, 3)
    right = crandn(rng, 3, 5)
    m = left @ right
    assert svd_rank(m) == 3
    assert svd_rank(np.zeros((4, 4))) == 0
    assert svd_rank(1e-14 * crandn(rng, 3, 3)) in (0, 3)  # relative threshold
    # scaling the matrix must not change the decision (relative cutoff)
    assert svd_rank(1e-8 * m) == 3


# ---------------------------------------------------------------------------
# embeddings and polar projections
# ---------------------------------------------------------------------------


def test_embed_support_composition():
    rng = rng_for(110)
    u = haar_unitary(rng, 6)
    p = dag(u)[:4, :]  # coisometry rows
    x = crandn(rng, 4, 4)
    emb = embed_support(x, p)
    # compressing back recovers x, and the embedding lives on the support
    assert frob(p @ emb @ dag(p) - x) <= 1e-12
    pi = dag(p) @ p
    assert frob(emb - pi @ emb @ pi) <= 1e-12


def test_nearest_isometry_projects_and_fixes_isometries():
    rng = rng_for(111)
    w = haar_isometry(rng, 5, 3)
    assert frob(nearest_isometry(w) - w) <= 1e-12
    m = w + 0.05 * crandn(rng, 5, 3)
    out = nearest_isometry(m)
    assert frob(dag(out) @ out - eye(3)) <= 1e-12
    # polar factor is the closest isometry; it must not be further than w
    assert frob(out - m) <= frob(w - m) + 1e-12


# ---------------------------------------------------------------------------
# hermitian split
# ---------------------------------------------------------------------------


def test_herm_im_part_reconstruct_and_are_selfadjoint():
    rng = rng_for(112)
    a = crandn(rng, 4, 4)
    h, im = herm(a), im_part(a)
    assert frob(h - dag(h)) <= 1e-13
    assert frob(im - dag(im)) <= 1e-13
    assert frob(a - (h + 1j * im)) <= 1e-13


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**9))
def test_dag_is_involutive_antihomomorphism(seed):
    rng = rng_for(seed)
    n = int(rng.integers(1, 5))
    a = crandn(rng, n, n)
    b = crandn(rng, n, n)
    assert np.array_equal(dag(dag(a)), a)
    assert frob(dag(a @ b) - dag(b) @ dag(a)) <= 1e-12
