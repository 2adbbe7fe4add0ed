"""Finite-dimensional weakly closed *-algebras of matrices.

An algebra is represented either by an HS-orthonormal basis
(:class:`AlgebraBasis`) or structurally by an :class:`AtomicDecomposition`:
a unitary ``u_alg`` together with ``(d0, [(d_A_i, d_B_i)])`` such that every
algebra element, conjugated by ``u_alg†``, is zero on the first ``d0``
coordinates and of the form ``X_{A_i} ⊗ 1_{B_i}`` on the i-th diagonal block.

The two exact averaging operations (`twirl_to_commutant`,
`twirl_intertwiner`) replace group integrals by closed-form partial traces,
which is exact in finite dimension.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DecompositionFailed, NotClosed, NotIntertwiner
from .linalg import (
    TOL_RANK,
    asmatrix,
    dag,
    eye,
    frob,
    kron,
    orthonormalize_span,
    subspace_residual,
    vec,
)
from .rng import CounterRng

_MAX_RETRIES = 8
_GAP_FRACTION = 1e-6  # minimal relative eigenvalue gap for a generic element


@dataclass
class AlgebraBasis:
    """HS-orthonormal basis of a *-closed subspace of L(C^ambient_dim)."""

    ambient_dim: int
    basis: list[np.ndarray]
    contains_identity: bool = False

    @property
    def dim(self) -> int:
        return len(self.basis)


@dataclass
class AtomicDecomposition:
    """Structural form of an atomic algebra; see the module docstring."""

    d: int
    u_alg: np.ndarray
    d0: int
    factors: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        self.u_alg = asmatrix(self.u_alg)
        self.factors = [(int(a), int(b)) for a, b in self.factors]
        total = self.d0 + sum(a * b for a, b in self.factors)
        if total != self.d:
            raise ValueError(f"block dims sum to {total}, ambient is {self.d}")

    def offsets(self) -> list[int]:
        """Start offset of each factor block (after the d0 null block)."""
        offs = []
        pos = self.d0
        for da, db in self.factors:
            offs.append(pos)
            pos += da * db
        return offs

    def p_null(self) -> np.ndarray:
        """P₀ ∈ L(H; H₀): the first d0 rows of u_alg†."""
        return dag(self.u_alg)[: self.d0, :]

    def p_factor(self, i: int) -> np.ndarray:
        """P_i ∈ L(H; H_{A_i}⊗H_{B_i}): the rows of u_alg† for factor i."""
        off = self.offsets()[i]
        da, db = self.factors[i]
        return dag(self.u_alg)[off : off + da * db, :]


# ---------------------------------------------------------------------------
# basis-level operations
# ---------------------------------------------------------------------------

def _orthonormal_matrices(mats, d: int, tol: float) -> list[np.ndarray]:
    sb = orthonormalize_span([vec(m) for m in mats], tol=tol, ambient_dim=d * d)
    return [sb.vectors[k].reshape(d, d) for k in range(sb.count)]


def _span_residual(x: np.ndarray, basis: list[np.ndarray]) -> float:
    if not basis:
        return frob(x)
    v = vec(x)
    b = np.stack([vec(m) for m in basis], axis=0)
    coeff = np.conj(b) @ v
    return float(np.linalg.norm(v - b.T @ coeff))


def close_star_algebra(generators, unital: bool, tol: float = TOL_RANK,
                       dim: int | None = None) -> AlgebraBasis:
    """Smallest *-closed, product-closed subspace containing the generators.

    Sweeps adjoints and pairwise products into the span until the dimension
    stabilizes.  With ``unital=True`` the identity is included up front.
    With no generators at all, ``dim`` fixes the ambient space (the scalars
    on C¹ when omitted).
    """
    gens = [asmatrix(g) for g in generators]
    dims = {g.shape for g in gens}
    if any(r != c for r, c in dims):
        raise ValueError("generators must be square")
    if len(dims) > 1:
        raise ValueError("generators must share one dimension")
    if dim is not None and gens and gens[0].shape[0] != dim:
        raise ValueError("dim contradicts the generators' dimension")
    if not gens and not unital:
        raise ValueError("need at least one generator or unital=True")
    d = gens[0].shape[0] if gens else (1 if dim is None else int(dim))
    seed = list(gens)
    if unital:
        seed.append(eye(d))
    basis = _orthonormal_matrices(seed, d, tol)
    while True:
        candidates = list(basis)
        candidates += [dag(b) for b in basis]
        candidates += [a @ b for a in basis for b in basis]
        new_basis = _orthonormal_matrices(candidates, d, tol)
        if len(new_basis) == len(basis):
            basis = new_basis
            break
        basis = new_basis
    ident = subspace_residual(
        orthonormalize_span([vec(b) for b in basis], tol=tol), vec(eye(d))
    )
    return AlgebraBasis(d, basis, contains_identity=bool(ident <= tol * np.sqrt(d)))


def membership_residual(x: np.ndarray, alg: AlgebraBasis) -> float:
    """Frobenius distance from x to span(alg)."""
    x = asmatrix(x)
    if x.shape != (alg.ambient_dim, alg.ambient_dim):
        raise ValueError("dimension mismatch")
    return _span_residual(x, alg.basis)


def commutant(alg: AlgebraBasis, tol: float = TOL_RANK) -> AlgebraBasis:
    """Commutant 𝒜′ as the nullspace of the stacked maps X ↦ b_iX − Xb_i."""
    d = alg.ambient_dim
    if not alg.basis:
        full = [np.zeros((d, d), dtype=np.complex128) for _ in range(d * d)]
        for k in range(d * d):
            full[k][k // d, k % d] = 1.0
        return AlgebraBasis(d, full, contains_identity=True)
    blocks = []
    ident = eye(d)
    for b in alg.basis:
        blocks.append(kron(b, ident) - kron(ident, b.T))
    stacked = np.vstack(blocks)
    _, s, vh = np.linalg.svd(stacked)
    smax = s[0] if s.size else 0.0
    # the cutoff must not be relative to smax alone: for a central basis the
    # stacked commutators are pure rounding noise and smax itself is ~eps
    bscale = max(frob(b) for b in alg.basis)
    cut = tol * max(smax, bscale)
    rank = int(np.count_nonzero(s > cut)) if smax > 0 else 0
    null_rows = vh[rank:, :]
    mats = [np.conj(null_rows[k]).reshape(d, d) for k in range(null_rows.shape[0])]
    return AlgebraBasis(d, mats, contains_identity=True)


def closure_residuals(alg: AlgebraBasis) -> tuple[float, float]:
    """(adjoint, product) closure residuals of the basis; both ~0 for algebras."""
    adj = 0.0
    prod = 0.0
    for a in alg.basis:
        adj = max(adj, _span_residual(dag(a), alg.basis))
        for b in alg.basis:
            prod = max(prod, _span_residual(a @ b, alg.basis))
    return adj, prod


# ---------------------------------------------------------------------------
# pattern helpers for a known decomposition
# ---------------------------------------------------------------------------

def algebra_pattern_basis(dec: AtomicDecomposition, normalized: bool = True) -> list[np.ndarray]:
    """HS-orthonormal basis of the algebra determined by ``dec``.

    One element per matrix unit on each A-factor: U(0 ⊕ … E_ab⊗1_B …)U†/√d_B.
    """
    u = dec.u_alg
    out = []
    for i, (da, db) in enumerate(dec.factors):
        off = dec.offsets()[i]
        for a in range(da):
            for b in range(da):
                m = np.zeros((dec.d, dec.d), dtype=np.complex128)
                blk = np.zeros((da, da), dtype=np.complex128)
                blk[a, b] = 1.0
                m[off : off + da * db, off : off + da * db] = kron(blk, eye(db))
                if normalized:
                    m /= np.sqrt(db)
                out.append(u @ m @ dag(u))
    return out


def algebra_project(x: np.ndarray, dec: AtomicDecomposition) -> np.ndarray:
    """HS-orthogonal projection of x onto the algebra of ``dec``."""
    u = dec.u_alg
    xt = dag(u) @ asmatrix(x) @ u
    out = np.zeros_like(xt)
    for i, (da, db) in enumerate(dec.factors):
        off = dec.offsets()[i]
        blk = xt[off : off + da * db, off : off + da * db]
        xa = np.einsum("abcb->ac", blk.reshape(da, db, da, db)) / db
        out[off : off + da * db, off : off + da * db] = kron(xa, eye(db))
    return u @ out @ dag(u)


def commutant_project(x: np.ndarray, dec: AtomicDecomposition) -> np.ndarray:
    """HS-orthogonal projection of x onto the commutant 𝒜′ of ``dec``.

    The commutant keeps the full null block: 𝒜′ = U(L(H₀) ⊕ ⊕ 1_{A_i}⊗L(H_{B_i}))U†.
    """
    u = dec.u_alg
    xt = dag(u) @ asmatrix(x) @ u
    out = np.zeros_like(xt)
    out[: dec.d0, : dec.d0] = xt[: dec.d0, : dec.d0]
    for i, (da, db) in enumerate(dec.factors):
        off = dec.offsets()[i]
        blk = xt[off : off + da * db, off : off + da * db]
        xb = np.einsum("abac->bc", blk.reshape(da, db, da, db)) / da
        out[off : off + da * db, off : off + da * db] = kron(eye(da), xb)
    return u @ out @ dag(u)


def pattern_residual(x: np.ndarray, dec: AtomicDecomposition) -> float:
    """Frobenius distance of x from the algebra of ``dec``."""
    return frob(asmatrix(x) - algebra_project(x, dec))


# ---------------------------------------------------------------------------
# exact twirls
# ---------------------------------------------------------------------------

def twirl_to_commutant(x: np.ndarray, dec: AtomicDecomposition) -> np.ndarray:
    """Average of ``Û† x Û`` over the algebra's unitaries (zero on the null part).

    Closed form: in the ``u_alg`` frame all blocks touching H₀ and all
    off-diagonal factor blocks vanish, and diagonal block i becomes
    ``1_{A_i} ⊗ Tr_{A_i}(X_ii)/d_{A_i}``.  Idempotent; range inside 𝒜′.
    """
    x = asmatrix(x)
    if x.shape != (dec.d, dec.d):
        raise ValueError("dimension mismatch")
    u = dec.u_alg
    xt = dag(u) @ x @ u
    out = np.zeros_like(xt)
    for i, (da, db) in enumerate(dec.factors):
        off = dec.offsets()[i]
        blk = xt[off : off + da * db, off : off + da * db]
        xb = np.einsum("abac->bc", blk.reshape(da, db, da, db)) / da
        out[off : off + da * db, off : off + da * db] = kron(eye(da), xb)
    return u @ out @ dag(u)


def twirl_intertwiner(v: np.ndarray, dec: AtomicDecomposition, e: int) -> np.ndarray:
    """Average ``(Û†⊗1_E) v Û`` — the projection used to split off B from V.

    Returns ``B = Σ_i (P_i†⊗1_E)(1_{A_i}⊗B_i)P_i`` with
    ``B_i = Tr_{A_i}[(P_i⊗1_E) v P_i†]/d_{A_i}``; B intertwines the algebra
    action: ``(X_𝒜⊗1_E)B = B X_𝒜``.
    """
    v = asmatrix(v)
    d = dec.d
    if v.shape != (d * e, d):
        raise ValueError(f"expected shape {(d * e, d)}, got {v.shape}")
    u = dec.u_alg
    vt = (kron(dag(u), eye(e)) @ v @ u).reshape(d, e, d)
    out = np.zeros_like(vt)
    for i, (da, db) in enumerate(dec.factors):
        off = dec.offsets()[i]
        blk = vt[off : off + da * db, :, off : off + da * db]
        blk = blk.reshape(da, db, e, da, db)
        b_i = np.einsum("abeac->bec", blk) / da
        rebuilt = np.zeros((da, db, e, da, db), dtype=np.complex128)
        for a in range(da):
            rebuilt[a, :, :, a, :] = b_i
        out[off : off + da * db, :, off : off + da * db] = rebuilt.reshape(da * db, e, da * db)
    return kron(u, eye(e)) @ out.reshape(d * e, d) @ dag(u)


@dataclass
class IntertwinerParts:
    """Blocks of an operator satisfying ``(X̂⊗1_E)b = b(X̂⊗1_Ẽ)`` for all X̂ ∈ 𝒜."""

    b0: np.ndarray
    b_i: list[np.ndarray]


def intertwiner_decompose(
    b: np.ndarray,
    dec: AtomicDecomposition,
    e_out: int,
    e_in: int,
    tol: float = TOL_RANK,
) -> IntertwinerParts:
    """Extract {B₀, B_i} from an intertwiner b ∈ L(H⊗H_Ẽ; H⊗H_E).

    Raises :class:`NotIntertwiner` if b does not satisfy the half-commutation
    relation, or if the extracted blocks fail to reassemble b.
    """
    b = asmatrix(b)
    d = dec.d
    if b.shape != (d * e_out, d * e_in):
        raise ValueError(f"expected shape {(d * e_out, d * e_in)}, got {b.shape}")
    scale = max(1.0, frob(b))
    worst = 0.0
    for xhat in algebra_pattern_basis(dec):
        res = frob(kron(xhat, eye(e_out)) @ b - b @ kron(xhat, eye(e_in)))
        worst = max(worst, res)
    if worst > tol * scale * 10:
        raise NotIntertwiner("input does not intertwine the algebra action", residual=worst)

    u = dec.u_alg
    bt = (kron(dag(u), eye(e_out)) @ b @ kron(u, eye(e_in))).reshape(d, e_out, d, e_in)
    d0 = dec.d0
    b0 = bt[:d0, :, :d0, :].reshape(d0 * e_out, d0 * e_in)
    parts = []
    rebuilt = np.zeros_like(bt)
    rebuilt[:d0, :, :d0, :] = bt[:d0, :, :d0, :]
    for i, (da, db) in enumerate(dec.factors):
        off = dec.offsets()[i]
        blk = bt[off : off + da * db, :, off : off + da * db, :]
        blk = blk.reshape(da, db, e_out, da, db, e_in)
        b_i = np.einsum("abeacf->becf", blk) / da
        parts.append(b_i.reshape(db * e_out, db * e_in))
        re_blk = np.zeros((da, db, e_out, da, db, e_in), dtype=np.complex128)
        for a in range(da):
            re_blk[a, :, :, a, :, :] = b_i
        rebuilt[off : off + da * db, :, off : off + da * db, :] = re_blk.reshape(
            da * db, e_out, da * db, e_in
        )
    back = kron(u, eye(e_out)) @ rebuilt.reshape(d * e_out, d * e_in) @ kron(dag(u), eye(e_in))
    res = frob(back - b)
    if res > 1e-9 * scale * 10:
        raise NotIntertwiner("block reassembly does not reproduce the input", residual=res)
    return IntertwinerParts(b0=b0, b_i=parts)


# ---------------------------------------------------------------------------
# atomic decomposition
# ---------------------------------------------------------------------------

def _cluster_eigenvalues(w: np.ndarray, gap_tol: float) -> list[np.ndarray] | None:
    """Group sorted eigenvalues into clusters; None if any gap is ambiguous.

    Gaps below gap_tol/100 merge, gaps above gap_tol split; anything between
    signals a failed genericity draw.
    """
    order = np.argsort(w)
    clusters = [[order[0]]]
    for prev, cur in zip(order[:-1], order[1:]):
        gap = w[cur] - w[prev]
        if gap < gap_tol / 100.0:
            clusters[-1].append(cur)
        elif gap >= gap_tol:
            clusters.append([cur])
        else:
            return None
    return [np.asarray(c) for c in clusters]


def _center_coefficients(basis: list[np.ndarray], tol: float) -> np.ndarray:
    """Coefficient vectors c with Σ c_k b_k commuting with every b_j."""
    m = len(basis)
    ds = basis[0].shape[0]
    rows = np.zeros((m * ds * ds, m), dtype=np.complex128)
    for j, bj in enumerate(basis):
        for k, bk in enumerate(basis):
            rows[j * ds * ds : (j + 1) * ds * ds, k] = vec(bk @ bj - bj @ bk)
    _, s, vh = np.linalg.svd(rows)
    smax = s[0] if s.size else 0.0
    # guard against counting rounding noise: for an abelian basis every
    # commutator is ~eps and a cutoff relative to smax would keep noise
    bscale = max(frob(b) for b in basis)
    cut = tol * max(smax, bscale)
    rank = int(np.count_nonzero(s > cut)) if smax > 0 else 0
    return np.conj(vh[rank:, :])  # each row: coefficients of one center element


def _fingerprint(block: np.ndarray) -> tuple:
    ev = np.linalg.eigvals(block)
    pairs = sorted((round(z.real / 1e-6) * 1e-6, round(z.imag / 1e-6) * 1e-6) for z in ev)
    return tuple(pairs)


def atomic_decompose(
    alg: AlgebraBasis,
    tol: float = TOL_RANK,
    seed: int = 0,
) -> AtomicDecomposition:
    """Compute the structural (null ⊕ factors) form of a *-closed algebra.

    Pipeline: restrict to the joint support, split the support along the
    spectrum of a generic self-adjoint central element (one cluster per
    factor), split each factor along a generic self-adjoint algebra element
    (d_A distinct eigenvalues of multiplicity d_B), align the degenerate
    eigenframes with algebra partial isometries, and verify the block pattern
    on every input basis element.  Retries with a fresh derived seed on any
    genericity failure.
    """
    d = alg.ambient_dim
    adj_res, prod_res = closure_residuals(alg)
    if max(adj_res, prod_res) > max(tol * 100, 1e-8):
        raise NotClosed("basis is not closed under adjoint/product",
                        residual=max(adj_res, prod_res))

    # support / null split (shared by all attempts; eigh is deterministic)
    if alg.dim == 0:
        return AtomicDecomposition(d=d, u_alg=eye(d), d0=d, factors=[])
    s_op = sum(dag(b) @ b for b in alg.basis)
    w, vecs = np.linalg.eigh(s_op)
    wmax = float(w[-1])
    if wmax <= 0:
        return AtomicDecomposition(d=d, u_alg=eye(d), d0=d, factors=[])
    null_mask = w <= tol * wmax
    d0 = int(np.count_nonzero(null_mask))
    e_null = vecs[:, null_mask]
    e_supp = vecs[:, ~null_mask]
    ds = d - d0
    restricted = [dag(e_supp) @ b @ e_supp for b in alg.basis]

    center_coeffs = _center_coefficients(restricted, tol)
    n_factors_expected = center_coeffs.shape[0]
    if n_factors_expected == 0:
        raise DecompositionFailed("support algebra has an empty center")

    base_rng = CounterRng(seed)
    last_residual = float("nan")
    for attempt in range(_MAX_RETRIES):
        rng = base_rng.derive(attempt)
        try:
            dec = _attempt_decompose(
                alg, restricted, center_coeffs, e_null, e_supp, d, d0, ds, tol, rng
            )
        except _GenericityFailure as exc:
            last_residual = exc.residual
            continue
        return dec
    raise DecompositionFailed(
        f"no generic split found in {_MAX_RETRIES} attempts", residual=last_residual
    )


class _GenericityFailure(Exception):
    def __init__(self, residual: float = float("nan")):
        self.residual = residual


def _generic_self_adjoint(mats: list[np.ndarray], rng: CounterRng) -> np.ndarray:
    x = sum(rng.gauss() * m for m in mats)
    return 0.5 * (x + dag(x))


def _attempt_decompose(alg, restricted, center_coeffs, e_null, e_supp,
                       d, d0, ds, tol, rng) -> AtomicDecomposition:
    n_factors = center_coeffs.shape[0]
    center_mats = [
        sum(c[k] * restricted[k] for k in range(len(restricted)))
        for c in center_coeffs
    ]
    z = _generic_self_adjoint(center_mats, rng)
    wz, vz = np.linalg.eigh(z)
    spread = max(float(wz[-1] - wz[0]), 1.0)
    clusters = _cluster_eigenvalues(wz, _GAP_FRACTION * spread)
    if clusters is None or len(clusters) != n_factors:
        raise _GenericityFailure()

    factor_cols: list[np.ndarray] = []
    factor_dims: list[tuple[int, int]] = []
    for cl in clusters:
        f_i = vz[:, cl]  # ds × n_i
        n_i = f_i.shape[1]
        fac_basis = [dag(f_i) @ m @ f_i for m in restricted]
        x = _generic_self_adjoint(fac_basis, rng)
        wx, vx = np.linalg.eigh(x)
        spread_x = max(float(wx[-1] - wx[0]), 1.0)
        sub = _cluster_eigenvalues(wx, _GAP_FRACTION * spread_x)
        if sub is None:
            raise _GenericityFailure()
        sizes = {len(c) for c in sub}
        if len(sizes) != 1:
            raise _GenericityFailure()
        db = sizes.pop()
        da = len(sub)
        if da * db != n_i:
            raise _GenericityFailure()

        frames = [vx[:, c] for c in sub]  # each n_i × db
        if da > 1:
            y = sum(rng.complex_matrix(1, 1)[0, 0] * m for m in fac_basis)
            aligned = [frames[0]]
            scale_y = max(frob(y), 1e-30)
            for a in range(1, da):
                m_a = dag(frames[a]) @ y @ frames[0]
                sv = np.linalg.svd(m_a, compute_uv=False)
                if sv.size == 0 or sv[-1] < 1e-8 * scale_y:
                    raise _GenericityFailure()
                u_m, _, vh_m = np.linalg.svd(m_a)
                aligned.append(frames[a] @ (u_m @ vh_m))
        else:
            aligned = frames

        cols = np.concatenate(aligned, axis=1)  # order (a, b) row-major, f_i frame
        factor_cols.append(e_supp @ f_i @ cols)
        factor_dims.append((da, db))

    # deterministic factor order: (d_A, d_B), then the spectral fingerprint
    # of the first input basis element compressed to the factor subspace
    b1 = alg.basis[0]
    keyed = []
    for cols, dims in zip(factor_cols, factor_dims):
        fp = _fingerprint(dag(cols) @ b1 @ cols)
        keyed.append((dims, fp, cols))
    keyed.sort(key=lambda t: (t[0], t[1]))

    columns = [_phase_fix_columns(e_null)]
    factors = []
    for dims, _, cols in keyed:
        columns.append(_phase_fix_factor(cols, *dims))
        factors.append(dims)
    u_alg = np.concatenate(columns, axis=1) if columns else eye(d)

    dec = AtomicDecomposition(d=d, u_alg=u_alg, d0=d0, factors=factors)
    worst = 0.0
    for b in alg.basis:
        worst = max(worst, pattern_residual(b, dec))
    if worst > max(1e-9, tol * 10):
        raise _GenericityFailure(residual=worst)
    return dec


def _phase_fix_columns(cols: np.ndarray) -> np.ndarray:
    """Multiply each column by a phase making its largest entry real positive."""
    out = cols.copy()
    for j in range(out.shape[1]):
        v = out[:, j]
        k = int(np.argmax(np.abs(v)))
        if abs(v[k]) > 0:
            out[:, j] = v * (np.conj(v[k]) / abs(v[k]))
    return out


def _phase_fix_factor(cols: np.ndarray, da: int, db: int) -> np.ndarray:
    """Phase-fix an aligned (d_A·d_B)-column factor frame.

    Only phases of the structured form α_a + β_b keep the X_A⊗1_B block
    pattern, so we fix the β_b from the first eigenframe's columns and one
    α_a per remaining frame (from its first column).
    """
    w = cols.reshape(cols.shape[0], da, db).copy()
    for b in range(db):
        v = w[:, 0, b]
        k = int(np.argmax(np.abs(v)))
        if abs(v[k]) > 0:
            w[:, :, b] *= np.conj(v[k]) / abs(v[k])
    for a in range(1, da):
        v = w[:, a, 0]
        k = int(np.argmax(np.abs(v)))
        if abs(v[k]) > 0:
            w[:, a, :] *= np.conj(v[k]) / abs(v[k])
    return w.reshape(cols.shape[0], da * db)


def algebra_from_decomposition(dec: AtomicDecomposition) -> AlgebraBasis:
    """The AlgebraBasis corresponding to an AtomicDecomposition."""
    basis = algebra_pattern_basis(dec)
    contains_identity = dec.d0 == 0 and bool(dec.factors)
    return AlgebraBasis(dec.d, basis, contains_identity=contains_identity)
