"""Completely positive maps: Kraus/Stinespring/Choi forms and factorizations.

Conventions
-----------
A map Φ: L(C^d_in) → L(C^d_out) is represented in the form
``Φ(X) = V†(X ⊗ 1_E)V`` with ``V`` a ((d_in·d_env) × d_out) matrix whose rows
are indexed row-major by (system, environment) — the environment is always
the *last* tensor slot.  Kraus operators are the environment slices
``φ_n = (1 ⊗ ⟨e_n|)V`` and act as ``Φ(X) = Σ_n φ_n† X φ_n``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import AtomicDecomposition, algebra_pattern_basis, pattern_residual
from .errors import FactorizationResidual, NotInvariant, NotMinimal, NotSameMap
from .linalg import (
    TOL_RANK,
    asmatrix,
    dag,
    eye,
    frob,
    kron,
    nearest_isometry,
    svd_rank,
)

__all__ = [
    "StinespringRep",
    "KrausSet",
    "BlockFactorization",
    "InvarianceReport",
    "OrthogonalityReport",
    "kraus_to_stinespring",
    "stinespring_to_kraus",
    "choi",
    "cp_apply",
    "minimal_stinespring",
    "stinespring_minimal_rank",
    "stinespring_gauge",
    "cp_invariance_check",
    "atomic_block_factorize",
    "reassemble_factorization",
    "orthogonality_check",
]


@dataclass
class StinespringRep:
    """Φ(X) = v†(X⊗1_E)v with v ∈ L(C^d_out; C^d_in ⊗ C^d_env)."""

    d_in: int
    d_out: int
    d_env: int
    v: np.ndarray

    def __post_init__(self):
        self.v = asmatrix(self.v)
        expected = (self.d_in * self.d_env, self.d_out)
        if self.v.shape != expected:
            raise ValueError(f"v has shape {self.v.shape}, expected {expected}")

    def env_slices(self) -> np.ndarray:
        """v reshaped to (d_in, d_env, d_out)."""
        return self.v.reshape(self.d_in, self.d_env, self.d_out)


@dataclass
class KrausSet:
    """Φ(X) = Σ_n ops[n]† X ops[n], each op of shape d_in × d_out."""

    d_in: int
    d_out: int
    ops: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.ops = [asmatrix(op) for op in self.ops]
        for op in self.ops:
            if op.shape != (self.d_in, self.d_out):
                raise ValueError(
                    f"op has shape {op.shape}, expected {(self.d_in, self.d_out)}"
                )


@dataclass
class BlockFactorization:
    """Semilocalizable block form of an algebra-invariant Stinespring matrix.

    ``v = (P₀:𝒜† ⊗ 1_E)·v0 + Σ_ij (P_i:𝒜† ⊗ 1_E)(1_{A_i}⊗u_ij)(a_ij⊗1_{D_j})P_j:𝒞``

    a_ij has shape (d_{A_i}·d_F_ij) × d_{C_j}; u_ij is an isometry of shape
    (d_{B_i}·d_env) × (d_F_ij·d_{D_j}).  Order of lists follows the factor
    order of the two decompositions.  Empty blocks (d_F_ij = 0) carry
    zero-dimension matrices.
    """

    v0: np.ndarray
    d_f: list[list[int]]
    a: list[list[np.ndarray]]
    u: list[list[np.ndarray]]
    d_env: int

    def __post_init__(self):
        self.v0 = asmatrix(self.v0)
        self.a = [[asmatrix(m) for m in row] for row in self.a]
        self.u = [[asmatrix(m) for m in row] for row in self.u]
        self.d_f = [[int(n) for n in row] for row in self.d_f]


@dataclass
class InvarianceReport:
    passed: bool
    max_residual: float
    tol: float
    residuals: list[float]
    worst_index: int

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "max_residual": self.max_residual,
            "tol": self.tol,
            "residuals": self.residuals,
            "worst_index": self.worst_index,
        }


@dataclass
class OrthogonalityReport:
    passed: bool
    max_residual: float
    tol: float
    worst_triple: tuple[int, int, int] | None

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "max_residual": self.max_residual,
            "tol": self.tol,
            "worst_triple": list(self.worst_triple) if self.worst_triple else None,
        }


# ---------------------------------------------------------------------------
# representation conversions and evaluation
# ---------------------------------------------------------------------------

def kraus_to_stinespring(k: KrausSet) -> StinespringRep:
    """Stack Kraus operators along a standard environment basis."""
    if not k.ops:
        raise ValueError("need at least one Kraus operator")
    n = len(k.ops)
    v = np.zeros((k.d_in, n, k.d_out), dtype=np.complex128)
    for idx, op in enumerate(k.ops):
        v[:, idx, :] = op
    return StinespringRep(d_in=k.d_in, d_out=k.d_out, d_env=n, v=v.reshape(k.d_in * n, k.d_out))


def stinespring_to_kraus(s: StinespringRep) -> KrausSet:
    """Environment slices φ_n = (1⊗⟨e_n|)v of the Stinespring matrix."""
    slices = s.env_slices()
    return KrausSet(d_in=s.d_in, d_out=s.d_out, ops=[slices[:, n, :] for n in range(s.d_env)])


def cp_apply(rep, x: np.ndarray) -> np.ndarray:
    """Evaluate Φ(x)."""
    x = asmatrix(x)
    if isinstance(rep, KrausSet):
        if x.shape != (rep.d_in, rep.d_in):
            raise ValueError("input dimension mismatch")
        out = np.zeros((rep.d_out, rep.d_out), dtype=np.complex128)
        for op in rep.ops:
            out += dag(op) @ x @ op
        return out
    if isinstance(rep, StinespringRep):
        if x.shape != (rep.d_in, rep.d_in):
            raise ValueError("input dimension mismatch")
        return dag(rep.v) @ kron(x, eye(rep.d_env)) @ rep.v
    raise TypeError(f"unsupported representation: {type(rep).__name__}")


def choi(rep) -> np.ndarray:
    """Choi matrix Σ_kl E_kl ⊗ Φ(E_kl); PSD exactly when Φ is CP."""
    d_in = rep.d_in
    d_out = rep.d_out
    c = np.zeros((d_in * d_out, d_in * d_out), dtype=np.complex128)
    unit = np.zeros((d_in, d_in), dtype=np.complex128)
    for k in range(d_in):
        for l in range(d_in):
            unit[k, l] = 1.0
            c += kron(unit, cp_apply(rep, unit))
            unit[k, l] = 0.0
    return c


# ---------------------------------------------------------------------------
# minimality and gauge
# ---------------------------------------------------------------------------

def _env_slice_matrix(s: StinespringRep) -> np.ndarray:
    """Environment components of all vectors (⟨a|⊗1_E)v|c⟩, as a d_env × (d_in·d_out) matrix."""
    return s.env_slices().transpose(1, 0, 2).reshape(s.d_env, s.d_in * s.d_out)


def stinespring_minimal_rank(s: StinespringRep, tol: float = TOL_RANK) -> int:
    """Dimension of the span of the environment components of (⟨a|⊗1_E)v|c⟩.

    Equals d_env exactly when the representation is minimal.
    """
    return svd_rank(_env_slice_matrix(s), tol=tol)


def minimal_stinespring(
    s: StinespringRep, tol: float = TOL_RANK
) -> tuple[StinespringRep, np.ndarray]:
    """Compress the environment to the span actually reached by the map.

    Returns ``(s_min, w)`` with ``w`` an isometry from the minimal environment
    into the original one such that ``(1 ⊗ w)·v_min = v``.
    """
    m = _env_slice_matrix(s)
    if m.size == 0 or frob(m) == 0.0:
        v_min = np.zeros((0, s.d_out), dtype=np.complex128)
        w = np.zeros((s.d_env, 0), dtype=np.complex128)
        return StinespringRep(s.d_in, s.d_out, 0, v_min), w
    u, sv, _ = np.linalg.svd(m, full_matrices=False)
    rank = int(np.count_nonzero(sv > tol * sv[0]))
    w = u[:, :rank]  # d_env × rank, isometry onto the reached span
    p = dag(w)
    v_min = kron(eye(s.d_in), p) @ s.v
    s_min = StinespringRep(s.d_in, s.d_out, rank, v_min)
    return s_min, w


def _same_map_residual(s1: StinespringRep, s2: StinespringRep) -> float:
    worst = 0.0
    unit = np.zeros((s1.d_in, s1.d_in), dtype=np.complex128)
    for k in range(s1.d_in):
        for l in range(s1.d_in):
            unit[k, l] = 1.0
            worst = max(worst, frob(cp_apply(s1, unit) - cp_apply(s2, unit)))
            unit[k, l] = 0.0
    return worst


def stinespring_gauge(
    s1: StinespringRep, s2: StinespringRep, tol: float = TOL_RANK
) -> np.ndarray:
    """Isometry w with (1⊗w)·v1 = v2, for s1 minimal and both maps equal.

    Solved by least squares over the spanning set of environment components;
    minimality of s1 makes the solution unique.
    """
    if (s1.d_in, s1.d_out) != (s2.d_in, s2.d_out):
        raise ValueError("representations act between different spaces")
    scale = max(1.0, frob(s1.v), frob(s2.v))
    m1 = _env_slice_matrix(s1)
    if svd_rank(m1, tol=tol) < s1.d_env:
        raise NotMinimal("first representation has a compressible environment")
    res_map = _same_map_residual(s1, s2)
    if res_map > max(tol, 1e-10) * scale * 10:
        raise NotSameMap("representations define different maps", residual=res_map)
    m2 = _env_slice_matrix(s2)
    w = m2 @ np.linalg.pinv(m1)
    if w.size:
        iso_res = frob(dag(w) @ w - eye(s1.d_env))
        if iso_res <= 10 * max(tol, 1e-10) * scale:
            w = nearest_isometry(w)
    recon = frob(kron(eye(s1.d_in), w) @ s1.v - s2.v)
    if recon > 1e-9 * scale * 10:
        raise NotSameMap("gauge isometry does not connect the representations",
                         residual=recon)
    return w


# ---------------------------------------------------------------------------
# invariance and block factorization
# ---------------------------------------------------------------------------

def cp_invariance_check(
    rep,
    dec_a: AtomicDecomposition,
    dec_c: AtomicDecomposition,
    tol: float = 1e-9,
) -> InvarianceReport:
    """Does Φ map the input algebra into the output algebra?

    Evaluates Φ on an HS-orthonormal basis of the input algebra and measures
    the Frobenius distance of each image from the output algebra.
    """
    d_in = rep.d_in
    d_out = rep.d_out
    if dec_a.d != d_in or dec_c.d != d_out:
        raise ValueError("decomposition dimensions do not match the map")
    residuals = []
    for xhat in algebra_pattern_basis(dec_a):
        residuals.append(pattern_residual(cp_apply(rep, xhat), dec_c))
    if not residuals:
        return InvarianceReport(True, 0.0, tol, [], -1)
    worst = int(np.argmax(residuals))
    max_res = float(residuals[worst])
    return InvarianceReport(max_res <= tol, max_res, tol, [float(r) for r in residuals],
                            worst)


def _pair_block(v: np.ndarray, dec_a: AtomicDecomposition, dec_c: AtomicDecomposition,
                e: int, i: int, j: int) -> np.ndarray:
    p_i = dec_a.p_factor(i)
    p_j = dec_c.p_factor(j)
    return kron(p_i, eye(e)) @ v @ dag(p_j)


def atomic_block_factorize(
    s: StinespringRep,
    dec_a: AtomicDecomposition,
    dec_c: AtomicDecomposition,
    tol: float = 1e-9,
) -> BlockFactorization:
    """Factor an invariant map's Stinespring matrix into per-pair pieces.

    For each pair of factors, the block V_ij = (P_i⊗1_E)·v·P_j† splits as
    (1_{A_i}⊗U_ij)(A_ij⊗1_{D_j}) with A_ij a minimal Stinespring matrix of
    the reduced map  X ↦ (1⊗⟨ψ|)V_ij†(X⊗1⊗1_E)V_ij(1⊗|ψ⟩)  and U_ij an
    isometry solved from the overdetermined intertwining relation.
    """
    report = cp_invariance_check(s, dec_a, dec_c, tol=tol)
    if not report.passed:
        raise NotInvariant("map does not leave the algebra pair invariant",
                           residual=report.max_residual)
    v = s.v
    e = s.d_env
    scale = max(1.0, frob(v))

    # rows in factor i of the input algebra must not reach the output null part
    p0_c = dec_c.p_null()
    for i in range(len(dec_a.factors)):
        p_i = dec_a.p_factor(i)
        blk_i0 = kron(p_i, eye(e)) @ v @ dag(p0_c)
        if frob(blk_i0) > tol * scale * 10:
            raise FactorizationResidual(
                f"factor-{i} rows reach the null output block", residual=frob(blk_i0)
            )

    v0 = kron(dec_a.p_null(), eye(e)) @ v

    d_f: list[list[int]] = []
    a_blocks: list[list[np.ndarray]] = []
    u_blocks: list[list[np.ndarray]] = []
    worst_pair = None
    worst_res = 0.0
    for i, (da, db) in enumerate(dec_a.factors):
        d_f.append([])
        a_blocks.append([])
        u_blocks.append([])
        for j, (dc, dd) in enumerate(dec_c.factors):
            v_ij = _pair_block(v, dec_a, dec_c, e, i, j)
            if frob(v_ij) <= max(tol, 1e-12) * scale * 10:
                # below the noise floor of the parent matrix: empty pair
                d_f[i].append(0)
                a_blocks[i].append(np.zeros((0, dc), dtype=np.complex128))
                u_blocks[i].append(np.zeros((db * e, 0), dtype=np.complex128))
                continue
            # reference vector: first basis vector of H_{D_j}
            psi = np.zeros((dd, 1), dtype=np.complex128)
            psi[0, 0] = 1.0
            g = v_ij @ kron(eye(dc), psi)  # (da·db·e) × dc, env = B_i⊗E
            g_rep = StinespringRep(d_in=da, d_out=dc, d_env=db * e, v=g)
            a_min, _ = minimal_stinespring(g_rep, tol=tol)
            dfij = a_min.d_env
            a_ij = a_min.v

            # totality: environment components of a_ij span all of H_F
            if dfij and svd_rank(
                a_ij.reshape(da, dfij, dc).transpose(1, 0, 2).reshape(dfij, da * dc),
                tol=tol,
            ) != dfij:
                raise FactorizationResidual(
                    f"pair ({i},{j}): reduced dilation is not minimal"
                )

            # solve (1_A ⊗ U)(A ⊗ 1_D) = V_ij for U by stacked least squares
            lhs = kron(a_ij, eye(dd)).reshape(da, dfij * dd, dc * dd)
            rhs = v_ij.reshape(da, db * e, dc * dd)
            m1 = np.concatenate(list(lhs), axis=1)  # (df·dd) × (da·dc·dd)
            m2 = np.concatenate(list(rhs), axis=1)  # (db·e) × (da·dc·dd)
            u_ij = m2 @ np.linalg.pinv(m1) if m1.size else np.zeros(
                (db * e, dfij * dd), dtype=np.complex128
            )
            if u_ij.size:
                iso_res = frob(dag(u_ij) @ u_ij - eye(dfij * dd))
                if iso_res <= 10 * max(tol, 1e-10) * scale:
                    u_ij = nearest_isometry(u_ij)
            res = frob(u_ij @ m1 - m2) if m1.size else frob(m2)
            if res > worst_res:
                worst_res, worst_pair = res, (i, j)

            d_f[i].append(dfij)
            a_blocks[i].append(a_ij)
            u_blocks[i].append(u_ij)

    bf = BlockFactorization(v0=v0, d_f=d_f, a=a_blocks, u=u_blocks, d_env=e)

    ortho = orthogonality_check(bf, tol=max(1e-9, tol))
    if not ortho.passed:
        raise FactorizationResidual(
            f"isometry/orthogonality violated at {ortho.worst_triple}",
            residual=ortho.max_residual,
        )
    recon = frob(reassemble_factorization(bf, dec_a, dec_c) - v)
    if recon > 1e-8 * max(1.0, frob(v)):
        raise FactorizationResidual(
            f"reassembly misses the input (worst pair {worst_pair})", residual=recon
        )
    return bf


def reassemble_factorization(
    bf: BlockFactorization,
    dec_a: AtomicDecomposition,
    dec_c: AtomicDecomposition,
) -> np.ndarray:
    """Rebuild the Stinespring matrix from its block factorization."""
    e = bf.d_env
    d_in = dec_a.d
    d_out = dec_c.d
    v = kron(dag(dec_a.p_null()), eye(e)) @ bf.v0
    for i, (da, db) in enumerate(dec_a.factors):
        p_i = dec_a.p_factor(i)
        for j, (dc, dd) in enumerate(dec_c.factors):
            p_j = dec_c.p_factor(j)
            dfij = bf.d_f[i][j]
            a_ij = bf.a[i][j]
            u_ij = bf.u[i][j]
            lhs = kron(a_ij, eye(dd)).reshape(da, dfij * dd, dc * dd)
            v_ij = np.concatenate([u_ij @ lhs[a] for a in range(da)], axis=0)
            v += kron(dag(p_i), eye(e)) @ v_ij @ p_j
    assert v.shape == (d_in * e, d_out)
    return v


def orthogonality_check(bf: BlockFactorization, tol: float = 1e-9) -> OrthogonalityReport:
    """Check u_ik†u_il = δ_kl·1 across all row-sharing pairs (includes isometry)."""
    worst = 0.0
    worst_triple = None
    for i, row in enumerate(bf.u):
        for k, u_ik in enumerate(row):
            for l, u_il in enumerate(row):
                prod = dag(u_ik) @ u_il
                target = eye(prod.shape[0]) if k == l else np.zeros_like(prod)
                res = frob(prod - target)
                if res > worst:
                    worst, worst_triple = res, (i, k, l)
    return OrthogonalityReport(worst <= tol, float(worst), tol, worst_triple)
