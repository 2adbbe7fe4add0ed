"""Generators of the form L(X) = V†(X⊗1_E)V − K†X − XK and their normal forms.

The central objects are

* :func:`gkls_minimalize` / :func:`gkls_gauge` — the minimal choice of (V, K)
  for a fixed generator and the (W, ψ, μ) freedom connecting two choices;
* :func:`invariant_split` — the exact three-part split V = (P₀†⊗1)V₀ + A + B,
  K = B†A + ½B†B + K_𝒜 + iH_{𝒜′} + P₀†K₀ valid whenever L leaves the algebra
  invariant;
* :func:`atomic_normal_form` / :func:`reconstruct_from_normal_form` — the
  fully block-factorized form over an atomic algebra, and its inverse;
* :func:`reduce_normal_form_minimal` / :func:`normal_form_gauge` — minimality
  reduction of a normal form and the residual gauge freedom between two
  minimal forms of the same generator.

Reconstruction deliberately evaluates K through the exact identity
``K = B†A + ½B†B + K_𝒜 + iH_{𝒜′} + P₀†K₀`` (with A, B reassembled from their
blocks): the B†A term carries cross-factor blocks (1⊗B_i†)V_ij^sc with i≠j
which are generically nonzero and must not be dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import (
    AtomicDecomposition,
    algebra_pattern_basis,
    intertwiner_decompose,
    pattern_residual,
    twirl_intertwiner,
    twirl_to_commutant,
)
from .cpmaps import (
    StinespringRep,
    atomic_block_factorize,
    minimal_stinespring,
    stinespring_gauge,
    stinespring_minimal_rank,
    stinespring_to_kraus,
)
from .errors import (
    FactorizationResidual,
    NotEquivalent,
    NotInvariant,
    NotMinimal,
    NotSameGenerator,
    NotSameMap,
)
from .linalg import (
    TOL_RANK,
    asmatrix,
    dag,
    eye,
    frob,
    im_part,
    kron,
    nearest_isometry,
    orthonormalize_span,
    svd_rank,
)

__all__ = [
    "GKLSRep",
    "AtomicNormalForm",
    "GaugeData",
    "InvariantSplit",
    "KOnlySplit",
    "MinimalizeResult",
    "GklsGauge",
    "gkls_apply",
    "generator_superoperator",
    "gkls_minimalize",
    "gkls_minimal_rank",
    "gkls_gauge",
    "invariant_split",
    "atomic_normal_form",
    "reconstruct_from_normal_form",
    "reduce_normal_form_minimal",
    "normal_form_gauge",
    "normal_form_residuals",
    "normal_form_minimality",
    "k_only_split",
]


@dataclass
class GKLSRep:
    """L(X) = v†(X⊗1_E)v − k†X − Xk on L(C^d)."""

    d: int
    stine: StinespringRep
    k: np.ndarray

    def __post_init__(self):
        self.k = asmatrix(self.k)
        if self.stine.d_in != self.d or self.stine.d_out != self.d:
            raise ValueError("Stinespring part must act on C^d on both sides")
        if self.k.shape != (self.d, self.d):
            raise ValueError(f"k has shape {self.k.shape}, expected {(self.d, self.d)}")

    @property
    def v(self) -> np.ndarray:
        return self.stine.v

    @property
    def d_env(self) -> int:
        return self.stine.d_env


@dataclass
class AtomicNormalForm:
    """Block data of a generator leaving the algebra of ``dec`` invariant.

    Only shapes are enforced at construction, so that deliberately broken
    forms (negative controls) remain constructible; use
    :func:`normal_form_residuals` for the isometry/orthogonality/self-adjoint
    invariants.
    """

    dec: AtomicDecomposition
    v0: np.ndarray
    k0: np.ndarray
    k_a: list[np.ndarray]
    h_b: list[np.ndarray]
    b: list[np.ndarray]
    d_f: list[list[int]]
    a: list[list[np.ndarray]]
    u: list[list[np.ndarray]]
    d_env: int

    def __post_init__(self):
        dec = self.dec
        e = self.d_env
        self.v0 = asmatrix(self.v0)
        self.k0 = asmatrix(self.k0)
        self.k_a = [asmatrix(m) for m in self.k_a]
        self.h_b = [asmatrix(m) for m in self.h_b]
        self.b = [asmatrix(m) for m in self.b]
        self.d_f = [[int(n) for n in row] for row in self.d_f]
        self.a = [[asmatrix(m) for m in row] for row in self.a]
        self.u = [[asmatrix(m) for m in row] for row in self.u]
        n = len(dec.factors)
        if self.v0.shape != (dec.d0 * e, dec.d):
            raise ValueError("v0 shape mismatch")
        if self.k0.shape != (dec.d0, dec.d):
            raise ValueError("k0 shape mismatch")
        if not (len(self.k_a) == len(self.h_b) == len(self.b) == n):
            raise ValueError("per-factor lists must match the factor count")
        if not (len(self.d_f) == len(self.a) == len(self.u) == n):
            raise ValueError("per-pair tables must have one row per factor")
        for i, (da, db) in enumerate(dec.factors):
            if self.k_a[i].shape != (da, da):
                raise ValueError(f"k_a[{i}] shape mismatch")
            if self.h_b[i].shape != (db, db):
                raise ValueError(f"h_b[{i}] shape mismatch")
            if self.b[i].shape != (db * e, db):
                raise ValueError(f"b[{i}] shape mismatch")
            if not (len(self.d_f[i]) == len(self.a[i]) == len(self.u[i]) == n):
                raise ValueError("per-pair tables must have one column per factor")
            for j, (daj, dbj) in enumerate(dec.factors):
                dfij = self.d_f[i][j]
                if self.a[i][j].shape != (da * dfij, daj):
                    raise ValueError(f"a[{i}][{j}] shape mismatch")
                if self.u[i][j].shape != (db * e, dfij * dbj):
                    raise ValueError(f"u[{i}][{j}] shape mismatch")


@dataclass
class GaugeData:
    """The (W, ψ, μ) freedom between two minimal normal forms."""

    w_ii: list[np.ndarray]
    psi_i: list[np.ndarray]
    mu_i: list[float]
    w_pairs: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)


@dataclass
class InvariantSplit:
    """V = (P₀†⊗1_E)v0 + a + b and K = b†a + ½b†b + k_alg + i·h_comm + P₀†k0."""

    v0: np.ndarray
    a: np.ndarray
    b: np.ndarray
    k_alg: np.ndarray
    h_comm: np.ndarray
    k0: np.ndarray


@dataclass
class KOnlySplit:
    """K = k_alg + i·h_comm + P₀†k0 for purely anticommutator generators."""

    k_alg: np.ndarray
    h_comm: np.ndarray
    k0: np.ndarray


@dataclass
class MinimalizeResult:
    g_min: GKLSRep
    p: np.ndarray
    phi_vec: np.ndarray


@dataclass
class GklsGauge:
    w: np.ndarray
    psi: np.ndarray
    mu: float


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def gkls_apply(g: GKLSRep, x: np.ndarray) -> np.ndarray:
    """Evaluate L(x)."""
    x = asmatrix(x)
    if x.shape != (g.d, g.d):
        raise ValueError("input dimension mismatch")
    return dag(g.v) @ kron(x, eye(g.d_env)) @ g.v - dag(g.k) @ x - x @ g.k


def generator_superoperator(g: GKLSRep) -> np.ndarray:
    """L as a d²×d² matrix acting on row-major vec(X)."""
    d = g.d
    ident = eye(d)
    s = -kron(dag(g.k), ident) - kron(ident, g.k.T)
    for op in stinespring_to_kraus(g.stine).ops:
        s += kron(dag(op), op.T)
    return s


def _superop_distance(g1: GKLSRep, g2: GKLSRep) -> float:
    return frob(generator_superoperator(g1) - generator_superoperator(g2))


# ---------------------------------------------------------------------------
# minimality (commutator-span machinery)
# ---------------------------------------------------------------------------

def _env_slices(v: np.ndarray, d: int, e: int) -> np.ndarray:
    return v.reshape(d, e, d)

def _commutator_env_family(v: np.ndarray, d: int, e: int) -> list[np.ndarray]:
    """Vectors spanning the environment components of {(X⊗1_E)v − vX}|ψ⟩.

    The component at system index a of ((E_bc⊗1)v − vE_bc)|e_d⟩ equals
    δ_ab·slice(c,d) − δ_cd·slice(a,b), so the span is generated by the
    off-diagonal slices together with differences of diagonal slices.
    """
    sl = _env_slices(v, d, e)
    fam = []
    for c in range(d):
        for dd in range(d):
            if c != dd:
                fam.append(sl[c, :, dd])
    for c in range(1, d):
        fam.append(sl[c, :, c] - sl[0, :, 0])
    return fam


def _commutator_full_family(v: np.ndarray, d: int, e: int, tol: float) -> list[np.ndarray]:
    """Reduced generating set of span{((X⊗1_E)v − vX)|ψ⟩} in C^d ⊗ C^e."""
    sl = _env_slices(v, d, e)
    off = [sl[c, :, dd] for c in range(d) for dd in range(d) if c != dd]
    off_basis = orthonormalize_span(off, tol=tol, ambient_dim=e) if off else None
    fam = []
    if off_basis is not None:
        for b in range(d):
            basis_vec = np.zeros(d, dtype=np.complex128)
            basis_vec[b] = 1.0
            for k in range(off_basis.count):
                fam.append(np.kron(basis_vec, off_basis.vectors[k]))
    for b in range(d):
        basis_vec = np.zeros(d, dtype=np.complex128)
        basis_vec[b] = 1.0
        for c in range(d):
            fam.append(np.kron(basis_vec, sl[c, :, c]) - v[:, b])
    return fam


def gkls_minimal_rank(s: StinespringRep, tol: float = TOL_RANK) -> int:
    """dim span{((X⊗1_E)v − vX)|ψ⟩}; equals d·d_env iff (V, K) is minimal."""
    fam = _commutator_full_family(s.v, s.d_in, s.d_env, tol)
    if not fam:
        return 0
    return svd_rank(np.stack(fam, axis=1), tol=tol)


def gkls_minimalize(g: GKLSRep, tol: float = TOL_RANK) -> MinimalizeResult:
    """Smallest environment realizing the same generator.

    Projects the environment onto the span reached by the commutator family;
    the discarded part of V is necessarily of the form 1⊗|φ̃⟩ and is absorbed
    into K as  K_min = K − (1⊗⟨φ̃|)V + ½‖φ̃‖².
    """
    d, e = g.d, g.d_env
    fam = _commutator_env_family(g.v, d, e)
    sb = orthonormalize_span(fam, tol=tol, ambient_dim=e)
    p = np.conj(sb.vectors)  # rank × e, rows orthonormal: the projection H_E → H_E'
    rank = sb.count
    v_min = kron(eye(d), p) @ g.v
    resid = g.v - kron(eye(d), dag(p) @ p) @ g.v
    rs = _env_slices(resid, d, e)
    phi = np.einsum("aea->e", rs) / d
    pure = np.zeros_like(rs)
    for a in range(d):
        pure[a, :, a] = phi
    structure = frob(resid - pure.reshape(d * e, d))
    scale = max(1.0, frob(g.v))
    if structure > max(1e-9, 10 * tol) * scale:
        raise FactorizationResidual(
            "environment-compression residual is not of intertwiner form",
            residual=structure,
        )
    k_min = (
        g.k
        - kron(eye(d), np.conj(phi)[None, :]) @ g.v
        + 0.5 * float(np.vdot(phi, phi).real) * eye(d)
    )
    g_min = GKLSRep(d=d, stine=StinespringRep(d, d, rank, v_min), k=k_min)
    # certificates: totality on the compressed environment, and map equality
    if gkls_minimal_rank(g_min.stine, tol=tol) != d * rank:
        raise FactorizationResidual("compressed environment is still not minimal")
    gap = _superop_distance(g, g_min)
    if gap > 1e-9 * max(1.0, scale * scale, frob(g.k)):
        raise FactorizationResidual("minimalization changed the generator", residual=gap)
    return MinimalizeResult(g_min=g_min, p=p, phi_vec=phi)


def gkls_gauge(g1: GKLSRep, g2: GKLSRep, tol: float = TOL_RANK) -> GklsGauge:
    """Find (W, ψ, μ) with v2 = (1⊗W)v1 + 1⊗|ψ⟩ and the matching K relation.

    Requires g1 minimal; W is then unique, solved by least squares on the
    commutator family, and μ is read off the normalized trace of the K
    residual (which is exactly iμ·1).
    """
    if g1.d != g2.d:
        raise ValueError("generators act on different spaces")
    d = g1.d
    scale = max(1.0, frob(g1.v), frob(g2.v), frob(g1.k), frob(g2.k))
    gap = _superop_distance(g1, g2)
    if gap > max(tol, 1e-10) * scale**2 * 10:
        raise NotSameGenerator("inputs define different generators", residual=gap)
    fam1 = _commutator_env_family(g1.v, d, g1.d_env)
    fam2 = _commutator_env_family(g2.v, d, g2.d_env)
    m1 = (
        np.stack(fam1, axis=1)
        if fam1
        else np.zeros((g1.d_env, 0), dtype=np.complex128)
    )
    m2 = (
        np.stack(fam2, axis=1)
        if fam2
        else np.zeros((g2.d_env, 0), dtype=np.complex128)
    )
    if svd_rank(m1, tol=tol) < g1.d_env:
        raise NotMinimal("first generator has a compressible environment")
    w = m2 @ np.linalg.pinv(m1)
    if w.size:
        iso_res = frob(dag(w) @ w - eye(g1.d_env))
        if iso_res <= 10 * max(tol, 1e-10) * scale:
            w = nearest_isometry(w)
    resid = g2.v - kron(eye(d), w) @ g1.v
    rs = _env_slices(resid, d, g2.d_env)
    psi = np.einsum("aea->e", rs) / d
    pure = np.zeros_like(rs)
    for a in range(d):
        pure[a, :, a] = psi
    structure = frob(resid - pure.reshape(d * g2.d_env, d))
    if structure > 1e-8 * scale * 10:
        raise NotSameGenerator(
            "V difference is not of gauge form", residual=structure
        )
    resid_k = (
        g2.k
        - g1.k
        - kron(eye(d), (np.conj(psi)[None, :] @ w)) @ g1.v
        - 0.5 * float(np.vdot(psi, psi).real) * eye(d)
    )
    mu = float(np.trace(resid_k).imag) / d
    k_structure = frob(resid_k - 1j * mu * eye(d))
    if k_structure > 1e-8 * scale * 10:
        raise NotSameGenerator("K difference is not of gauge form", residual=k_structure)
    return GklsGauge(w=w, psi=psi, mu=mu)


# ---------------------------------------------------------------------------
# invariant algebra: three-part split
# ---------------------------------------------------------------------------

def _invariance_residuals(g: GKLSRep, dec: AtomicDecomposition) -> list[float]:
    return [
        pattern_residual(gkls_apply(g, xhat), dec)
        for xhat in algebra_pattern_basis(dec)
    ]


def invariant_split(
    g: GKLSRep, dec: AtomicDecomposition, tol: float = 1e-9
) -> InvariantSplit:
    """Split (V, K) along the algebra: intertwiner part B, null part V₀/K₀,
    CP part A with Φ_A(𝒜) ⊆ 𝒜, plus K_𝒜 ∈ 𝒜 and self-adjoint H_{𝒜′} ∈ 𝒜′.

    The construction averages V to get B, and splits
    κ = K − B†A − ½B†B through the commutant twirl.  All identities
    reassemble (V, K) exactly; the structural memberships are verified and
    hold whenever the generator actually leaves the algebra invariant.
    """
    if dec.d != g.d:
        raise ValueError("decomposition dimension does not match the generator")
    res = _invariance_residuals(g, dec)
    scale = max(1.0, frob(g.v), frob(g.k))
    limit = max(tol, 1e-10) * scale**2 * 10
    if res and max(res) > limit:
        raise NotInvariant(
            f"generator moves algebra basis element {int(np.argmax(res))} "
            f"out of the algebra",
            residual=max(res),
        )
    e = g.d_env
    p0 = dec.p_null()
    v0 = kron(p0, eye(e)) @ g.v
    b = twirl_intertwiner(g.v, dec, e)
    a = g.v - kron(dag(p0), eye(e)) @ v0 - b
    kappa = g.k - dag(b) @ a - 0.5 * dag(b) @ b
    kc = twirl_to_commutant(kappa, dec)
    h_comm = im_part(kc)
    k_alg = kappa - dag(p0) @ (p0 @ kappa) - 1j * h_comm
    k0 = p0 @ kappa

    check = max(1e-8, 10 * tol) * scale**2
    worst_a = 0.0
    worst_b = 0.0
    for xhat in algebra_pattern_basis(dec):
        worst_a = max(worst_a, pattern_residual(dag(a) @ kron(xhat, eye(e)) @ a, dec))
        worst_b = max(worst_b, frob(kron(xhat, eye(e)) @ b - b @ xhat))
    if worst_a > check or worst_b > check:
        raise NotInvariant(
            "split blocks fail their structural conditions",
            residual=max(worst_a, worst_b),
        )
    if pattern_residual(k_alg, dec) > check:
        raise NotInvariant(
            "algebra part of K is not an algebra element",
            residual=pattern_residual(k_alg, dec),
        )
    v_back = kron(dag(p0), eye(e)) @ v0 + a + b
    k_back = dag(b) @ a + 0.5 * dag(b) @ b + k_alg + 1j * h_comm + dag(p0) @ k0
    assert frob(v_back - g.v) <= 1e-10 * scale + 1e-12
    assert frob(k_back - g.k) <= 1e-10 * scale**2 + 1e-12
    return InvariantSplit(v0=v0, a=a, b=b, k_alg=k_alg, h_comm=h_comm, k0=k0)


def k_only_split(
    k: np.ndarray, dec: AtomicDecomposition, tol: float = 1e-9
) -> KOnlySplit:
    """Split of K for the anticommutator generator L(X) = −K†X − XK."""
    k = asmatrix(k)
    if k.shape != (dec.d, dec.d):
        raise ValueError("dimension mismatch")
    scale = max(1.0, frob(k))
    limit = max(tol, 1e-10) * scale * 10
    worst = 0.0
    for xhat in algebra_pattern_basis(dec):
        worst = max(worst, pattern_residual(-dag(k) @ xhat - xhat @ k, dec))
    if worst > limit:
        raise NotInvariant("anticommutator generator does not preserve the algebra",
                           residual=worst)
    p0 = dec.p_null()
    kc = twirl_to_commutant(k, dec)
    h_comm = im_part(kc)
    k_alg = k - dag(p0) @ (p0 @ k) - 1j * h_comm
    k0 = p0 @ k
    if pattern_residual(k_alg, dec) > max(1e-8, 10 * tol) * scale:
        raise NotInvariant("algebra part of K is not an algebra element",
                           residual=pattern_residual(k_alg, dec))
    return KOnlySplit(k_alg=k_alg, h_comm=h_comm, k0=k0)


# ---------------------------------------------------------------------------
# atomic normal form
# ---------------------------------------------------------------------------

def _v_sc_block(a_ij: np.ndarray, u_ij: np.ndarray, da_i: int, db_j: int) -> np.ndarray:
    """V_ij^sc = (1_{A_i}⊗u_ij)(a_ij⊗1_{B_j}), rows ordered (a, b, ε)."""
    cols = a_ij.shape[1] * db_j
    lhs = kron(a_ij, eye(db_j)).reshape(da_i, -1, cols)
    return np.concatenate([u_ij @ lhs[x] for x in range(da_i)], axis=0)


def _assemble_a_b(nf: AtomicNormalForm) -> tuple[np.ndarray, np.ndarray]:
    dec = nf.dec
    e = nf.d_env
    d = dec.d
    a_full = np.zeros((d * e, d), dtype=np.complex128)
    b_full = np.zeros((d * e, d), dtype=np.complex128)
    for i, (dai, dbi) in enumerate(dec.factors):
        p_i = dec.p_factor(i)
        lift_i = kron(dag(p_i), eye(e))
        b_full += lift_i @ kron(eye(dai), nf.b[i]) @ p_i
        for j, (_, dbj) in enumerate(dec.factors):
            v_sc = _v_sc_block(nf.a[i][j], nf.u[i][j], dai, dbj)
            a_full += lift_i @ v_sc @ dec.p_factor(j)
    return a_full, b_full


def reconstruct_from_normal_form(nf: AtomicNormalForm) -> GKLSRep:
    """Rebuild (V, K) from normal-form blocks via the exact split identity."""
    dec = nf.dec
    d = dec.d
    e = nf.d_env
    p0 = dec.p_null()
    a_full, b_full = _assemble_a_b(nf)
    v = kron(dag(p0), eye(e)) @ nf.v0 + a_full + b_full
    k_alg = np.zeros((d, d), dtype=np.complex128)
    h_comm = np.zeros((d, d), dtype=np.complex128)
    for i, (dai, dbi) in enumerate(dec.factors):
        p_i = dec.p_factor(i)
        k_alg += dag(p_i) @ kron(nf.k_a[i], eye(dbi)) @ p_i
        h_comm += dag(p_i) @ kron(eye(dai), nf.h_b[i]) @ p_i
    k = (
        dag(b_full) @ a_full
        + 0.5 * dag(b_full) @ b_full
        + k_alg
        + 1j * h_comm
        + dag(p0) @ nf.k0
    )
    return GKLSRep(d=d, stine=StinespringRep(d, d, e, v), k=k)


def atomic_normal_form(
    g: GKLSRep, dec: AtomicDecomposition, tol: float = 1e-9
) -> AtomicNormalForm:
    """Full block normal form of an invariant generator.

    Pipeline: three-part split, block factorization of the CP part A
    (input and output algebra both 𝒜), intertwiner blocks of B, commutant
    blocks of H_{𝒜′}, and the exact fold of all null-sector pieces into
    (V₀, K₀).
    """
    split = invariant_split(g, dec, tol=tol)
    e = g.d_env
    d0 = dec.d0
    s_a = StinespringRep(d_in=dec.d, d_out=dec.d, d_env=e, v=split.a)
    bf = atomic_block_factorize(s_a, dec, dec, tol=max(tol, 1e-9))
    parts = intertwiner_decompose(split.b, dec, e, 1, tol=max(tol, 1e-9))

    u = dec.u_alg
    ht = dag(u) @ split.h_comm @ u
    kt = dag(u) @ split.k_alg @ u
    h0 = ht[:d0, :d0]
    k_a = []
    h_b = []
    for i, (da, db) in enumerate(dec.factors):
        off = dec.offsets()[i]
        blk_h = ht[off : off + da * db, off : off + da * db].reshape(da, db, da, db)
        blk_k = kt[off : off + da * db, off : off + da * db].reshape(da, db, da, db)
        h_i = np.einsum("abac->bc", blk_h) / da
        h_b.append(0.5 * (h_i + dag(h_i)))
        k_a.append(np.einsum("abcb->ac", blk_k) / db)

    p0 = dec.p_null()
    b0 = parts.b0
    v0 = split.v0 + bf.v0 + b0 @ p0
    k0 = split.k0 + dag(b0) @ bf.v0 + 0.5 * dag(b0) @ b0 @ p0 + 1j * h0 @ p0

    nf = AtomicNormalForm(
        dec=dec,
        v0=v0,
        k0=k0,
        k_a=k_a,
        h_b=h_b,
        b=parts.b_i,
        d_f=bf.d_f,
        a=bf.a,
        u=bf.u,
        d_env=e,
    )
    back = reconstruct_from_normal_form(nf)
    scale = max(1.0, frob(g.v), frob(g.k))
    gap = max(frob(back.v - g.v), frob(back.k - g.k))
    if gap > 1e-8 * scale**2:
        raise FactorizationResidual(
            "normal form does not reconstruct the generator", residual=gap
        )
    return nf


def normal_form_residuals(nf: AtomicNormalForm) -> dict:
    """Residuals of the normal-form invariants (all ≈ 0 for valid forms)."""
    herm_res = 0.0
    for h in nf.h_b:
        herm_res = max(herm_res, frob(h - dag(h)))
    iso_res = 0.0
    ortho_res = 0.0
    for i, row in enumerate(nf.u):
        for k, u_ik in enumerate(row):
            iso_res = max(iso_res, frob(dag(u_ik) @ u_ik - eye(u_ik.shape[1])))
            for l, u_il in enumerate(row):
                if k != l:
                    ortho_res = max(ortho_res, frob(dag(u_ik) @ u_il))
    return {
        "h_selfadjoint": herm_res,
        "u_isometry": iso_res,
        "u_orthogonality": ortho_res,
    }


# ---------------------------------------------------------------------------
# minimality reduction and gauge of normal forms
# ---------------------------------------------------------------------------

def _little_generator(nf: AtomicNormalForm, i: int) -> GKLSRep:
    da = nf.dec.factors[i][0]
    return GKLSRep(
        d=da,
        stine=StinespringRep(da, da, nf.d_f[i][i], nf.a[i][i]),
        k=nf.k_a[i],
    )


def normal_form_minimality(nf: AtomicNormalForm, tol: float = TOL_RANK) -> dict:
    """Certificates: per-factor commutator-span ranks and per-pair slice ranks.

    The form is minimal iff every diagonal rank equals d_{A_i}·d_F_ii and
    every off-diagonal rank equals d_F_ij.
    """
    diag = []
    offdiag = {}
    minimal = True
    for i, (da, _) in enumerate(nf.dec.factors):
        rank = gkls_minimal_rank(
            StinespringRep(da, da, nf.d_f[i][i], nf.a[i][i]), tol=tol
        )
        diag.append(rank)
        minimal &= rank == da * nf.d_f[i][i]
        for j, (daj, _) in enumerate(nf.dec.factors):
            if i == j:
                continue
            r = stinespring_minimal_rank(
                StinespringRep(da, daj, nf.d_f[i][j], nf.a[i][j]), tol=tol
            )
            offdiag[(i, j)] = r
            minimal &= r == nf.d_f[i][j]
    return {"diagonal_ranks": diag, "pair_ranks": offdiag, "minimal": bool(minimal)}


def reduce_normal_form_minimal(
    nf: AtomicNormalForm, tol: float = TOL_RANK
) -> AtomicNormalForm:
    """Shrink every H_F_ij to its minimal dimension, compensating exactly.

    Diagonal factors are reduced as little generators (the stripped 1⊗|φ̃⟩
    part of A_ii moves into B_i and twists H_{B_i}); off-diagonal blocks are
    reduced as plain Stinespring matrices.  The reconstructed (V, K) is
    unchanged.
    """
    dec = nf.dec
    e = nf.d_env
    n = len(dec.factors)
    k_a = list(nf.k_a)
    h_b = list(nf.h_b)
    b = list(nf.b)
    d_f = [list(row) for row in nf.d_f]
    a = [list(row) for row in nf.a]
    u = [list(row) for row in nf.u]
    for i, (dai, dbi) in enumerate(dec.factors):
        res = gkls_minimalize(_little_generator(nf, i), tol=tol)
        p = res.p
        phi = res.phi_vec
        a[i][i] = res.g_min.v
        k_a[i] = res.g_min.k
        d_f[i][i] = res.g_min.d_env
        delta = nf.u[i][i] @ kron(phi[:, None], eye(dbi))
        u[i][i] = nf.u[i][i] @ kron(dag(p), eye(dbi))
        g_mat = dag(nf.b[i]) @ delta
        b[i] = nf.b[i] + delta
        h_b[i] = nf.h_b[i] - 0.5j * (g_mat - dag(g_mat))
        for j, (daj, dbj) in enumerate(dec.factors):
            if j == i:
                continue
            s_ij = StinespringRep(dai, daj, nf.d_f[i][j], nf.a[i][j])
            s_min, w = minimal_stinespring(s_ij, tol=tol)
            a[i][j] = s_min.v
            d_f[i][j] = s_min.d_env
            u[i][j] = nf.u[i][j] @ kron(w, eye(dbj))
    out = AtomicNormalForm(
        dec=dec, v0=nf.v0, k0=nf.k0, k_a=k_a, h_b=h_b, b=b,
        d_f=d_f, a=a, u=u, d_env=e,
    )
    g_old = reconstruct_from_normal_form(nf)
    g_new = reconstruct_from_normal_form(out)
    scale = max(1.0, frob(g_old.v), frob(g_old.k))
    gap = max(frob(g_old.v - g_new.v), frob(g_old.k - g_new.k))
    if gap > 1e-8 * scale**2:
        raise FactorizationResidual("minimality reduction changed the generator",
                                    residual=gap)
    cert = normal_form_minimality(out, tol=tol)
    if not cert["minimal"]:
        raise FactorizationResidual("reduced form fails its minimality certificate")
    return out


def _require_same_decomposition(nf1: AtomicNormalForm, nf2: AtomicNormalForm):
    d1, d2 = nf1.dec, nf2.dec
    if (d1.d, d1.d0, d1.factors) != (d2.d, d2.d0, d2.factors):
        raise NotEquivalent("normal forms live over different block structures")
    if frob(d1.u_alg - d2.u_alg) > 1e-9 * d1.d:
        raise NotEquivalent("normal forms use different algebra frames")
    if nf1.d_env != nf2.d_env:
        raise NotEquivalent("normal forms have different ambient environments")


def normal_form_gauge(
    nf1: AtomicNormalForm,
    nf2: AtomicNormalForm,
    tol: float = 1e-9,
    mode: str = "full",
) -> GaugeData:
    """Gauge (W_ij, ψ_i, μ_i) carrying minimal form nf1 onto nf2.

    ``mode="algebra-only"`` requires the generators to agree on the algebra
    and fixes the per-factor data;  ``mode="full"`` requires equal (V, K) and
    additionally verifies the induced B_i, H_{B_i}, U_ij and V₀/K₀ relations.
    """
    if mode not in ("algebra-only", "full"):
        raise ValueError("mode must be 'algebra-only' or 'full'")
    _require_same_decomposition(nf1, nf2)
    for nf in (nf1, nf2):
        cert = normal_form_minimality(nf, tol=max(tol, TOL_RANK))
        if not cert["minimal"]:
            raise NotMinimal("both normal forms must satisfy the minimality "
                             "certificates; reduce first")
    g1 = reconstruct_from_normal_form(nf1)
    g2 = reconstruct_from_normal_form(nf2)
    scale = max(1.0, frob(g1.v), frob(g1.k), frob(g2.v), frob(g2.k))
    if mode == "full":
        gap = max(frob(g1.v - g2.v), frob(g1.k - g2.k))
        if gap > max(tol, 1e-10) * scale * 10:
            raise NotEquivalent("normal forms reconstruct different (V, K)",
                                residual=gap)
    else:
        worst = 0.0
        for xhat in algebra_pattern_basis(nf1.dec):
            worst = max(worst, frob(gkls_apply(g1, xhat) - gkls_apply(g2, xhat)))
        if worst > max(tol, 1e-10) * scale**2 * 10:
            raise NotEquivalent("generators differ on the algebra", residual=worst)

    w_ii: list[np.ndarray] = []
    psi_i: list[np.ndarray] = []
    mu_i: list[float] = []
    w_pairs: dict[tuple[int, int], np.ndarray] = {}
    check = 1e-8 * scale * 10
    for i, (dai, dbi) in enumerate(nf1.dec.factors):
        try:
            gauge = gkls_gauge(_little_generator(nf1, i), _little_generator(nf2, i),
                               tol=max(tol, TOL_RANK))
        except NotSameGenerator as exc:
            raise NotEquivalent(
                f"factor {i}: diagonal data generate different little generators",
                residual=exc.residual,
            ) from exc
        w_ii.append(gauge.w)
        psi_i.append(gauge.psi)
        mu_i.append(gauge.mu)
        for j, (daj, dbj) in enumerate(nf1.dec.factors):
            if j == i:
                continue
            s1 = StinespringRep(dai, daj, nf1.d_f[i][j], nf1.a[i][j])
            s2 = StinespringRep(dai, daj, nf2.d_f[i][j], nf2.a[i][j])
            try:
                w_pairs[(i, j)] = stinespring_gauge(s1, s2, tol=max(tol, TOL_RANK))
            except NotSameMap as exc:
                raise NotEquivalent(
                    f"pair ({i},{j}): blocks represent different reduced maps",
                    residual=exc.residual,
                ) from exc

    # verify the substitutions reproduce nf2
    worst = 0.0
    for i, (dai, dbi) in enumerate(nf1.dec.factors):
        w = w_ii[i]
        psi = psi_i[i]
        a2_pred = kron(eye(dai), w) @ nf1.a[i][i] + kron(eye(dai), psi[:, None])
        worst = max(worst, frob(a2_pred - nf2.a[i][i]))
        k2_pred = (
            nf1.k_a[i]
            + kron(eye(dai), np.conj(psi)[None, :] @ w) @ nf1.a[i][i]
            + (0.5 * float(np.vdot(psi, psi).real) + 1j * mu_i[i]) * eye(dai)
        )
        worst = max(worst, frob(k2_pred - nf2.k_a[i]))
        for j in range(len(nf1.dec.factors)):
            if j != i:
                worst = max(
                    worst,
                    frob(kron(eye(dai), w_pairs[(i, j)]) @ nf1.a[i][j] - nf2.a[i][j]),
                )
    if mode == "full":
        worst = max(worst, frob(nf1.v0 - nf2.v0), frob(nf1.k0 - nf2.k0))
        for i, (dai, dbi) in enumerate(nf1.dec.factors):
            shift = nf1.u[i][i] @ kron((dag(w_ii[i]) @ psi_i[i])[:, None], eye(dbi))
            worst = max(worst, frob(nf2.b[i] - (nf1.b[i] - shift)))
            g_mat = dag(nf1.b[i]) @ shift
            h_pred = nf1.h_b[i] + 0.5j * (g_mat - dag(g_mat)) - mu_i[i] * eye(dbi)
            worst = max(worst, frob(h_pred - nf2.h_b[i]))
            for j, (_, dbj) in enumerate(nf1.dec.factors):
                w_ij = w_ii[i] if j == i else w_pairs[(i, j)]
                u_pred = nf1.u[i][j] @ kron(dag(w_ij), eye(dbj))
                worst = max(worst, frob(u_pred - nf2.u[i][j]))
    if worst > check:
        raise NotEquivalent("gauge substitutions do not reproduce the second form",
                            residual=worst)
    return GaugeData(w_ii=w_ii, psi_i=psi_i, mu_i=mu_i, w_pairs=w_pairs)
