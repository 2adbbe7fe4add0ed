"""Dense complex linear-algebra primitives shared by all other modules.

Conventions used throughout the package:

* every operator is a 2-D ``numpy.ndarray`` of ``complex128``;
* tensor products put the system factor first and the environment last, and
  ``kron`` follows the row-major index convention ``(i·r_b + k, j·c_b + l)``;
* ``vec``/``unvec`` are row-major (C order), so ``vec(A X B) = (A ⊗ B^T) vec(X)``;
* all rank decisions go through one SVD-based helper with a relative cutoff.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

#: Default relative tolerance for every rank decision in the package.
TOL_RANK = 1e-9

#: Default tolerance for residual verifications.
TOL_VERIFY = 1e-9


def asmatrix(a) -> np.ndarray:
    """Coerce to a 2-D complex128 array without copying when possible."""
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {m.shape}")
    return m


def dag(a: np.ndarray) -> np.ndarray:
    """Conjugate transpose."""
    return np.conj(a.T)


def frob(a: np.ndarray) -> float:
    """Frobenius norm as a plain float."""
    return float(np.linalg.norm(a))


def eye(n: int) -> np.ndarray:
    return np.eye(n, dtype=np.complex128)


def vec(a: np.ndarray) -> np.ndarray:
    """Row-major vectorization (C order)."""
    return np.asarray(a, dtype=np.complex128).reshape(-1)


def unvec(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`vec`."""
    return np.asarray(v, dtype=np.complex128).reshape(rows, cols)


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product with explicit validation.

    Entry ``(i·r_b + k, j·c_b + l)`` equals ``a[i, j] · b[k, l]``; dimensions
    multiply.  Zero-dimensional factors are legal and give zero-dimensional
    results, which keeps block-reconstruction code uniform.
    """
    return np.kron(asmatrix(a), asmatrix(b))


def partial_trace(m: np.ndarray, dim_a: int, dim_b: int, over: str) -> np.ndarray:
    """Partial trace of an operator on a bipartite space C^dim_a ⊗ C^dim_b.

    :param m: square matrix of size ``dim_a · dim_b``.
    :param over: ``"A"`` traces out the first factor (result on B),
        ``"B"`` traces out the second (result on A).
    :return: the reduced operator; ``Tr(result) = Tr(m)``.
    """
    m = asmatrix(m)
    d = dim_a * dim_b
    if m.shape != (d, d):
        raise ValueError(f"expected shape {(d, d)}, got {m.shape}")
    t = m.reshape(dim_a, dim_b, dim_a, dim_b)
    if over == "A":
        return np.einsum("abac->bc", t)
    if over == "B":
        return np.einsum("abcb->ac", t)
    raise ValueError("over must be 'A' or 'B'")


@dataclass
class SubspaceBasis:
    """An orthonormal basis of a subspace of C^ambient_dim.

    ``vectors`` has one basis vector per row; it may have zero rows (the empty
    span), which is why the ambient dimension is carried explicitly.
    """

    ambient_dim: int
    vectors: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), dtype=np.complex128))

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.complex128)
        if self.vectors.size == 0:
            self.vectors = self.vectors.reshape(0, self.ambient_dim)
        if self.vectors.shape[1] != self.ambient_dim:
            raise ValueError("vector length does not match ambient_dim")

    @property
    def count(self) -> int:
        return self.vectors.shape[0]

    def projector(self) -> np.ndarray:
        """The orthogonal projector onto the span, as an ambient_dim² matrix."""
        r = self.vectors
        return r.T @ np.conj(r)


def svd_rank(m: np.ndarray, tol: float = TOL_RANK) -> int:
    """Number of singular values above ``tol`` relative to the largest one."""
    m = asmatrix(m)
    if m.size == 0:
        return 0
    s = np.linalg.svd(m, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))


def orthonormalize_span(vectors, tol: float = TOL_RANK, ambient_dim: int | None = None) -> SubspaceBasis:
    """Orthonormal basis of the span of the given vectors.

    The rank decision uses singular values above ``tol·σ_max``.  An empty input
    is legal but then ``ambient_dim`` must be supplied.
    """
    vecs = [np.asarray(v, dtype=np.complex128).reshape(-1) for v in vectors]
    if not vecs:
        if ambient_dim is None:
            raise ValueError("empty input requires an explicit ambient_dim")
        return SubspaceBasis(ambient_dim)
    dims = {v.shape[0] for v in vecs}
    if len(dims) != 1:
        raise ValueError(f"vectors of inconsistent ambient dimension: {sorted(dims)}")
    dim = dims.pop()
    if ambient_dim is not None and ambient_dim != dim:
        raise ValueError("ambient_dim does not match the vectors")
    a = np.stack(vecs, axis=1)  # columns are the vectors
    u, s, _ = np.linalg.svd(a, full_matrices=False)
    rank = 0 if s.size == 0 or s[0] == 0.0 else int(np.count_nonzero(s > tol * s[0]))
    return SubspaceBasis(dim, u[:, :rank].T)


def subspace_residual(basis: SubspaceBasis, v) -> float:
    """``‖v − Proj_basis(v)‖₂`` — zero iff v lies in the span numerically."""
    v = np.asarray(v, dtype=np.complex128).reshape(-1)
    if v.shape[0] != basis.ambient_dim:
        raise ValueError("ambient dimension mismatch")
    if basis.count == 0:
        return float(np.linalg.norm(v))
    r = basis.vectors
    coeff = np.conj(r) @ v
    return float(np.linalg.norm(v - r.T @ coeff))


def embed_support(x: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Embed an operator on a subspace back into the full space: ``p† x p``.

    ``p`` is a coisometry block projection (rows of a unitary), i.e.
    ``p·p† = 1`` on the small space.
    """
    x = asmatrix(x)
    p = asmatrix(p)
    if x.shape[0] != x.shape[1] or x.shape[0] != p.shape[0]:
        raise ValueError(f"incompatible shapes {x.shape} and {p.shape}")
    return dag(p) @ x @ p


def nearest_isometry(m: np.ndarray) -> np.ndarray:
    """Polar projection onto the nearest isometry (columns ≤ rows)."""
    m = asmatrix(m)
    if m.shape[1] == 0:
        return m.copy()
    u, _, vh = np.linalg.svd(m, full_matrices=False)
    return u @ vh


def herm(a: np.ndarray) -> np.ndarray:
    """Self-adjoint part ``(a + a†)/2``."""
    return 0.5 * (a + dag(a))


def im_part(a: np.ndarray) -> np.ndarray:
    """Anti-self-adjoint content as a self-adjoint matrix: ``(a − a†)/2i``."""
    return (a - dag(a)) / 2j
