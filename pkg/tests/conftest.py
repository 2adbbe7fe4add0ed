"""Shared fixtures and independent oracle helpers for the test suite.

The helpers here deliberately avoid the library's own linear-algebra
shortcuts wherever they serve as oracles: Kronecker products, partial
traces, channel applications and superoperators are recomputed from
first principles (index loops / einsum on reshaped tensors) so that the
package is checked against an independent computation, not against
itself.
"""

from __future__ import annotations

import numpy as np
import pytest

# ---------------------------------------------------------------------------
# randomness for test data (numpy Generator; the package's own CounterRng is
# itself under test, so test-local draws use an unrelated source)
# ---------------------------------------------------------------------------


def rng_for(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def crandn(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """Standard complex Gaussian matrix."""
    return (rng.standard_normal((rows, cols))
            + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2.0)


def haar_unitary(rng: np.random.Generator, n: int) -> np.ndarray:
    if n == 0:
        return np.zeros((0, 0), dtype=np.complex128)
    q, r = np.linalg.qr(crandn(rng, n, n))
    d = np.diagonal(r).copy()
    d[d == 0] = 1.0
    return q * (d / np.abs(d))


def haar_isometry(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    assert cols <= rows
    return haar_unitary(rng, rows)[:, :cols]


def random_density(rng: np.random.Generator, n: int) -> np.ndarray:
    g = crandn(rng, n, n)
    rho = g @ g.conj().T + 1e-3 * np.eye(n)
    return rho / np.trace(rho).real


def random_hermitian(rng: np.random.Generator, n: int) -> np.ndarray:
    g = crandn(rng, n, n)
    return (g + g.conj().T) / 2.0


# ---------------------------------------------------------------------------
# constants
# ---------------------------------------------------------------------------

PAULI = {
    "I": np.eye(2, dtype=np.complex128),
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "Z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}


# ---------------------------------------------------------------------------
# independent oracles
# ---------------------------------------------------------------------------


def kron_oracle(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product via an explicit quadruple loop."""
    ra, ca = a.shape
    rb, cb = b.shape
    out = np.zeros((ra * rb, ca * cb), dtype=np.complex128)
    for i in range(ra):
        for j in range(ca):
            for k in range(rb):
                for l in range(cb):
                    out[i * rb + k, j * cb + l] = a[i, j] * b[k, l]
    return out


def ptrace_oracle(m: np.ndarray, da: int, db: int, over: str) -> np.ndarray:
    """Partial trace via explicit index sums."""
    t = m.reshape(da, db, da, db)
    if over == "A":
        out = np.zeros((db, db), dtype=np.complex128)
        for a in range(da):
            out += t[a, :, a, :]
        return out
    out = np.zeros((da, da), dtype=np.complex128)
    for b in range(db):
        out += t[:, b, :, b]
    return out


def heisenberg_apply_oracle(ops: list[np.ndarray], x: np.ndarray) -> np.ndarray:
    """Sum op† X op over the Kraus operators."""
    out = np.zeros((ops[0].shape[1], ops[0].shape[1]), dtype=np.complex128)
    for op in ops:
        out += op.conj().T @ x @ op
    return out


def schrodinger_apply_oracle(ops: list[np.ndarray], rho: np.ndarray) -> np.ndarray:
    out = np.zeros_like(np.asarray(rho, dtype=np.complex128))
    for op in ops:
        out += op @ rho @ op.conj().T
    return out


def superop_oracle(f, d: int) -> np.ndarray:
    """Matrix of a linear map on L(C^d) in the row-major matrix-unit basis."""
    s = np.zeros((d * d, d * d), dtype=np.complex128)
    unit = np.zeros((d, d), dtype=np.complex128)
    for i in range(d):
        for j in range(d):
            unit[i, j] = 1.0
            s[:, i * d + j] = f(unit).reshape(-1)
            unit[i, j] = 0.0
    return s


def gkls_apply_oracle(v: np.ndarray, k: np.ndarray, e: int, x: np.ndarray) -> np.ndarray:
    """L(X) = V†(X⊗1_E)V − K†X − XK, with the environment slot last."""
    d = k.shape[0]
    xe = kron_oracle(x, np.eye(e, dtype=np.complex128)) if e else np.zeros((0, 0))
    first = v.conj().T @ xe @ v if e else np.zeros((d, d), dtype=np.complex128)
    return first - k.conj().T @ x - x @ k


def block_algebra_projector_oracle(d0: int, factors, u_alg: np.ndarray):
    """Orthogonal HS projection onto u·(0 ⊕ ⊕ M_{dA}⊗1_{dB})·u† as a callable."""
    d = u_alg.shape[0]

    def project(x: np.ndarray) -> np.ndarray:
        xt = u_alg.conj().T @ x @ u_alg
        out = np.zeros_like(xt)
        pos = d0
        for da, db in factors:
            blk = xt[pos: pos + da * db, pos: pos + da * db]
            t = blk.reshape(da, db, da, db)
            red = np.zeros((da, da), dtype=np.complex128)
            for b in range(db):
                red += t[:, b, :, b]
            red /= db
            out[pos: pos + da * db, pos: pos + da * db] = kron_oracle(
                red, np.eye(db, dtype=np.complex128)
            )
            pos += da * db
        return u_alg @ out @ u_alg.conj().T

    return project


def frob_oracle(a: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.abs(a) ** 2)))


# ---------------------------------------------------------------------------
# (nothing below needs pytest hooks; kept as a placeholder for collection)
# ---------------------------------------------------------------------------


@pytest.fixture
def rng():
    return rng_for(20260814)
