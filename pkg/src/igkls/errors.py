"""Exception taxonomy shared by all igkls modules.

Every mathematically meaningful failure carries the offending residual (and,
where it exists, the worst offending block/basis index) so that CLI reports can
surface it without re-running the computation.
"""

from __future__ import annotations


class IgklsError(Exception):
    """Base class for all igkls errors."""

    def __init__(self, message: str, residual: float | None = None):
        if residual is not None:
            message = f"{message} (residual={residual:.3e})"
        super().__init__(message)
        self.residual = residual


# --- star-algebra -----------------------------------------------------------

class NotClosed(IgklsError):
    """An alleged *-algebra basis is not closed under adjoint/product."""


class DecompositionFailed(IgklsError):
    """atomic_decompose ran out of retries (tolerance/genericity breakdown)."""


class NotIntertwiner(IgklsError):
    """Input does not satisfy the half-commutation intertwiner relation."""


# --- cp-maps ----------------------------------------------------------------

class NotSameMap(IgklsError):
    """Two representations do not define the same CP map."""


class NotMinimal(IgklsError):
    """A representation required to be minimal is not."""


class NotInvariant(IgklsError):
    """The map/generator does not leave the algebra invariant."""


class FactorizationResidual(IgklsError):
    """Block factorization failed to reproduce the input within tolerance."""


# --- gkls-forms -------------------------------------------------------------

class NotSameGenerator(IgklsError):
    """Two GKLS representations do not define the same generator."""


class NotEquivalent(IgklsError):
    """Normal forms are not equivalent in the requested mode."""


# --- applications -----------------------------------------------------------

class NotDecoherenceFree(IgklsError):
    """Dissipation does not vanish on the candidate algebra."""


class NotMaximalAbelian(IgklsError):
    """The decomposition is not maximal abelian (d0 = 0, all factors (1,1))."""


class NotDiagonal(IgklsError):
    """Operator is not diagonal in the decomposition frame."""


class NotTracePreserving(IgklsError):
    """Kraus set is not trace preserving in the declared picture."""


class AlgebraClosureFailed(IgklsError):
    """A fixed-point set failed to close into a *-algebra."""


class NoFixedState(IgklsError):
    """No PSD unit-trace fixed point could be certified numerically."""


# --- cli-io -----------------------------------------------------------------

class ParseError(IgklsError):
    """Malformed JSON input."""


class SchemaError(IgklsError):
    """JSON does not match the expected record layout."""


class InvariantError(IgklsError):
    """A loaded record violates one of its declared invariants."""
