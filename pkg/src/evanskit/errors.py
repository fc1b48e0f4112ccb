"""Exception hierarchy shared by all evanskit modules."""


class EvansKitError(Exception):
    """Base class for all errors raised by this package."""


# --- model evaluation -------------------------------------------------------

class OutOfDomain(EvansKitError):
    """State vector lies outside the model's declared domain box."""


class NonFinite(EvansKitError):
    """A model evaluation produced NaN or Inf."""


class UnknownModel(EvansKitError):
    """Requested builtin model name does not exist."""


# --- hypothesis checks ------------------------------------------------------

class NotStrictlyHyperbolic(EvansKitError):
    """Eigenvalues of the normal flux Jacobian are not real and distinct."""


class NoCoercivity(EvansKitError):
    """Compensating-matrix search could not reach a positive constant."""


# --- profile solver ---------------------------------------------------------

class NoConvergence(EvansKitError):
    """Newton iteration for the profile stalled."""


class AmplitudeTooLarge(EvansKitError):
    """Shock amplitude outside the small-amplitude regime."""


class DegenerateSingularPoint(EvansKitError):
    """Characteristic speed has (numerically) vanishing slope at its zero."""


class MultipleSingularPoints(EvansKitError):
    """The p-th characteristic speed changes sign more than once."""


class FitFailed(EvansKitError):
    """A least-squares rate fit had degenerate or exhausted data."""


# --- mode construction ------------------------------------------------------

class IllConditionedDiagonalizer(EvansKitError):
    """Flux diagonalizer condition number exceeds the allowed bound."""


class CenterEigenvalue(EvansKitError):
    """Asymptotic eigenvalue with vanishing real part where none may exist."""


class StiffnessFailure(EvansKitError):
    """Adaptive integrator step size collapsed."""


class BasisDegeneracy(EvansKitError):
    """Orthonormalization of an integrated basis lost rank."""


class NoFastDirection(EvansKitError):
    """No positively-vanishing fast direction at the singular point."""


# --- Evans evaluation -------------------------------------------------------

class ColumnCountMismatch(EvansKitError):
    """Assembled determinant columns disagree with the dimension counts."""


class PhaseJumpTooLarge(EvansKitError):
    """Contour refinement floor hit with phase jumps still too large."""


class EigenbasisFailure(EvansKitError):
    """Eigenvector basis needed for a determinant could not be formed."""


# --- resolvent --------------------------------------------------------------

class NearSingularSolve(EvansKitError):
    """Matching system at y1 is near-singular (reported, often expected)."""


class SolverSingular(EvansKitError):
    """Direct resolvent matrix is singular (near a true eigenvalue)."""


# --- time-domain ------------------------------------------------------------

class EllipticSolveFailed(EvansKitError):
    """Discrete elliptic solve did not reach its residual target."""


class Blowup(EvansKitError):
    """A recorded norm exceeded the blowup guard."""


class CFLViolation(EvansKitError):
    """Requested time step violates the CFL restriction."""


class EquivalenceFailure(EvansKitError):
    """Energy functional failed norm-equivalence along a trajectory."""


# --- CLI --------------------------------------------------------------------

class UsageError(EvansKitError):
    """Malformed command line or config."""


class MissingArtifact(EvansKitError):
    """Referenced artifact file is absent or unreadable."""
