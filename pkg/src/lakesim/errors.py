"""Exception hierarchy shared by all lakesim modules."""


class LakeSimError(Exception):
    """Base class for all lakesim errors."""


# --- geometry -------------------------------------------------------------

class UnsupportedDomain(LakeSimError):
    """Requested domain family is not one of the supported ones."""


class DegenerateBathymetry(LakeSimError):
    """Depth profile violates positivity (c0 <= 0) or has a flat shoreline."""


class ResolutionTooCoarse(LakeSimError):
    """Grid has too few interior nodes to be usable."""


class InvalidExponent(LakeSimError):
    """Norm exponent p < 1."""


# --- elliptic -------------------------------------------------------------

class SolverDiverged(LakeSimError):
    """Iterative linear solve stagnated above the requested residual."""


class SingularCoefficient(LakeSimError):
    """Depth evaluated nonpositive at a stencil face (mask/grid bug)."""


class CoincidentPoints(LakeSimError):
    """Green kernel evaluated on (x, y) with |x - y| below resolution."""


class SourceTooCloseToBoundary(LakeSimError):
    """Remainder-kernel source point violates its distance precondition."""


class SupportTooClose(LakeSimError):
    """Source field support too close to the shoreline for kernel assembly."""


# --- transport ------------------------------------------------------------

class LeftDomain(LakeSimError):
    """A characteristic left the interior mask (under-resolution or bug)."""


class NoContraction(LakeSimError):
    """Fixed-point iteration on a time window failed to contract."""


class MaxIterExceeded(LakeSimError):
    """Iteration cap reached before the convergence tolerance."""


class WindowUnderflow(LakeSimError):
    """Adaptive window halving fell below the minimal time step."""


# --- viscous --------------------------------------------------------------

class StabilityViolation(LakeSimError):
    """Kinetic energy grew beyond the audited budget in one step."""


class AuditFailed(LakeSimError):
    """Per-step energy inequality violated."""


# --- sweep ----------------------------------------------------------------

class GridMismatch(LakeSimError):
    """Fields to compare live on different grids."""


class FitUnderdetermined(LakeSimError):
    """Rate fit requested with fewer than three usable points."""


class NonpositiveError(LakeSimError):
    """A sup error of zero cannot enter a log-log fit."""


# --- configuration --------------------------------------------------------

class ParseError(LakeSimError):
    """Config document is not well-formed or has unknown keys."""


class ValidationError(LakeSimError):
    """Config parsed but violates an invariant."""
