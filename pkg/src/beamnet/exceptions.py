"""Exception hierarchy for beamnet.

All errors raised by the library derive from :class:`BeamNetError`, so callers
(the CLI in particular) can map whole families of failures to exit codes.
Report-style operations (validation, compatibility checks, verification)
never raise for violations; they return report models instead.

Time Complexity: N/A (exception definitions)
Space Complexity: O(1) per exception instance
"""


class BeamNetError(Exception):
    """Base exception for all beamnet errors."""


class NotSkewError(BeamNetError):
    """Raised when a matrix handed to ``vec`` is not skew-symmetric.

    This typically occurs when:
    - A rotation field is not a valid rotation field (curvature stencil)
    - Finite differences of sampled rotations are too coarse
    """


class NotSPDError(BeamNetError):
    """Raised when a matrix that must be symmetric positive definite is not.

    This occurs for:
    - Mass or flexibility matrices with a non-positive eigenvalue
    - Node matrices sigma that lose definiteness
    """


class NotRotationError(BeamNetError):
    """Raised when a rotation field leaves SO(3).

    This occurs when:
    - Undeformed rotation samples are not orthonormal
    - Reconstructed rotations drift beyond tolerance
    """


class EigenSplitError(BeamNetError):
    """Raised when eigenvector continuity across x-samples is lost.

    Signals an eigenvalue crossing of Theta(x), for which no smooth
    eigendecomposition exists.
    """


class SingularNodeMatrixError(BeamNetError):
    """Raised when a node-coupling linear solve fails its residual check."""


class BlowUpError(BeamNetError):
    """Raised when a solution exceeds the configured state bound.

    The semilinear source can blow up in finite time for large data.
    """


class TraceDimensionMismatchError(BeamNetError):
    """Raised when sidewise data do not match the solver grid."""


class ProfileIncompatibleError(BeamNetError):
    """Raised when nodal profiles violate the charged-node transmission conditions."""


class InvalidControlProblemError(BeamNetError):
    """Raised when a control problem violates its preconditions.

    Examples:
    - Topology is not the A-shaped network
    - Times do not satisfy T > T* > T_bar
    - Profiles missing for a beam at a charged node
    """


class PlanStalledError(BeamNetError):
    """Raised when control-path scheduling makes no progress in an iteration."""


class TraceUnavailableError(BeamNetError):
    """Raised when a plan phase needs a trace no earlier phase produced."""


class ConfigParseError(BeamNetError):
    """Raised when a configuration or data file cannot be read.

    Common causes:
    - YAML syntax errors (the message carries line and column)
    - Referenced CSV files that do not exist
    - Malformed CSV content
    """


class ConfigValidationError(BeamNetError):
    """Raised when a parsed configuration fails schema or network validation.

    The message embeds the formatted validation report.
    """


class ReportRenderError(BeamNetError):
    """Raised when a text report template fails to render."""


class PathValidationError(BeamNetError):
    """Raised when an output path fails validation.

    Security-related errors:
    - Path traversal attempts (../)
    - Invalid characters in path
    """


class BeamNetWarning(UserWarning):
    """Base warning category for beamnet."""


class CompatibilityWarning(BeamNetWarning):
    """Issued when data violate compatibility conditions beyond tolerance."""
