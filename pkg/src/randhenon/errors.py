"""Exception types shared across the package."""


class RandHenonError(Exception):
    """Base class for every error raised by this package."""


class NonConstantJacobian(RandHenonError):
    """The pair of polynomials has a non-constant or vanishing Jacobian."""


class PrecisionLoss(RandHenonError):
    """Floating-point cancellation destroyed the result of a scaled evaluation."""


class BudgetExceeded(RandHenonError):
    """An exact computation outgrew its configured size budget."""


class NotAnAutomorphism(RandHenonError):
    """Jung degree reduction failed, so the input is not a plane automorphism."""


class WordNotReduced(RandHenonError):
    """An operation that requires a reduced word received an unreduced one."""


class NotStabilized(RandHenonError):
    """A right-end block of the requested depth did not settle by the horizon."""

    def __init__(self, depth, horizon):
        super().__init__(f"depth {depth} not stable by horizon {horizon}")
        self.depth = depth
        self.horizon = horizon


class ConeObstruction(RandHenonError):
    """An affine syllable sends I = [1:0:0] into the closure of the V- cone."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class CertificationFailure(RandHenonError):
    """A filtration certificate was violated at runtime; carries the witness point."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class NoIndeterminacy(RandHenonError):
    """Affine maps extend to P^2 without indeterminacy."""


class DepthExceeded(RandHenonError):
    """The base-point chain is longer than the requested depth limit."""

    def __init__(self, depth):
        super().__init__(f"base-point chain longer than {depth}")
        self.depth = depth


class ChartDegeneracy(RandHenonError):
    """The blow-up locus could not be described as a single chain point."""


class OrbitEscaped(RandHenonError):
    """A bounded-orbit computation met an orbit that left the ball."""

    def __init__(self, step):
        super().__init__(f"orbit left the bounded region at step {step}")
        self.step = step


class ConfigError(RandHenonError):
    """The experiment configuration failed validation."""
