"""Exception types shared across the toolkit.

Every error that a caller is expected to catch and act on lives here, so
that module boundaries stay import-light.  Errors carry enough context to
name the violated condition without the caller re-deriving it.
"""

from __future__ import annotations


class NcsctlError(Exception):
    """Base class for all toolkit errors."""


class OutsideBox(NcsctlError):
    """A point lies outside the declared state (or init) region."""


class DegenerateAxis(NcsctlError):
    """A rescaling axis has zero width."""


class IntegrationDiverged(NcsctlError):
    """The ODE integrator could not meet its tolerance (step size collapsed
    or the state left every admissible bounding region by a wide margin)."""


class CapacityExceeded(NcsctlError):
    """An enumeration or construction grew past its configured budget."""

    def __init__(self, message: str, count: int | None = None, budget: int | None = None):
        super().__init__(message)
        self.count = count
        self.budget = budget


class PolicyExhausted(NcsctlError):
    """A scripted delay policy ran out of entries."""


class OutputClash(NcsctlError):
    """Two systems disagree on the output of a shared state id."""


class RelationFlavorMismatch(NcsctlError):
    """A relation of the wrong kind was passed to a composition operator."""


class ParameterViolation(NcsctlError):
    """Quantization / accuracy parameters violate the synthesis inequalities."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class EmptyController(NcsctlError):
    """The synthesis fixpoint deleted every initial product state."""

    def __init__(self, message: str, frontier=None):
        super().__init__(message)
        # First wave of deleted product states, for diagnosis.
        self.frontier = frontier if frontier is not None else []


class BlockingController(NcsctlError):
    """Controller refinement found a state with no enabled input."""


class OutsideDomain(NcsctlError):
    """A measurement fell outside the refined controller's domain."""

    def __init__(self, message: str, state=None, measurement=None):
        super().__init__(message)
        self.state = state
        self.measurement = measurement


class LeftStateSpace(NcsctlError):
    """A closed-loop trajectory exited the declared state region."""


class TraceInvalid(NcsctlError):
    """A loop trace violates one of its structural invariants."""
