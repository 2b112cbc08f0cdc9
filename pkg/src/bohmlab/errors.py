"""Exception types shared across the package."""


class BohmlabError(Exception):
    """Base class for all bohmlab errors."""


class ShapeMismatchError(BohmlabError):
    """Fields or operators defined on incompatible grids or component counts."""


class UnsupportedOperationError(BohmlabError):
    """Operation not defined for the given input, e.g. polar form of a spinor."""


class DegenerateStateError(BohmlabError):
    """Zero-norm wave function where a normalized state is required."""


class ConfigurationError(BohmlabError):
    """Inconsistent solver or scenario configuration, e.g. spectral scheme on a box grid."""


class NodeError(BohmlabError):
    """Evaluation requested where the probability density is below the node threshold."""


class UnitarityError(BohmlabError):
    """Propagation lost more norm than the allowed drift."""


class SelfAdjointnessError(BohmlabError):
    """Expectation value acquired an imaginary residual beyond the allowed bound."""


class TruncationError(BohmlabError):
    """Analytic state carries non-negligible mass at the grid boundary."""


class RegimeError(BohmlabError):
    """Waveguide quantity requested in the wrong energy regime."""


class FitError(BohmlabError):
    """Decay-rate fit window is degenerate: too few points or contains a node."""


class EndpointError(BohmlabError):
    """Centered time difference requested at a trajectory endpoint."""


class ScenarioValidationError(BohmlabError):
    """Scenario config failed validation; `key` names the offending entry."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"config key '{key}': {message}")
