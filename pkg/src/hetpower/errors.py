"""Exception hierarchy shared by every stage of the pipeline."""


class PowerModelError(Exception):
    """Base class for all hetpower errors."""


# trace stage
class EmptyTrace(PowerModelError):
    pass


class MixedClusters(PowerModelError):
    pass


class MissingColumn(PowerModelError):
    def __init__(self, column, family=None):
        self.column = column
        self.family = family
        where = f" (required by {family})" if family else ""
        super().__init__(f"missing column {column!r}{where}")


# regression stage
class DegenerateDesign(PowerModelError):
    pass


class NonFiniteInput(PowerModelError):
    pass


class MissingRegressor(PowerModelError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"row does not supply regressor {name!r}")


class LengthMismatch(PowerModelError):
    pass


class NoCandidates(PowerModelError):
    pass


class AllRowsDropped(PowerModelError):
    pass


# evaluation stage
class NonPositiveMeasured(PowerModelError):
    pass


class EmptyEvaluation(PowerModelError):
    pass


class NoCommonFrequencies(PowerModelError):
    pass


class NoCommonBenchmarks(PowerModelError):
    pass


# synth / io
class InvalidSpec(PowerModelError):
    pass


class SchemaError(PowerModelError):
    """Input file does not follow the trace or model file layout."""
