"""Shared exception types for the toolkit."""


class ToolkitError(Exception):
    pass


class PrecisionLoss(ToolkitError):
    """Requested data is not determined by the digits an element carries."""


class NotAUnit(ToolkitError):
    pass


class NotNormOne(ToolkitError):
    pass


class NotFundamental(ToolkitError):
    """Integer is not an odd fundamental discriminant parameter D."""


class NotInert(ToolkitError):
    pass


class InvalidDiscriminant(ToolkitError):
    pass


class NoInvariantVector(ToolkitError):
    """The induced representation has no vector fixed by the requested subgroup."""


class PoleInGamma(ToolkitError):
    """A denominator of the zonal-function gamma factor vanishes."""


class BudgetExceeded(ToolkitError):
    """An enumeration would exceed the configured cell budget."""

    def __init__(self, needed, budget):
        super().__init__(f"enumeration needs ~{needed} cells, budget is {budget}")
        self.needed = needed
        self.budget = budget
