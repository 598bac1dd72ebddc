"""
Planner error types. The CLI maps InfeasibleError to exit code 2 and every
other PlannerError to exit code 1.
"""


class PlannerError(Exception):
    """Base class for planner failures."""


class ScenarioError(PlannerError):
    """Scenario parsing or validation failure; the message names field and constraint."""

    def __init__(self, field, constraint, row=None, path=None):
        self.field = field
        self.constraint = constraint
        self.row = row
        self.path = path
        where = f"row {row}: " if row is not None else ""
        source = f"{path}: " if path else ""
        super().__init__(f"{source}{where}{field}: {constraint}")


class UnsatisfiableUserError(PlannerError):
    """A user has no valid service cell at the configured altitude."""

    def __init__(self, user_id):
        self.user_id = user_id
        super().__init__(f"user {user_id!r} has no valid service point (all-zero service area)")


class InfeasibleError(PlannerError):
    """No tour respecting the flight-time limit was found."""


class EnumerationCapError(PlannerError):
    """Brute-force enumeration was asked to exceed its cap."""
