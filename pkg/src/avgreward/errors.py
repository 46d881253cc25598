"""Exception hierarchy shared by every module."""


class AvgRewardError(Exception):
    """Base class for all package errors."""


class ContractError(AvgRewardError, ValueError):
    """Inputs violate an operation's precondition (shapes, ranges, indices)."""


class InvalidMdpError(AvgRewardError, ValueError):
    """An MDP kernel failed validation.

    ``violations`` holds the full report produced by :func:`avgreward.mdp.validate`.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        head = "; ".join(self.violations[:5])
        more = f" (+{len(self.violations) - 5} more)" if len(self.violations) > 5 else ""
        super().__init__(f"invalid MDP: {head}{more}")


class NotUnichainError(AvgRewardError):
    """The policy-induced chain has more than one recurrent class."""


class CapExceededError(AvgRewardError):
    """An enumeration would exceed its configured size cap."""

    def __init__(self, what, count, cap):
        self.count = count
        self.cap = cap
        super().__init__(f"{what}: {count} exceeds cap {cap}")


class ConvergenceError(AvgRewardError):
    """An iterative solver hit its iteration limit."""

    def __init__(self, message, residual):
        self.residual = residual
        super().__init__(f"{message} (last residual {residual:.3e})")


class EnvSpecError(AvgRewardError, ValueError):
    """An environment spec string could not be parsed."""
