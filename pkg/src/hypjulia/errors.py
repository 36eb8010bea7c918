"""Exception types shared across the package."""


class HypJuliaError(Exception):
    """Base class."""


class PrecisionExhausted(HypJuliaError):
    """Enclosures stayed too wide for a decision even at the precision cap."""

    def __init__(self, w_max, detail=""):
        self.w_max = w_max
        self.detail = detail
        super().__init__(f"precision exhausted at w={w_max}" + (f": {detail}" if detail else ""))


class BudgetExhausted(HypJuliaError):
    """A bounded search ran out of budget without a decision."""


class NoMarginFound(HypJuliaError):
    """No inflation margin certified expansion at the current grid level."""


class CertificationError(HypJuliaError):
    """A certificate could not be built or failed a re-check."""


class DomainError(HypJuliaError, ValueError):
    """Argument outside the domain of a bound."""
