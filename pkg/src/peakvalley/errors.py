"""Exception types shared across the package."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class AssumptionViolation:
    """One failed standing assumption: what was checked, what we saw, what was needed."""

    name: str
    observed: float
    required: str

    def __str__(self) -> str:
        return f"{self.name}: observed {self.observed!r}, required {self.required}"


class ValidationError(ValueError):
    """Raised when model parameters violate one or more standing assumptions."""

    def __init__(self, violations: list[AssumptionViolation]):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


class GammaOne(ValidationError):
    """Relative risk aversion of exactly one is outside the power-utility family."""

    def __init__(self, gamma: float):
        super().__init__(
            [AssumptionViolation("gamma != 1", gamma, "gamma > 0 and gamma != 1")]
        )


class DomainError(ValueError):
    """Inputs outside the state domain (h1 < h2, nonpositive state, ...)."""


class BracketFailure(RuntimeError):
    """Sign conditions for a bracketed root search failed; upstream invariant breach."""


class ConvergenceError(RuntimeError):
    """A root search did not reach the requested residual tolerance."""


class RegionError(ValueError):
    """Operation called in a region where it is not defined."""


class ConfigError(ValueError):
    """Invalid simulation or CLI configuration."""
