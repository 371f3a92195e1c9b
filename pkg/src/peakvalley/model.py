"""Model parameters, standing assumptions, and scalar derived constants.

The market has a riskless asset growing at rate ``r`` and one risky asset
following a geometric Brownian motion with drift ``mu`` and volatility
``sigma``.  The agent discounts at rate ``delta``, has power utility with
relative risk aversion ``gamma``, and pays utility-denominated adjustment
costs weighted by ``alpha`` (raising the running consumption maximum) and
``beta`` (lowering the running consumption minimum).

Everything downstream is driven by a handful of scalars derived here:

* the Sharpe ratio ``kappa = (mu - r) / sigma``,
* ``gamma_star = -(1 - gamma) / gamma``,
* the roots ``m1 > 1 > 0 > m2`` of
  ``(kappa^2/2) m^2 + (delta - r - kappa^2/2) m - delta = 0``,
* the free-boundary ratios ``z_alpha in (0, 1 - alpha*delta]`` and
  ``z_beta in [1 + beta*delta, inf)`` solving one algebraic equation each,
* the Merton consumption and portfolio ratios of the frictionless problem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.optimize import brentq

from .errors import AssumptionViolation, BracketFailure, GammaOne, ValidationError

__all__ = [
    "ModelParams",
    "DerivedConstants",
    "validate",
    "quadratic_roots",
    "solve_z_alpha",
    "solve_z_beta",
    "merton_ratios",
    "derive",
    "phi_alpha",
    "phi_beta",
]

#: absolute tolerance on the free-boundary ratios
_Z_XTOL = 1e-14
#: relative residual tolerance, scaled by the largest term magnitude
_Z_RTOL = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Market and preference primitives.

    Attributes
    ----------
    r : riskless interest rate per unit time (> 0)
    mu : risky drift per unit time (> r)
    sigma : risky volatility per unit time (> 0)
    delta : subjective discount rate (> 0)
    gamma : relative risk aversion (> 0, != 1)
    alpha : upward adjustment cost weight (0 <= alpha <= 1/delta)
    beta : downward adjustment cost weight (>= 0)
    """

    r: float
    mu: float
    sigma: float
    delta: float
    gamma: float
    alpha: float
    beta: float

    @property
    def kappa(self) -> float:
        """Sharpe ratio (mu - r) / sigma."""
        return (self.mu - self.r) / self.sigma

    @property
    def k0(self) -> float:
        """Well-posedness constant r + (delta-r)/gamma + (gamma-1) kappa^2 / (2 gamma^2)."""
        g = self.gamma
        return self.r + (self.delta - self.r) / g + (g - 1.0) / (2.0 * g * g) * self.kappa**2


@dataclass(frozen=True)
class DerivedConstants:
    """Scalar constants derived from validated :class:`ModelParams`."""

    kappa: float
    gamma_star: float
    m1: float
    m2: float
    K0: float
    z_alpha: float
    z_beta: float
    merton_c_ratio: float
    merton_pi_ratio: float


def validate(params: ModelParams) -> ModelParams:
    """Check every standing assumption, returning ``params`` unchanged if all hold.

    Raises
    ------
    GammaOne
        If ``gamma`` equals one within machine tolerance (logarithmic utility
        is outside the power family handled here).
    ValidationError
        Listing every violated assumption by name.
    """
    if abs(params.gamma - 1.0) < 1e-12:
        raise GammaOne(params.gamma)

    bad: list[AssumptionViolation] = []

    def check(ok: bool, name: str, observed: float, required: str) -> None:
        if not ok:
            bad.append(AssumptionViolation(name, observed, required))

    p = params
    check(p.r > 0.0, "r > 0", p.r, "> 0")
    check(p.sigma > 0.0, "sigma > 0", p.sigma, "> 0")
    check(p.delta > 0.0, "delta > 0", p.delta, "> 0")
    check(p.gamma > 0.0, "gamma > 0", p.gamma, "> 0")
    check(p.mu > p.r, "mu > r", p.mu, f"> r = {p.r!r}")
    check(p.alpha >= 0.0, "alpha >= 0", p.alpha, ">= 0")
    if p.delta > 0.0:
        check(
            p.alpha <= 1.0 / p.delta,
            "alpha <= 1/delta",
            p.alpha,
            f"<= 1/delta = {1.0 / p.delta!r}",
        )
    check(p.beta >= 0.0, "beta >= 0", p.beta, ">= 0")
    if p.sigma > 0.0 and p.gamma > 0.0:
        check(p.k0 > 0.0, "K0 > 0", p.k0, "> 0")

    if bad:
        raise ValidationError(bad)
    return params


def quadratic_roots(params: ModelParams) -> tuple[float, float]:
    """Roots ``(m1, m2)`` of ``(kappa^2/2) m^2 + (delta - r - kappa^2/2) m - delta = 0``.

    The larger-magnitude root is computed directly and the other through the
    product identity ``m1 * m2 = -2 delta / kappa^2``, which avoids
    cancellation when the linear coefficient dominates.  ``m1 > 1`` and
    ``m2 < min(gamma_star, 0)`` for validated parameters.
    """
    k2 = params.kappa**2
    a = 0.5 * k2
    b = params.delta - params.r - 0.5 * k2
    c = -params.delta
    disc = b * b - 4.0 * a * c  # = b^2 + 2 kappa^2 delta > 0
    q = -0.5 * (b + math.copysign(math.sqrt(disc), b))
    if q == 0.0:  # b == 0: symmetric roots
        root = math.sqrt(-c / a)
        return root, -root
    r1, r2 = q / a, c / q
    return (r1, r2) if r1 > r2 else (r2, r1)


def phi_alpha(z: float, params: ModelParams, m1: float, m2: float) -> float:
    """Defining function for ``z_alpha``; its root in (0, 1 - alpha*delta] is z_alpha."""
    k2 = params.kappa**2
    return (
        2.0 / (k2 * m1 * (m1 - 1.0)) * z**m1
        + z / params.r * (m2 - 1.0)
        + m2 * (params.alpha - 1.0 / params.delta)
    )


def phi_beta(z: float, params: ModelParams, m1: float, m2: float) -> float:
    """Defining function for ``z_beta``; its root in [1 + beta*delta, inf) is z_beta."""
    k2 = params.kappa**2
    return (
        2.0 / (k2 * m2 * (m2 - 1.0)) * z**m2
        + z / params.r * (m1 - 1.0)
        - m1 * (params.beta + 1.0 / params.delta)
    )


def _phi_alpha_scale(z: float, params: ModelParams, m1: float, m2: float) -> float:
    k2 = params.kappa**2
    return max(
        abs(2.0 / (k2 * m1 * (m1 - 1.0)) * z**m1),
        abs(z / params.r * (m2 - 1.0)),
        abs(m2 * (params.alpha - 1.0 / params.delta)),
        1.0,
    )


def _phi_beta_scale(z: float, params: ModelParams, m1: float, m2: float) -> float:
    k2 = params.kappa**2
    return max(
        abs(2.0 / (k2 * m2 * (m2 - 1.0)) * z**m2),
        abs(z / params.r * (m1 - 1.0)),
        abs(m1 * (params.beta + 1.0 / params.delta)),
        1.0,
    )


def solve_z_alpha(params: ModelParams, m1: float, m2: float) -> float:
    """Free-boundary ratio for raising the consumption peak.

    ``phi_alpha`` is positive at 0+ and nonpositive at ``1 - alpha*delta``, so
    Brent's method on that bracket cannot fail.  ``alpha == 0`` returns 1
    exactly (frictionless peak updates) and ``alpha == 1/delta`` returns 0 as
    a limit flag (the peak is never raised).
    """
    ad = params.alpha * params.delta
    if params.alpha == 0.0:
        return 1.0
    if ad >= 1.0:
        return 0.0
    hi = 1.0 - ad
    f = lambda z: phi_alpha(z, params, m1, m2)
    f_hi = f(hi)
    if f_hi > 0.0:
        # mathematically f(hi) <= 0; roundoff can only matter when the root
        # sits at the bracket edge
        return hi
    z = brentq(f, 0.0, hi, xtol=_Z_XTOL, rtol=8.9e-16)
    resid = abs(f(z)) / _phi_alpha_scale(z, params, m1, m2)
    if resid > _Z_RTOL:
        raise BracketFailure(f"phi_alpha residual {resid:g} exceeds {_Z_RTOL:g}")
    return z


def solve_z_beta(params: ModelParams, m1: float, m2: float) -> float:
    """Free-boundary ratio for lowering the consumption valley.

    ``phi_beta`` is nonpositive at ``1 + beta*delta`` and increasing to +inf,
    so the upper bracket is found by doubling before Brent's method.
    ``beta == 0`` returns 1 exactly.
    """
    if params.beta == 0.0:
        return 1.0
    lo = 1.0 + params.beta * params.delta
    f = lambda z: phi_beta(z, params, m1, m2)
    f_lo = f(lo)
    if f_lo > 0.0:
        return lo
    hi = 2.0 * lo
    for _ in range(1024):
        if f(hi) > 0.0:
            break
        hi *= 2.0
    else:
        raise BracketFailure("phi_beta never changed sign while doubling the bracket")
    z = brentq(f, lo, hi, xtol=_Z_XTOL, rtol=8.9e-16)
    resid = abs(f(z)) / _phi_beta_scale(z, params, m1, m2)
    if resid > _Z_RTOL:
        raise BracketFailure(f"phi_beta residual {resid:g} exceeds {_Z_RTOL:g}")
    return z


def merton_ratios(params: ModelParams) -> tuple[float, float]:
    """Frictionless baseline ``(c/x, pi/x)`` ratios.

    ``c/x = delta/gamma - (1 - gamma) (kappa^2 / (2 gamma^2) + r/gamma)`` and
    ``pi/x = (mu - r) / (sigma^2 gamma)``.  The consumption ratio coincides
    with the well-posedness constant K0.
    """
    g = params.gamma
    k2 = params.kappa**2
    c_ratio = params.delta / g - (1.0 - g) * (k2 / (2.0 * g * g) + params.r / g)
    pi_ratio = (params.mu - params.r) / (params.sigma**2 * g)
    return c_ratio, pi_ratio


def derive(params: ModelParams) -> DerivedConstants:
    """Validate ``params`` and compute every derived scalar constant."""
    validate(params)
    m1, m2 = quadratic_roots(params)
    gs = -(1.0 - params.gamma) / params.gamma
    assert m1 > 1.0 and m2 < min(gs, 0.0), "root ordering broken for validated params"
    z_a = solve_z_alpha(params, m1, m2)
    z_b = solve_z_beta(params, m1, m2)
    c_ratio, pi_ratio = merton_ratios(params)
    return DerivedConstants(
        kappa=params.kappa,
        gamma_star=gs,
        m1=m1,
        m2=m2,
        K0=params.k0,
        z_alpha=z_a,
        z_beta=z_b,
        merton_c_ratio=c_ratio,
        merton_pi_ratio=pi_ratio,
    )
