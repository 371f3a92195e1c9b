"""Wealth-space boundaries, dual-state inversion, value and feedback policies.

The marginal-wealth map ``g(y) = -v_y(y, h1, h2)`` is strictly decreasing
(v is strictly convex in y), so it has an inverse ``f(x, h1, h2)``: the dual
state at which the agent with wealth ``x`` operates.  Four boundary curves
split the wealth axis::

    Gloom        x <  x_gloom   valley is lowered immediately
    ValleyFlat   ... x < x_valy consumption sticks at h2
    Interior     ... x <= x_peak
    PeakFlat     ... x <= x_lavs consumption sticks at h1
    Lavish       x >  x_lavs    peak is raised immediately

Each boundary is ``g`` evaluated at the matching dual threshold.  Inversion
is a bracketed Brent solve on the region's y-interval; in the outer regions
the interval endpoint at 0 or infinity is replaced by an analytic bracket
from the exact relation ``x = K z^(1/gamma) y^(-1/gamma) + O(y^(m-1))``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .dual import DualSolution, Region
from .errors import BracketFailure, ConvergenceError, DomainError
from .model import DerivedConstants, ModelParams

__all__ = ["WealthRegion", "Boundaries", "PolicyDecision", "PrimalSolution"]

#: |g(f) - x| <= _F_RTOL * max(1, x) after inversion
_F_RTOL = 1e-10


class WealthRegion(enum.IntEnum):
    GLOOM = 0
    VALLEY_FLAT = 1
    INTERIOR = 2
    PEAK_FLAT = 3
    LAVISH = 4


#: wealth region corresponding to each dual region
_DUAL_FOR_WEALTH = {
    WealthRegion.GLOOM: Region.LOWER_VALLEY,
    WealthRegion.VALLEY_FLAT: Region.VALLEY_FLAT,
    WealthRegion.INTERIOR: Region.INTERIOR,
    WealthRegion.PEAK_FLAT: Region.PEAK_FLAT,
    WealthRegion.LAVISH: Region.RAISE_PEAK,
}


@dataclass(frozen=True)
class Boundaries:
    """The four wealth thresholds for fixed references, ordered increasingly."""

    x_gloom: float
    x_valy: float
    x_peak: float
    x_lavs: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_gloom, self.x_valy, self.x_peak, self.x_lavs)


@dataclass(frozen=True)
class PolicyDecision:
    """Feedback controls at one primal state."""

    consumption: float
    portfolio: float
    dual_state: float
    new_h1: float
    new_h2: float
    region: WealthRegion


class PrimalSolution:
    """Primal-side evaluator built on top of :class:`DualSolution`."""

    def __init__(self, params: ModelParams, constants: DerivedConstants | None = None):
        self.dual = DualSolution(params, constants)
        self.params = self.dual.params
        self.constants = self.dual.constants

    # ------------------------------------------------------------------
    # region-wise marginal wealth g = -v_y

    def _g_flat(self, y, h1, h2, peak: bool):
        _, v_y, _ = self.dual._flat_terms(
            np.asarray(y, dtype=float),
            np.asarray(h1, dtype=float),
            np.asarray(h2, dtype=float),
            peak=peak,
        )
        return -v_y

    def _g_interior(self, y, h1, h2):
        _, v_y, _ = self.dual._interior_terms(
            np.asarray(y, dtype=float),
            np.asarray(h1, dtype=float),
            np.asarray(h2, dtype=float),
        )
        return -v_y

    def boundaries(self, h1: float, h2: float) -> Boundaries:
        """Closed-form boundary curves; always ordered gloom <= valy <= peak <= lavs."""
        t0, t1, t2, t3 = self.dual.thresholds(h1, h2)
        if t0 > 0.0:
            x_lavs = float(self._g_flat(t0, h1, h2, peak=True))
        else:
            # alpha = 1/delta: the peak is never raised and the lavish
            # boundary degenerates to the wealth sustaining h1 forever
            x_lavs = float(h1) / self.params.r
        return Boundaries(
            x_gloom=float(self._g_flat(t3, h1, h2, peak=False)),
            x_valy=float(self._g_flat(t2, h1, h2, peak=False)),
            x_peak=float(self._g_flat(t1, h1, h2, peak=True)),
            x_lavs=x_lavs,
        )

    def region(self, x: float, h1: float, h2: float) -> WealthRegion:
        """Classify wealth against the boundary curves (ties mirror the dual side)."""
        if x < 0.0:
            raise DomainError("wealth must be nonnegative")
        b = self.boundaries(h1, h2)
        if x > b.x_lavs:
            return WealthRegion.LAVISH
        if x > b.x_peak:
            return WealthRegion.PEAK_FLAT
        if x >= b.x_valy:
            return WealthRegion.INTERIOR
        if x >= b.x_gloom:
            return WealthRegion.VALLEY_FLAT
        return WealthRegion.GLOOM

    # ------------------------------------------------------------------
    # inversion x -> f(x, h1, h2)

    def invert(self, x: float, h1: float, h2: float) -> float:
        """The unique y with -v_y(y, h1, h2) = x; +inf at x = 0.

        Brackets are analytic: the middle regions use their own threshold
        endpoints, the outer regions solve the leading power law for a
        starting bound.  Residual must satisfy
        |g(f) - x| <= 1e-10 * max(1, x).
        """
        self.dual._check_refs(h1, h2)
        if x < 0.0:
            raise DomainError("wealth must be nonnegative")
        if x == 0.0:
            return math.inf
        c = self.constants
        g = self.params.gamma
        t0, t1, t2, t3 = (float(t) for t in self.dual.thresholds(h1, h2))
        reg = self.region(x, h1, h2)

        if reg == WealthRegion.LAVISH:
            if c.z_alpha == 0.0:
                raise DomainError(
                    "alpha = 1/delta: the peak is never raised, wealth above h1/r "
                    "has no interior dual state"
                )
            fn = lambda y: float(self.dual.lavish_wealth_curve(y, h2)) - x
            # leading-order bracket, assembled in logs: the correction term in
            # the lavish curve is nonnegative, so this bound sits at or left
            # of the root
            w_lo = math.log(c.z_alpha) + g * (math.log(self.dual.k_alpha) - math.log(x))
            lo = math.exp(w_lo)
            if lo == 0.0:
                raise ConvergenceError(
                    f"dual state underflows double precision at x={x!r}"
                )
            for _ in range(200):
                if fn(lo) >= 0.0:
                    break
                lo *= 0.5
            else:
                raise ConvergenceError(f"no lower bracket in lavish region at x={x!r}")
            hi = t0
        elif reg == WealthRegion.PEAK_FLAT:
            fn = lambda y: float(self._g_flat(y, h1, h2, peak=True)) - x
            lo, hi = t0, t1
            if lo == 0.0:
                # alpha = 1/delta: the flat region is open at 0; shrink toward
                # the x -> (h1/r)- limit until the bracket sign holds
                lo = hi
                for _ in range(4000):
                    lo *= 0.5
                    if fn(lo) >= 0.0:
                        break
                    if lo == 0.0:
                        return 0.0
                else:
                    raise ConvergenceError(
                        f"no lower bracket in the flat region at x={x!r}"
                    )
        elif reg == WealthRegion.INTERIOR:
            fn = lambda y: float(self._g_interior(y, h1, h2)) - x
            lo, hi = t1, t2
        elif reg == WealthRegion.VALLEY_FLAT:
            fn = lambda y: float(self._g_flat(y, h1, h2, peak=False)) - x
            lo, hi = t2, t3
        else:  # GLOOM
            fn = lambda y: float(self.dual.gloom_wealth_curve(y, h1)) - x
            lo = t3
            # mirrored leading-order bound: the correction term is nonpositive
            w_hi = math.log(c.z_beta) + g * (math.log(self.dual.k_beta) - math.log(x))
            hi = math.exp(w_hi) if w_hi < 709.0 else math.inf
            if not math.isfinite(hi):
                raise ConvergenceError(
                    f"dual state overflows double precision at x={x!r}"
                )
            for _ in range(200):
                if fn(hi) <= 0.0:
                    break
                hi *= 2.0
            else:
                raise ConvergenceError(f"no upper bracket in gloom region at x={x!r}")

        tol = _F_RTOL * max(1.0, abs(x))
        if lo == hi:  # collapsed interval (degenerate region edge)
            f = lo
        else:
            # solve in log y: brackets can span hundreds of decades for large
            # gamma, where g is a mild sum of power laws in log space
            wlo, whi = math.log(lo), math.log(hi)
            lo, hi = math.exp(wlo), math.exp(whi)
            f_lo, f_hi = fn(lo), fn(hi)
            if f_lo <= 0.0:
                # the analytic bracket can land on the root itself (e.g. the
                # outer correction term vanishes identically); accept it if
                # the residual already qualifies
                if abs(f_lo) <= tol:
                    f = lo
                else:
                    raise BracketFailure(
                        f"lower bracket sign failed inverting x={x!r} "
                        f"(region {reg.name}, f({lo!r}) = {f_lo!r})"
                    )
            elif f_hi >= 0.0:
                if abs(f_hi) <= tol:
                    f = hi
                else:
                    raise BracketFailure(
                        f"upper bracket sign failed inverting x={x!r} "
                        f"(region {reg.name}, f({hi!r}) = {f_hi!r})"
                    )
            else:
                w = brentq(
                    lambda t: fn(math.exp(t)),
                    wlo,
                    whi,
                    xtol=1e-15,
                    rtol=8.881784197001252e-16,
                    maxiter=300,
                )
                f = math.exp(w)

        resid = abs(fn(f))
        if resid > tol:
            # one guarded Newton polish: g' = -v_yy evaluated with full refs
            _, v_yy = self.dual.derivatives(f, h1, h2)
            if v_yy > 0.0:
                f2 = f + fn(f) / v_yy
                if lo <= f2 <= hi and abs(fn(f2)) < resid:
                    f, resid = f2, abs(fn(f2))
        if resid > tol:
            raise ConvergenceError(
                f"inversion residual {resid:g} > {tol:g} at x={x!r}, h1={h1!r}, "
                f"h2={h2!r} (region {reg.name})"
            )
        return float(f)

    # ------------------------------------------------------------------
    # value and policy

    def value(self, x: float, h1: float, h2: float) -> float:
        """Value function u(x, h1, h2) = v(f, h1, h2) + x f, piecewise in x.

        At x = 0 the admissible control is c = pi = 0 and the valley drops to
        zero: the value is the adjustment cost of that drop for gamma < 1 and
        -inf for gamma > 1.
        """
        if x == 0.0:
            p = self.params
            if p.gamma < 1.0:
                return -p.beta * h2 ** (1.0 - p.gamma) / (1.0 - p.gamma)
            return -math.inf
        f = self.invert(x, h1, h2)
        return float(self.dual.value(f, h1, h2)) + x * f

    def policy(self, x: float, h1: float, h2: float) -> PolicyDecision:
        """Feedback consumption and portfolio, with post-jump references."""
        self.dual._check_refs(h1, h2)
        if x < 0.0:
            raise DomainError("wealth must be nonnegative")
        if x == 0.0:
            return PolicyDecision(
                consumption=0.0,
                portfolio=0.0,
                dual_state=math.inf,
                new_h1=float(h1),
                new_h2=0.0,
                region=WealthRegion.GLOOM,
            )
        reg = self.region(x, h1, h2)
        f = self.invert(x, h1, h2)
        c = self.constants
        g = self.params.gamma
        new_h1, new_h2 = float(h1), float(h2)
        if reg == WealthRegion.LAVISH:
            cons = (f / c.z_alpha) ** (-1.0 / g)
            new_h1 = cons
        elif reg == WealthRegion.PEAK_FLAT:
            cons = float(h1)
        elif reg == WealthRegion.INTERIOR:
            cons = f ** (-1.0 / g)
        elif reg == WealthRegion.VALLEY_FLAT:
            cons = float(h2)
        else:
            cons = (f / c.z_beta) ** (-1.0 / g)
            new_h2 = cons
        pi = float(self.dual.portfolio(f, h1, h2))
        return PolicyDecision(
            consumption=float(cons),
            portfolio=pi,
            dual_state=f,
            new_h1=new_h1,
            new_h2=new_h2,
            region=reg,
        )

    def consumption(self, x: float, h1: float, h2: float) -> float:
        return self.policy(x, h1, h2).consumption

    def portfolio(self, x: float, h1: float, h2: float) -> float:
        return self.policy(x, h1, h2).portfolio

    # ------------------------------------------------------------------
    # asymptotics and sensitivities

    def representable_wealth_range(self, h1: float, h2: float) -> tuple[float, float]:
        """Wealth window whose dual state stays inside double-precision range.

        The dual state scales like x^-gamma through the leading-order outer
        maps, so for large gamma only a few decades around the boundaries are
        representable.
        """
        c = self.constants
        g = self.params.gamma
        cap = 670.0
        lo = math.exp(math.log(self.dual.k_beta) + (math.log(c.z_beta) - cap) / g)
        if c.z_alpha > 0.0:
            e = math.log(self.dual.k_alpha) + (cap + math.log(c.z_alpha)) / g
            hi = math.exp(e) if e < 700.0 else math.inf
        else:
            hi = self.boundaries(h1, h2).x_lavs
        return lo, hi

    @property
    def limit_c_ratio_high_wealth(self) -> float:
        """lim_{x->inf} c*/x; decreasing in alpha, Merton's ratio at alpha = 0."""
        return 1.0 / self.dual.k_alpha

    @property
    def limit_c_ratio_low_wealth(self) -> float:
        """lim_{x->0} c*/x; increasing in beta, Merton's ratio at beta = 0."""
        return 1.0 / self.dual.k_beta

    def boundary_sensitivities(
        self, h1: float, h2: float, rel_step: float = 1e-4
    ) -> dict[str, dict[str, float]]:
        """Central first and second differences of each boundary in h1 and h2.

        Requires h1 > h2 strictly, with a step small enough to stay inside
        the admissible wedge.  Keys: 'dh1', 'dh2', 'd2h1', 'd2h2'.
        """
        if not h1 > h2 > 0.0:
            raise DomainError("sensitivities need interior references h1 > h2 > 0")
        s1 = rel_step * h1
        s2 = rel_step * h2
        if h1 - s1 <= h2 or h2 + s2 >= h1:
            raise DomainError("finite-difference step leaves h1 > h2 wedge")

        names = ("x_gloom", "x_valy", "x_peak", "x_lavs")
        around = {
            "h1": [self.boundaries(h1 + k * s1, h2).as_tuple() for k in (-1, 0, 1)],
            "h2": [self.boundaries(h1, h2 + k * s2).as_tuple() for k in (-1, 0, 1)],
        }
        out: dict[str, dict[str, float]] = {n: {} for n in names}
        for var, step in (("h1", s1), ("h2", s2)):
            lo, mid, hi = around[var]
            for i, n in enumerate(names):
                out[n][f"d{var}"] = (hi[i] - lo[i]) / (2.0 * step)
                out[n][f"d2{var}"] = (hi[i] - 2.0 * mid[i] + lo[i]) / step**2
        return out
