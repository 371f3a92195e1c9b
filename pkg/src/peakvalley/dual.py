"""Closed-form dual value function and its region structure.

The dual variable ``y`` is the marginal value of wealth.  For references
``h1 >= h2 > 0`` the positive axis splits into five intervals::

    RaisePeak   y <  z_alpha h1^-gamma    peak is raised immediately
    PeakFlat    ... y < h1^-gamma         consumption sticks at h1
    Interior    ... y <= h2^-gamma        consumption is y^(-1/gamma)
    ValleyFlat  ... y <= z_beta h2^-gamma consumption sticks at h2
    LowerValley y >  z_beta h2^-gamma     valley is lowered immediately

Ties at ``h1^-gamma`` and ``h2^-gamma`` classify as Interior, the tie at
``z_alpha h1^-gamma`` as PeakFlat and at ``z_beta h2^-gamma`` as ValleyFlat,
matching the half-open interval pattern above.  The value function is a
linear combination of ``y^m1``, ``y^m2`` and a region-specific particular
part; in the outer two regions the active reference is replaced by its
effective level ``(y/z_alpha)^(-1/gamma)`` or ``(y/z_beta)^(-1/gamma)`` and
an adjustment-cost term is added.

Power-law terms like ``h^(1 + gamma (m - 1)) * y^m`` are evaluated in log
space: for large risk aversion or extreme ``h1/h2`` ratios the coefficient
and the power can each overflow a double even though their product is
moderate.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError, RegionError
from .model import DerivedConstants, ModelParams, derive, validate

__all__ = ["Region", "DualRegion", "CoefficientSet", "DualSolution"]


class Region(enum.IntEnum):
    RAISE_PEAK = 0
    PEAK_FLAT = 1
    INTERIOR = 2
    VALLEY_FLAT = 3
    LOWER_VALLEY = 4


@dataclass(frozen=True)
class DualRegion:
    """Classified dual state with effective references substituted."""

    tag: Region
    effective_h1: float
    effective_h2: float


def _pp(coef, pairs):
    """``coef * prod(base**expo)`` computed as ``coef * exp(sum expo*log base)``.

    Bases must be nonnegative scalars or arrays; a zero base with a positive
    exponent yields the limit 0, and a genuinely huge product overflows to
    inf rather than corrupting intermediate factors.
    """
    if coef == 0.0:
        return 0.0
    with np.errstate(divide="ignore", over="ignore"):
        acc = 0.0
        for base, expo in pairs:
            acc = acc + expo * np.log(base)
        return coef * np.exp(acc)


class CoefficientSet:
    """The six coefficient functions evaluated lazily at one ``(h1, h2)``."""

    def __init__(self, solution: "DualSolution", h1: float, h2: float):
        solution._check_refs(h1, h2)
        self._s = solution
        self.h1 = float(h1)
        self.h2 = float(h2)

    @cached_property
    def c2(self) -> float:
        s = self._s
        return _pp(s._b2, [(self.h1, s._e2)])

    @cached_property
    def c4(self) -> float:
        s = self._s
        return _pp(s._b2 + s._q2, [(self.h1, s._e2)])

    @cached_property
    def c5(self) -> float:
        s = self._s
        return _pp(s._b5, [(self.h2, s._e1)])

    @cached_property
    def c3(self) -> float:
        s = self._s
        return _pp(s._b5 - s._q1, [(self.h2, s._e1)])

    @cached_property
    def c1(self) -> float:
        s = self._s
        return self.c3 + _pp(s._q1, [(self.h1, s._e1)])

    @cached_property
    def c6(self) -> float:
        s = self._s
        return self.c4 - _pp(s._q2, [(self.h2, s._e2)])

    def values(self) -> tuple[float, float, float, float, float, float]:
        return (self.c1, self.c2, self.c3, self.c4, self.c5, self.c6)


class DualSolution:
    """Evaluator for the dual value function and its derivatives.

    Pure functions of immutable inputs; instances are safe to share across
    threads.  All evaluation methods accept scalars or numpy arrays (subject
    to broadcasting) and return matching shapes.
    """

    def __init__(self, params: ModelParams, constants: DerivedConstants | None = None):
        self.params = validate(params)
        self.constants = constants if constants is not None else derive(params)

        p, c = self.params, self.constants
        g = p.gamma
        gs = c.gamma_star
        m1, m2 = c.m1, c.m2
        k2 = c.kappa**2
        span = m1 - m2

        # h-exponents of the two homogeneous branches
        self._e1 = 1.0 + g * (m1 - 1.0)
        self._e2 = 1.0 + g * (m2 - 1.0)
        # increments linking C1-C3, C3-C5, C2-C4, C4-C6
        self._q1 = 2.0 * (1.0 - gs) / (k2 * span * m1 * (m1 - 1.0) * (m1 - gs))
        self._q2 = 2.0 * (1.0 - gs) / (k2 * span * m2 * (m2 - 1.0) * (m2 - gs))
        # free-boundary prefactors of C2 and C5
        self._b2 = (
            (1.0 - gs)
            / (span * (m2 - gs))
            * (
                m1 * (p.alpha * p.delta - 1.0) / p.delta * c.z_alpha ** (-m2)
                + (m1 - 1.0) / p.r * c.z_alpha ** (1.0 - m2)
            )
        )
        self._b5 = (
            (1.0 - gs)
            / (span * (m1 - gs))
            * (
                m2 * (p.beta * p.delta + 1.0) / p.delta * c.z_beta ** (-m1)
                + (1.0 - m2) / p.r * c.z_beta ** (1.0 - m1)
            )
        )
        # particular part of the interior region: pv * y^gs in v
        self._pv = 2.0 / (k2 * gs * (gs - m1) * (gs - m2))
        self._pm = gs * self._pv
        # constant part of the flat regions: h^(1-gamma) * _flat0
        self._flat0 = 1.0 / (p.delta * (1.0 - g))

    # ------------------------------------------------------------------
    # domain checks and classification

    @staticmethod
    def _check_refs(h1, h2) -> None:
        h1a, h2a = np.asarray(h1, dtype=float), np.asarray(h2, dtype=float)
        if np.any(h2a <= 0.0) or np.any(h1a < h2a):
            raise DomainError("references must satisfy h1 >= h2 > 0")

    @staticmethod
    def _check_y(y) -> None:
        if np.any(np.asarray(y, dtype=float) <= 0.0):
            raise DomainError("dual state y must be positive")

    def thresholds(self, h1, h2):
        """Region edges ``(z_a h1^-g, h1^-g, h2^-g, z_b h2^-g)``.

        May overflow to inf for extreme gamma / reference combinations;
        classification itself runs in log space and is unaffected.
        """
        self._check_refs(h1, h2)
        g, c = self.params.gamma, self.constants
        with np.errstate(over="ignore"):
            t1 = np.asarray(h1, dtype=float) ** -g
            t2 = np.asarray(h2, dtype=float) ** -g
            return c.z_alpha * t1, t1, t2, c.z_beta * t2

    def _codes(self, y, h1, h2):
        t0, t1, t2, t3 = self.thresholds(h1, h2)
        y = np.asarray(y, dtype=float)
        code = np.full(np.broadcast(y, t1, t2).shape, Region.INTERIOR, dtype=np.int8)
        code[np.broadcast_to(y < t1, code.shape)] = Region.PEAK_FLAT
        code[np.broadcast_to(y < t0, code.shape)] = Region.RAISE_PEAK
        code[np.broadcast_to(y > t2, code.shape)] = Region.VALLEY_FLAT
        code[np.broadcast_to(y > t3, code.shape)] = Region.LOWER_VALLEY
        return code

    def _effective_refs(self, y, h1, h2, code):
        """References after instantaneous adjustment in the outer regions."""
        g = self.params.gamma
        c = self.constants
        y = np.asarray(y, dtype=float)
        h1_eff = np.broadcast_to(np.asarray(h1, dtype=float), code.shape).copy()
        h2_eff = np.broadcast_to(np.asarray(h2, dtype=float), code.shape).copy()
        up = code == Region.RAISE_PEAK
        dn = code == Region.LOWER_VALLEY
        if np.any(up):
            h1_eff[up] = (np.broadcast_to(y, code.shape)[up] / c.z_alpha) ** (-1.0 / g)
        if np.any(dn):
            h2_eff[dn] = (np.broadcast_to(y, code.shape)[dn] / c.z_beta) ** (-1.0 / g)
        return h1_eff, h2_eff

    def classify(self, y: float, h1: float, h2: float) -> DualRegion:
        """Region tag plus effective references for one dual state."""
        self._check_y(y)
        code = self._codes(np.float64(y), h1, h2)
        tag = Region(int(code))
        h1_eff, h2_eff = self._effective_refs(np.float64(y), h1, h2, code.reshape(1))
        return DualRegion(tag, float(h1_eff[0]), float(h2_eff[0]))

    def coefficients(self, h1: float, h2: float) -> CoefficientSet:
        return CoefficientSet(self, h1, h2)

    # ------------------------------------------------------------------
    # region-wise closed forms (refs already effective where required)

    def _flat_terms(self, y, h1, h2, peak: bool):
        """(v, v_y, v_yy) in the peak- or valley-flat region."""
        p, c = self.params, self.constants
        m1, m2 = c.m1, c.m2
        if peak:
            a1 = [(self._b5 - self._q1, [(h2, self._e1)]), (self._q1, [(h1, self._e1)])]
            a2 = [(self._b2, [(h1, self._e2)])]
            h = h1
        else:
            a1 = [(self._b5, [(h2, self._e1)])]
            a2 = [(self._b2 + self._q2, [(h1, self._e2)]), (-self._q2, [(h2, self._e2)])]
            h = h2
        def s(extra):
            tot = 0.0
            for coef, pairs in a1:
                tot = tot + _pp(coef, pairs + [(y, m1 + extra)])
            return tot
        def t(extra):
            tot = 0.0
            for coef, pairs in a2:
                tot = tot + _pp(coef, pairs + [(y, m2 + extra)])
            return tot
        hpow = _pp(self._flat0, [(h, 1.0 - p.gamma)])
        v = s(0.0) + t(0.0) + hpow - y * h / p.r
        v_y = m1 * s(-1.0) + m2 * t(-1.0) - h / p.r
        v_yy = m1 * (m1 - 1.0) * s(-2.0) + m2 * (m2 - 1.0) * t(-2.0)
        return v, v_y, v_yy

    def _interior_terms(self, y, h1, h2):
        c = self.constants
        m1, m2, gs = c.m1, c.m2, c.gamma_star
        s = lambda extra: _pp(self._b5 - self._q1, [(h2, self._e1), (y, m1 + extra)])
        t = lambda extra: _pp(self._b2 + self._q2, [(h1, self._e2), (y, m2 + extra)])
        u = lambda extra, coef: _pp(coef, [(y, gs + extra)])
        v = s(0.0) + t(0.0) + u(0.0, self._pv)
        v_y = m1 * s(-1.0) + m2 * t(-1.0) + u(-1.0, self._pm)
        v_yy = m1 * (m1 - 1.0) * s(-2.0) + m2 * (m2 - 1.0) * t(-2.0) + u(
            -2.0, self._pm * (gs - 1.0)
        )
        return v, v_y, v_yy

    def _eval(self, y, h1, h2):
        """(v, v_y, v_yy) on arbitrary broadcastable positive inputs."""
        self._check_y(y)
        self._check_refs(h1, h2)
        p = self.params
        code = self._codes(y, h1, h2)
        shape = code.shape
        y_b = np.broadcast_to(np.asarray(y, dtype=float), shape)
        h1_b = np.broadcast_to(np.asarray(h1, dtype=float), shape)
        h2_b = np.broadcast_to(np.asarray(h2, dtype=float), shape)
        h1_eff, h2_eff = self._effective_refs(y_b, h1_b, h2_b, code)

        v = np.empty(shape)
        v_y = np.empty(shape)
        v_yy = np.empty(shape)

        peak = code <= Region.PEAK_FLAT
        mid = code == Region.INTERIOR
        vall = code >= Region.VALLEY_FLAT
        for mask, fn in (
            (peak, lambda m: self._flat_terms(y_b[m], h1_eff[m], h2_eff[m], peak=True)),
            (mid, lambda m: self._interior_terms(y_b[m], h1_eff[m], h2_eff[m])),
            (vall, lambda m: self._flat_terms(y_b[m], h1_eff[m], h2_eff[m], peak=False)),
        ):
            if np.any(mask):
                v[mask], v_y[mask], v_yy[mask] = fn(mask)

        # adjustment-cost offsets where a reference was replaced
        up = code == Region.RAISE_PEAK
        if np.any(up):
            w = p.alpha / (1.0 - p.gamma)
            v[up] += w * (h1_b[up] ** (1.0 - p.gamma) - h1_eff[up] ** (1.0 - p.gamma))
        dn = code == Region.LOWER_VALLEY
        if np.any(dn):
            w = p.beta / (1.0 - p.gamma)
            v[dn] -= w * (h2_b[dn] ** (1.0 - p.gamma) - h2_eff[dn] ** (1.0 - p.gamma))
        return v, v_y, v_yy

    # ------------------------------------------------------------------
    # public evaluation API

    def value(self, y, h1, h2):
        """Dual value v(y, h1, h2)."""
        v, _, _ = self._eval(y, h1, h2)
        return v if v.ndim else float(v)

    def derivatives(self, y, h1, h2):
        """(v_y, v_yy).  v is strictly convex in y, so v_yy > 0."""
        _, v_y, v_yy = self._eval(y, h1, h2)
        if v_y.ndim:
            return v_y, v_yy
        return float(v_y), float(v_yy)

    def marginal_wealth(self, y, h1, h2):
        """g(y, h1, h2) = -v_y, the wealth level at which u_x equals y."""
        _, v_y, _ = self._eval(y, h1, h2)
        out = -v_y
        return out if out.ndim else float(out)

    def consumption(self, y, h1, h2):
        """Feedback consumption: y^(-1/gamma) clipped to the effective references."""
        self._check_y(y)
        code = self._codes(y, h1, h2)
        y_b = np.broadcast_to(np.asarray(y, dtype=float), code.shape)
        h1_b = np.broadcast_to(np.asarray(h1, dtype=float), code.shape)
        h2_b = np.broadcast_to(np.asarray(h2, dtype=float), code.shape)
        h1_eff, h2_eff = self._effective_refs(y_b, h1_b, h2_b, code)
        out = np.clip(y_b ** (-1.0 / self.params.gamma), h2_eff, h1_eff)
        return out if out.ndim else float(out)

    def portfolio(self, y, h1, h2):
        """Feedback risky allocation (mu - r)/sigma^2 * y * v_yy; positive by convexity."""
        _, _, v_yy = self._eval(y, h1, h2)
        p = self.params
        out = (p.mu - p.r) / p.sigma**2 * np.asarray(y, dtype=float) * v_yy
        return out if out.ndim else float(out)

    def utility_sup(self, q, h1, h2):
        """sup over c in [h2, h1] of U(c) - c q, piecewise in q."""
        self._check_refs(h1, h2)
        self._check_y(q)
        p, gs = self.params, self.constants.gamma_star
        q_a = np.asarray(q, dtype=float)
        h1_a = np.asarray(h1, dtype=float)
        h2_a = np.asarray(h2, dtype=float)
        one_m_g = 1.0 - p.gamma
        peak = h1_a**one_m_g / one_m_g - h1_a * q_a
        mid = -(q_a**gs) / gs
        vall = h2_a**one_m_g / one_m_g - h2_a * q_a
        out = np.where(q_a < h1_a**-p.gamma, peak, np.where(q_a > h2_a**-p.gamma, vall, mid))
        return out if out.ndim else float(out)

    def hjb_residual(self, y, h1, h2):
        """delta*v - kappa^2 y^2/2 * v_yy - (delta - r) y v_y - Usup.

        Defined only strictly inside the middle three regions, where the dual
        ODE holds with equality; raises RegionError otherwise.
        """
        code = self._codes(y, h1, h2)
        if np.any(code == Region.RAISE_PEAK) or np.any(code == Region.LOWER_VALLEY):
            raise RegionError(
                "HJB residual is defined only in the flat and interior regions"
            )
        p = self.params
        k2 = self.constants.kappa**2
        v, v_y, v_yy = self._eval(y, h1, h2)
        y_a = np.asarray(y, dtype=float)
        out = (
            p.delta * v
            - 0.5 * k2 * y_a**2 * v_yy
            - (p.delta - p.r) * y_a * v_y
            - self.utility_sup(y, h1, h2)
        )
        return out if out.ndim else float(out)

    # ------------------------------------------------------------------
    # pieces reused by the primal inversion

    def lavish_wealth_curve(self, y, h2):
        """g(y, h1_eff(y), h2) for y below the peak-raising threshold.

        After substituting the effective peak the h1-dependence collapses to
        ``K_alpha z_alpha^(1/gamma) y^(-1/gamma) - m1 C3(h2) y^(m1-1)`` where
        ``1/K_alpha`` is the large-wealth consumption ratio.
        """
        c = self.constants
        g = self.params.gamma
        c3 = _pp(self._b5 - self._q1, [(np.asarray(h2, dtype=float), self._e1)])
        out = self.k_alpha * c.z_alpha ** (1.0 / g) * np.asarray(y, dtype=float) ** (
            -1.0 / g
        ) - c.m1 * c3 * np.asarray(y, dtype=float) ** (c.m1 - 1.0)
        return out if np.ndim(out) else float(out)

    def gloom_wealth_curve(self, y, h1):
        """g(y, h1, h2_eff(y)) for y above the valley-lowering threshold."""
        c = self.constants
        g = self.params.gamma
        c4 = _pp(self._b2 + self._q2, [(np.asarray(h1, dtype=float), self._e2)])
        out = self.k_beta * c.z_beta ** (1.0 / g) * np.asarray(y, dtype=float) ** (
            -1.0 / g
        ) - c.m2 * c4 * np.asarray(y, dtype=float) ** (c.m2 - 1.0)
        return out if np.ndim(out) else float(out)

    @cached_property
    def k_alpha(self) -> float:
        """Reciprocal of the x -> infinity consumption-wealth ratio."""
        c = self.constants
        k2 = c.kappa**2
        m1, m2, gs = c.m1, c.m2, c.gamma_star
        return (
            2.0 * (1.0 - gs) / (k2 * (m1 - 1.0) * (m1 - gs)) * c.z_alpha ** (m1 - 1.0)
            + (m2 - 1.0) / self.params.r
        ) / (m2 - gs)

    @cached_property
    def k_beta(self) -> float:
        """Reciprocal of the x -> 0 consumption-wealth ratio."""
        c = self.constants
        k2 = c.kappa**2
        m1, m2, gs = c.m1, c.m2, c.gamma_star
        return (
            2.0 * (1.0 - gs) / (k2 * (m2 - 1.0) * (m2 - gs)) * c.z_beta ** (m2 - 1.0)
            + (m1 - 1.0) / self.params.r
        ) / (m1 - gs)
