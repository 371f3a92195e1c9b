"""Named invariant checks over the closed-form solution.

Each check exercises one structural identity (root residuals, smooth
pasting, convexity, the dual ODE, inversion round-trips, policy bounds,
degenerations) and reports its worst scaled residual against a fixed
tolerance.  The CLI ``verify`` subcommand runs the whole list; the test
suite calls individual checks directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import qmc

from .dual import DualSolution, Region
from .model import (
    DerivedConstants,
    ModelParams,
    derive,
    phi_alpha,
    phi_beta,
    _phi_alpha_scale,
    _phi_beta_scale,
)
from .primal import PrimalSolution, WealthRegion

__all__ = ["CheckResult", "VerifySuite", "run_all"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    residual: float
    tolerance: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f"  ({self.detail})" if self.detail else ""
        return f"{status}  {self.name:28s} residual {self.residual:.3e} tol {self.tolerance:.1e}{extra}"


class VerifySuite:
    """Invariant suite at one parameter set and reference pair."""

    def __init__(
        self,
        params: ModelParams,
        h1: float = 1.0,
        h2: float = 0.5,
        constants: DerivedConstants | None = None,
        seed: int = 7,
    ):
        self.params = params
        self.constants = constants if constants is not None else derive(params)
        self.primal = PrimalSolution(params, self.constants)
        self.dual = self.primal.dual
        self.h1 = float(h1)
        self.h2 = float(h2)
        self.rng = np.random.default_rng(seed)

    # -- state grids ----------------------------------------------------

    def _mid_band_y(self, n: int) -> np.ndarray:
        """Geometric grid strictly inside the middle three regions."""
        t0, _, _, t3 = (float(t) for t in self.dual.thresholds(self.h1, self.h2))
        lo = t0 * 1.001 if t0 > 0 else 1e-3 * float(self.h1) ** -self.params.gamma
        return np.geomspace(lo, t3 * 0.999, n)

    def _five_region_y(self, n: int) -> np.ndarray:
        t0, t1, t2, t3 = (float(t) for t in self.dual.thresholds(self.h1, self.h2))
        lo = (t0 if t0 > 0 else 0.05 * t1) * 0.05
        return np.geomspace(lo, t3 * 20.0, n)

    def _x_grid(self, lo_factor: float, hi_factor: float, n: int) -> np.ndarray:
        """Wealth grid spanning the regions reachable by inversion."""
        b = self.primal.boundaries(self.h1, self.h2)
        r_lo, r_hi = self.primal.representable_wealth_range(self.h1, self.h2)
        lo = max(lo_factor * b.x_gloom if b.x_gloom > 0 else 0.01, 2.0 * r_lo)
        if self.constants.z_alpha > 0.0:
            hi = min(hi_factor * b.x_lavs, 0.5 * r_hi)
        else:
            hi = 0.999 * b.x_lavs  # wealth beyond h1/r has no dual state here
        return np.geomspace(lo, hi, n)

    def checks(self) -> list[CheckResult]:
        out = [
            self.check_quadratic_roots(),
            self.check_free_boundaries(),
            self.check_coefficient_differences(),
            self.check_coefficient_signs(),
            self.check_boundary_ordering(),
            self.check_smooth_pasting(),
            self.check_super_contact(),
            self.check_hjb_residual(),
            self.check_convexity(),
            self.check_dual_homogeneity(),
            self.check_variational_slack(),
            self.check_inversion_roundtrip(),
            self.check_value_homogeneity(),
            self.check_portfolio_bound(),
            self.check_consumption_cases(),
            self.check_fx_identity(),
            self.check_asymptotic_ratios(),
            self.check_merton_degeneration(),
        ]
        return out

    # -- individual checks ----------------------------------------------

    def check_quadratic_roots(self) -> CheckResult:
        p, c = self.params, self.constants
        k2 = c.kappa**2
        q = lambda m: 0.5 * k2 * m * m + (p.delta - p.r - 0.5 * k2) * m - p.delta
        scale = max(0.5 * k2 * c.m1**2, abs(p.delta), 1.0)
        resid = max(abs(q(c.m1)), abs(q(c.m2))) / scale
        vieta = max(
            abs(c.m1 + c.m2 - (1.0 + 2.0 * (p.r - p.delta) / k2)),
            abs(c.m1 * c.m2 + 2.0 * p.delta / k2),
        )
        resid = max(resid, vieta / max(1.0, abs(c.m1 * c.m2)))
        ok = resid <= 1e-12 and c.m1 > 1.0 and c.m2 < min(c.gamma_star, 0.0)
        return CheckResult("quadratic_roots", ok, resid, 1e-12)

    def check_free_boundaries(self) -> CheckResult:
        p, c = self.params, self.constants
        tol = 1e-10
        worst = 0.0
        if 0.0 < c.z_alpha:
            worst = abs(phi_alpha(c.z_alpha, p, c.m1, c.m2)) / _phi_alpha_scale(
                c.z_alpha, p, c.m1, c.m2
            )
        worst = max(
            worst,
            abs(phi_beta(c.z_beta, p, c.m1, c.m2))
            / _phi_beta_scale(c.z_beta, p, c.m1, c.m2),
        )
        in_brackets = (
            0.0 <= c.z_alpha <= 1.0 - p.alpha * p.delta + 1e-15
            and c.z_beta >= 1.0 + p.beta * p.delta - 1e-15
        )
        return CheckResult("free_boundary_residuals", worst <= tol and in_brackets, worst, tol)

    def check_coefficient_differences(self) -> CheckResult:
        p, c = self.params, self.constants
        cs = self.dual.coefficients(self.h1, self.h2)
        k2 = c.kappa**2
        m1, m2, gs = c.m1, c.m2, c.gamma_star
        span = m1 - m2
        g = p.gamma
        d13 = 2 * (1 - gs) / (k2 * span * m1 * (m1 - 1) * (m1 - gs)) * self.h1 ** (
            1 + g * (m1 - 1)
        )
        d24 = 2 * (gs - 1) / (k2 * span * m2 * (m2 - 1) * (m2 - gs)) * self.h1 ** (
            1 + g * (m2 - 1)
        )
        d35 = 2 * (gs - 1) / (k2 * span * m1 * (m1 - 1) * (m1 - gs)) * self.h2 ** (
            1 + g * (m1 - 1)
        )
        d46 = 2 * (1 - gs) / (k2 * span * m2 * (m2 - 1) * (m2 - gs)) * self.h2 ** (
            1 + g * (m2 - 1)
        )
        pairs = [
            (cs.c1 - cs.c3, d13),
            (cs.c2 - cs.c4, d24),
            (cs.c3 - cs.c5, d35),
            (cs.c4 - cs.c6, d46),
        ]
        worst = max(abs(a - b) / max(abs(b), 1e-300) for a, b in pairs)
        return CheckResult("coefficient_differences", worst <= 1e-10, worst, 1e-10)

    def check_coefficient_signs(self) -> CheckResult:
        worst = 0.0
        ok = True
        for h1, h2 in [(self.h1, self.h2), (self.h1, self.h1), (10 * self.h1, self.h2)]:
            cs = self.dual.coefficients(h1, h2)
            scale = max(abs(v) for v in cs.values())
            slack = 1e-12 * scale
            ok &= cs.c1 > -slack and cs.c2 > -slack and cs.c5 > -slack and cs.c6 > -slack
            ok &= cs.c3 <= slack and cs.c4 <= slack
            worst = max(worst, max(cs.c3, cs.c4, 0.0) / max(scale, 1e-300))
        return CheckResult("coefficient_signs", bool(ok), worst, 1e-12)

    def check_boundary_ordering(self) -> CheckResult:
        b = self.primal.boundaries(self.h1, self.h2)
        seq = b.as_tuple()
        gaps = min(seq[i + 1] - seq[i] for i in range(3))
        ok = gaps >= -1e-9 * max(abs(v) for v in seq)
        return CheckResult("boundary_ordering", bool(ok), max(0.0, -gaps), 1e-9)

    def check_smooth_pasting(self) -> CheckResult:
        """v and v_y continuous across all four thresholds.

        Evaluates a hair to each side of every threshold so the comparison
        runs through both region branches of the dispatcher; the O(eps)
        smooth variation is far below the 1e-9 jump tolerance.
        """
        t = [float(v) for v in self.dual.thresholds(self.h1, self.h2)]
        worst = 0.0
        eps = 2.0**-40
        for ti in t:
            if ti <= 0.0:
                continue
            lo, hi = ti * (1 - eps), ti * (1 + eps)
            v_lo, v_hi = self.dual.value(lo, self.h1, self.h2), self.dual.value(
                hi, self.h1, self.h2
            )
            vy_lo, vy_hi = (
                self.dual.derivatives(lo, self.h1, self.h2)[0],
                self.dual.derivatives(hi, self.h1, self.h2)[0],
            )
            worst = max(
                worst,
                abs(v_hi - v_lo) / max(1.0, abs(v_lo)),
                abs(vy_hi - vy_lo) / max(1.0, abs(vy_lo)),
            )
        return CheckResult("smooth_pasting", worst <= 1e-9, worst, 1e-9)

    def check_super_contact(self) -> CheckResult:
        """Finite-difference v_yh1 at the peak threshold and v_yh2 at the valley one.

        The reference derivative is one-sided from the smooth (no-adjustment)
        side of each boundary: across it v_y is constant in the reference, so
        a centered difference would only measure the curvature kink.
        """
        t0, _, _, t3 = (float(v) for v in self.dual.thresholds(self.h1, self.h2))
        worst = 0.0
        step = 1e-6
        if t0 > 0.0:
            s = step * self.h1
            vy0 = self.dual.derivatives(t0, self.h1, self.h2)[0]
            vy1 = self.dual.derivatives(t0, self.h1 + s, self.h2)[0]
            vy2 = self.dual.derivatives(t0, self.h1 + 2 * s, self.h2)[0]
            worst = max(worst, abs((-3 * vy0 + 4 * vy1 - vy2) / (2 * s)))
        s = step * self.h2
        vy0 = self.dual.derivatives(t3, self.h1, self.h2)[0]
        vy1 = self.dual.derivatives(t3, self.h1, self.h2 - s)[0]
        vy2 = self.dual.derivatives(t3, self.h1, self.h2 - 2 * s)[0]
        worst = max(worst, abs((3 * vy0 - 4 * vy1 + vy2) / (2 * s)))
        return CheckResult("super_contact", worst <= 1e-6, worst, 1e-6)

    def check_hjb_residual(self, n: int = 1000) -> CheckResult:
        ys = self._mid_band_y(n)
        v = self.dual.value(ys, self.h1, self.h2)
        resid = self.dual.hjb_residual(ys, self.h1, self.h2)
        scaled = np.max(np.abs(resid) / np.maximum(np.abs(self.params.delta * v), 1.0))
        return CheckResult("hjb_residual", bool(scaled <= 1e-8), float(scaled), 1e-8)

    def check_convexity(self, m: int = 10) -> CheckResult:
        """v_yy > 0 on 2^m quasi-random states spanning all five regions."""
        sampler = qmc.Sobol(d=3, scramble=True, seed=self.rng.integers(2**32))
        u = sampler.random_base2(m)
        t0, _, _, t3 = (float(v) for v in self.dual.thresholds(self.h1, self.h2))
        lo = 0.05 * (t0 if t0 > 0 else t3 * 1e-3)
        ys = lo * (20.0 * t3 / lo) ** u[:, 0]
        h1s = self.h1 * 10.0 ** (2 * u[:, 1] - 1)
        h2s = h1s * (self.h2 / self.h1) ** u[:, 2]
        _, v_yy = self.dual.derivatives(ys, h1s, h2s)
        worst = float(np.min(v_yy))
        return CheckResult("convexity", worst > 0.0, worst, 0.0, "min v_yy")

    def check_dual_homogeneity(self, n: int = 200) -> CheckResult:
        g = self.params.gamma
        ys = self._five_region_y(n)
        v = self.dual.value(ys, self.h1, self.h2)
        v_scaled = self.h1 ** (1 - g) * self.dual.value(
            ys * self.h1**g, 1.0, self.h2 / self.h1
        )
        worst = float(np.max(np.abs(v - v_scaled) / np.maximum(np.abs(v), 1.0)))
        return CheckResult("dual_homogeneity", worst <= 1e-9, worst, 1e-9)

    def check_variational_slack(self, n: int = 60) -> CheckResult:
        """fd v_h1 - alpha V'(h1) <= 0 with equality iff the peak is being raised,
        and -fd v_h2 - beta V'(h2) <= 0 with equality iff the valley is lowered."""
        p = self.params
        g = p.gamma
        ys = self._five_region_y(n)
        s1, s2 = 1e-6 * self.h1, 1e-6 * self.h2
        worst = 0.0
        tol = 5e-6 * max(1.0, self.h1**-g)
        ok = True
        for y in ys:
            code = self.dual.classify(float(y), self.h1, self.h2).tag
            # the centered difference carries eps*|v|/s roundoff, which for
            # strongly curved utilities (large gamma) dominates the base tol
            v_scale = abs(self.dual.value(float(y), self.h1, self.h2))
            if self.h1 - s1 > self.h2:
                vh1 = (
                    self.dual.value(y, self.h1 + s1, self.h2)
                    - self.dual.value(y, self.h1 - s1, self.h2)
                ) / (2 * s1)
                slack1 = vh1 - p.alpha * self.h1**-g
                tol1 = max(tol, 50.0 * 2.2e-16 * v_scale / s1)
                if code == Region.RAISE_PEAK:
                    ok &= abs(slack1) <= tol1
                else:
                    ok &= slack1 <= tol1
                worst = max(worst, slack1 / tol1)
            if self.h2 + s2 < self.h1:
                vh2 = (
                    self.dual.value(y, self.h1, self.h2 + s2)
                    - self.dual.value(y, self.h1, self.h2 - s2)
                ) / (2 * s2)
                slack2 = -vh2 - p.beta * self.h2**-g
                tol2 = max(tol, 50.0 * 2.2e-16 * v_scale / s2)
                if code == Region.LOWER_VALLEY:
                    ok &= abs(slack2) <= tol2
                else:
                    ok &= slack2 <= tol2
                worst = max(worst, slack2 / tol2)
        return CheckResult(
            "variational_slack", bool(ok), float(worst), 1.0, "slack / tolerance"
        )

    def check_inversion_roundtrip(self, n: int = 200) -> CheckResult:
        ys = self._five_region_y(n)
        worst = 0.0
        for y in ys:
            x = self.dual.marginal_wealth(float(y), self.h1, self.h2)
            if x <= 0.0:
                continue
            f = self.primal.invert(x, self.h1, self.h2)
            worst = max(worst, abs(f - y) / y)
        return CheckResult("inversion_roundtrip", worst <= 1e-8, worst, 1e-8)

    def check_value_homogeneity(self, n: int = 40) -> CheckResult:
        g = self.params.gamma
        xs = self._x_grid(0.2, 3.0, n)
        worst = 0.0
        for x in xs:
            u = self.primal.value(float(x), self.h1, self.h2)
            u_scaled = self.h1 ** (1 - g) * self.primal.value(
                float(x) / self.h1, 1.0, self.h2 / self.h1
            )
            worst = max(worst, abs(u - u_scaled) / max(1.0, abs(u)))
        return CheckResult("value_homogeneity", worst <= 1e-9, worst, 1e-9)

    def check_portfolio_bound(self, n: int = 120) -> CheckResult:
        c = self.constants
        xs = self._x_grid(0.05, 20.0, n)
        worst = -math.inf
        ok = True
        for x in xs:
            pol = self.primal.policy(float(x), self.h1, self.h2)
            ratio = pol.portfolio / float(x)
            ok &= pol.portfolio > 0.0
            excess = ratio - c.merton_pi_ratio
            worst = max(worst, excess)
            ok &= excess <= 1e-9 * c.merton_pi_ratio
        return CheckResult(
            "portfolio_bound", bool(ok), float(max(worst, 0.0)), 1e-9, "pi/x - merton"
        )

    def check_consumption_cases(self, n: int = 120) -> CheckResult:
        xs = self._x_grid(0.05, 20.0, n)
        ok = True
        worst = 0.0
        for x in xs:
            pol = self.primal.policy(float(x), self.h1, self.h2)
            ok &= pol.new_h2 - 1e-12 <= pol.consumption <= pol.new_h1 + 1e-12
            if pol.region == WealthRegion.PEAK_FLAT:
                worst = max(worst, abs(pol.consumption - self.h1))
            elif pol.region == WealthRegion.VALLEY_FLAT:
                worst = max(worst, abs(pol.consumption - self.h2))
            elif pol.region == WealthRegion.LAVISH:
                ok &= pol.consumption > self.h1 and pol.new_h1 == pol.consumption
            elif pol.region == WealthRegion.GLOOM:
                ok &= pol.consumption < self.h2 and pol.new_h2 == pol.consumption
        ok &= worst == 0.0
        return CheckResult("consumption_cases", bool(ok), worst, 0.0)

    def check_fx_identity(self, n: int = 40) -> CheckResult:
        """f_x = 1 / g_y(f) against central differences in x."""
        xs = self._x_grid(0.3, 2.0, n)
        worst = 0.0
        for x in xs:
            x = float(x)
            f = self.primal.invert(x, self.h1, self.h2)
            _, v_yy = self.dual.derivatives(f, self.h1, self.h2)
            analytic = -1.0 / v_yy  # g_y = -v_yy
            s = 1e-6 * max(x, 1.0)
            fd = (
                self.primal.invert(x + s, self.h1, self.h2)
                - self.primal.invert(x - s, self.h1, self.h2)
            ) / (2 * s)
            worst = max(worst, abs(fd - analytic) / max(abs(analytic), 1e-12))
        return CheckResult("fx_identity", worst <= 1e-5, worst, 1e-5)

    def check_asymptotic_ratios(self) -> CheckResult:
        """c*/x and pi*/x approach their closed-form limits at the analytic rate.

        Toward x -> 0 the relative deviation decays like
        ``x^(gamma (1 - m2) - 1)``, which can be arbitrarily slow; the probe
        wealth is pushed far enough below x_gloom (bounded by float range)
        for the 1e-4 tolerance to be meaningful.  Toward x -> infinity the
        rate exponent is ``1 + gamma (m1 - 1) >= 1`` and 1e6 x_lavs suffices.
        """
        p, c = self.params, self.constants
        b = self.primal.boundaries(self.h1, self.h2)

        def dev_low(x: float) -> float:
            pol = self.primal.policy(x, self.h1, self.h2)
            return max(
                abs(pol.consumption / x - self.primal.limit_c_ratio_low_wealth)
                / self.primal.limit_c_ratio_low_wealth,
                abs(pol.portfolio / x - c.merton_pi_ratio) / c.merton_pi_ratio,
            )

        worst = 0.0
        detail = ""
        # the dual state scales like x^-gamma; probes stay inside the window
        # where it is representable in double precision
        r_lo, r_hi = self.primal.representable_wealth_range(self.h1, self.h2)
        if c.z_alpha > 0.0:
            x_hi = min(1e6 * b.x_lavs, 0.5 * r_hi)
            pol = self.primal.policy(x_hi, self.h1, self.h2)
            worst = max(
                abs(pol.consumption / x_hi - self.primal.limit_c_ratio_high_wealth)
                / self.primal.limit_c_ratio_high_wealth,
                abs(pol.portfolio / x_hi - c.merton_pi_ratio) / c.merton_pi_ratio,
            )

        rate = p.gamma * (1.0 - c.m2) - 1.0  # > 0 under K0 > 0
        probe = max(1e-6 * b.x_gloom, 2.0 * r_lo)
        d = dev_low(probe)
        if d > 1e-5 and rate > 0.0:
            needed = probe * (1e-5 / d) ** (1.0 / rate)
            probe = max(needed, 2.0 * r_lo)
            d = dev_low(probe)
            detail = f"x -> 0 probe at {probe / b.x_gloom:.1e} x_gloom (rate {rate:.3g})"
        worst = max(worst, d)
        return CheckResult("asymptotic_ratios", worst <= 1e-4, worst, 1e-4, detail)

    def check_merton_degeneration(self) -> CheckResult:
        """alpha = beta = 0 collapses to the frictionless model."""
        p0 = replace(self.params, alpha=0.0, beta=0.0)
        c0 = derive(p0)
        pr0 = PrimalSolution(p0, c0)
        b0 = pr0.boundaries(self.h1, self.h2)
        worst = max(
            abs(c0.z_alpha - 1.0),
            abs(c0.z_beta - 1.0),
            abs(b0.x_lavs - b0.x_peak) / max(1.0, b0.x_peak),
            abs(b0.x_gloom - b0.x_valy) / max(1.0, b0.x_valy),
        )
        worst = max(
            worst,
            abs(self.h1 / b0.x_peak - c0.merton_c_ratio) / c0.merton_c_ratio,
            abs(self.h2 / b0.x_gloom - c0.merton_c_ratio) / c0.merton_c_ratio,
        )
        return CheckResult("merton_degeneration", worst <= 1e-8, worst, 1e-8)


def run_all(
    params: ModelParams,
    h1: float = 1.0,
    h2: float = 0.5,
    constants: DerivedConstants | None = None,
    seed: int = 7,
) -> list[CheckResult]:
    """Run the full invariant suite; see :class:`VerifySuite`."""
    return VerifySuite(params, h1, h2, constants=constants, seed=seed).checks()
