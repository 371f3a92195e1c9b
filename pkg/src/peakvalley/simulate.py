"""Exact simulation of the optimal state processes and Monte Carlo statistics.

The dual state ``Y_t = y exp((delta - r - kappa^2/2) t - kappa W_t)`` is a
geometric Brownian motion with a closed transition law, so it is sampled
exactly on the time grid (no Euler bias).  The reference processes are
running-extremum functionals of ``Y``::

    H1_t = h1 v (min_{s<=t} Y_s / z_alpha)^(-1/gamma)
    H2_t = h2 ^ (max_{s<=t} Y_s / z_beta)^(-1/gamma)

Wealth and controls are reconstructed through the closed forms; an
Euler-Maruyama integration of the wealth SDE with the same Brownian
increments serves as a cross-check only.

Extrema are taken over grid samples, so occupation and hitting estimates
carry O(sqrt(dt)) discretisation bias; both estimators therefore run a
refinement ladder on common random numbers and report a
sqrt(dt)-extrapolated value alongside the raw levels.

Randomness comes from counter-based Philox streams keyed by
``(seed, purpose, block)`` where paths are grouped in fixed-size blocks:
results are bit-identical for a given config regardless of batching, and
growing ``n_paths`` leaves earlier paths unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DomainError
from .primal import PrimalSolution

__all__ = [
    "SimConfig",
    "PathRecord",
    "BudgetCheck",
    "OccupationStats",
    "HittingStats",
    "LongRunStats",
    "UtilityMoments",
    "Simulator",
]

_BLOCK = 4096
#: cap on n_paths * (n_steps + 1) for full-record simulation
_MAX_RECORD_ELEMENTS = 8_000_000
#: time-slab width for the streaming estimators
_CHUNK = 256

# stream purposes, part of the Philox key
_P_RECORD, _P_BUDGET, _P_OCCUPATION, _P_HITTING, _P_MOMENTS = range(5)


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    ``horizon`` is rounded to a whole number of ``dt`` steps.  With
    ``antithetic`` set, ``n_paths`` must be even and path ``i + n/2`` mirrors
    the increments of path ``i``.
    """

    horizon: float
    dt: float
    n_paths: int
    seed: int = 0
    antithetic: bool = False

    def __post_init__(self) -> None:
        if not (self.dt > 0.0 and self.horizon > 0.0):
            raise ConfigError("dt and horizon must be positive")
        if self.dt > self.horizon:
            raise ConfigError("dt must not exceed horizon")
        if self.n_paths < 1:
            raise ConfigError("n_paths must be at least 1")
        if self.antithetic and self.n_paths % 2:
            raise ConfigError("antithetic sampling needs an even n_paths")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.horizon / self.dt)))


class _PathStreams:
    """Per-block Philox streams; draw order is fixed by (seed, purpose, block)."""

    def __init__(self, seed: int, purpose: int, n_paths: int, antithetic: bool):
        self.antithetic = antithetic
        self.n_paths = n_paths
        self._n_draw = n_paths // 2 if antithetic else n_paths
        n_blocks = (self._n_draw + _BLOCK - 1) // _BLOCK
        self._gens = [
            np.random.Generator(
                np.random.Philox(np.random.SeedSequence((int(seed), purpose, b)))
            )
            for b in range(n_blocks)
        ]

    def normals(self, n_cols: int) -> np.ndarray:
        """(n_paths, n_cols) standard normals, mirrored pairs when antithetic."""
        z = np.empty((self._n_draw, n_cols))
        for b, gen in enumerate(self._gens):
            lo = b * _BLOCK
            hi = min(lo + _BLOCK, self._n_draw)
            z[lo:hi] = gen.standard_normal((hi - lo, n_cols))
        if self.antithetic:
            return np.vstack([z, -z])
        return z


@dataclass
class PathRecord:
    """Simulated trajectory batch; wealth/control fields are filled by reconstruction."""

    times: np.ndarray
    Y: np.ndarray
    H1: np.ndarray
    H2: np.ndarray
    increments: np.ndarray
    y0: float
    h1_init: float
    h2_init: float
    X: np.ndarray | None = None
    c: np.ndarray | None = None
    pi: np.ndarray | None = None
    disc_utility: np.ndarray | None = None
    adj_cost_up: np.ndarray | None = None
    adj_cost_down: np.ndarray | None = None
    euler_max_rel_dev: float | None = None
    euler_clipped: int = 0


@dataclass(frozen=True)
class BudgetCheck:
    """Monte Carlo check of the budget identity E[int c xi dt] = x."""

    estimate: float
    std_error: float
    tail_bound: float
    y_star: float
    x: float
    horizon: float
    n_paths: int

    @property
    def within(self) -> float:
        """Distance from x in standard errors."""
        return abs(self.estimate - self.x) / self.std_error if self.std_error else math.inf


@dataclass(frozen=True)
class OccupationStats:
    peak_fraction: float
    peak_se: float
    peak_closed_form: float
    valley_fraction: float
    valley_se: float
    valley_closed_form: float
    #: (dt, peak estimate, valley estimate) per refinement level, coarse to fine
    levels: tuple[tuple[float, float, float], ...]


@dataclass(frozen=True)
class HittingStats:
    boundary: str
    #: 'expectation' when the mean-hitting-time formula applies, else 'probability'
    regime: str
    estimate: float
    std_error: float
    closed_form: float
    n_censored: int
    note: str = ""


@dataclass(frozen=True)
class LongRunStats:
    y_star: float
    occupation: OccupationStats
    gloom: HittingStats
    lavish: HittingStats


@dataclass(frozen=True)
class UtilityMoments:
    """Time series of cumulative discounted utility moments, this model vs Merton.

    Both models are driven by common random numbers; ``mean_diff`` and
    ``var_diff`` are (this model - Merton) with paired standard errors.
    """

    times: np.ndarray
    mean: np.ndarray
    mean_se: np.ndarray
    var: np.ndarray
    var_se: np.ndarray
    merton_mean: np.ndarray
    merton_mean_se: np.ndarray
    merton_var: np.ndarray
    merton_var_se: np.ndarray
    mean_diff: np.ndarray
    mean_diff_se: np.ndarray
    var_diff: np.ndarray
    var_diff_se: np.ndarray
    n_paths: int


def _chunk_log_paths(carry: np.ndarray, drift: float, scale: float, z: np.ndarray):
    """Cumulative log-path over one time slab; returns (paths, new carry)."""
    steps = drift + scale * z
    out = np.cumsum(steps, axis=1)
    out += carry[:, None]
    return out, out[:, -1].copy()


def _running_extreme(carry: np.ndarray, values: np.ndarray, fn) -> np.ndarray:
    """Running min/max along axis 1 continuing from ``carry`` (updated in place)."""
    ext = fn.accumulate(np.concatenate([carry[:, None], values], axis=1), axis=1)[:, 1:]
    carry[:] = ext[:, -1]
    return ext


class Simulator:
    """Monte Carlo engine bound to one solved model and one configuration."""

    def __init__(self, solution: PrimalSolution, config: SimConfig):
        self.solution = solution
        self.params = solution.params
        self.constants = solution.constants
        self.config = config
        #: drift of log Y per unit time
        self.nu = self.params.delta - self.params.r - 0.5 * self.constants.kappa**2

    # ------------------------------------------------------------------
    # helpers

    def _ref_caps(self, run_min: np.ndarray, run_max: np.ndarray, h1: float, h2: float):
        """(H1, H2) from running extrema of Y."""
        c, g = self.constants, self.params.gamma
        if c.z_alpha > 0.0:
            H1 = np.maximum(h1, (run_min / c.z_alpha) ** (-1.0 / g))
        else:
            H1 = np.full(np.shape(run_min), h1)
        H2 = np.minimum(h2, (run_max / c.z_beta) ** (-1.0 / g))
        return H1, H2

    def _utility(self, cons) -> np.ndarray:
        g = self.params.gamma
        return cons ** (1.0 - g) / (1.0 - g)

    def _pair_stats(self, samples: np.ndarray) -> tuple[float, float]:
        """Mean and standard error, collapsing antithetic pairs first."""
        if self.config.antithetic:
            half = self.config.n_paths // 2
            samples = 0.5 * (samples[:half] + samples[half:])
        est = float(np.mean(samples))
        se = float(np.std(samples, ddof=1) / math.sqrt(len(samples))) if len(samples) > 1 else 0.0
        return est, se

    # ------------------------------------------------------------------
    # path-level simulation

    def simulate_dual(
        self,
        y0: float,
        h1: float,
        h2: float,
        increments: np.ndarray | None = None,
    ) -> PathRecord:
        """Exact dual paths (Y, H1, H2) on the configured grid.

        ``increments`` may supply the standard-normal draws (shape
        ``(n_paths, n_steps)``) for deterministic tests or common random
        numbers; the sign convention is dW = sqrt(dt) * Z with Y driven by
        -kappa dW.
        """
        self.solution.dual._check_refs(h1, h2)
        if y0 <= 0.0:
            raise DomainError("y0 must be positive")
        cfg = self.config
        n_steps = cfg.n_steps
        if cfg.n_paths * (n_steps + 1) > _MAX_RECORD_ELEMENTS:
            raise ConfigError(
                "full-record simulation exceeds the memory budget; use the "
                "streaming estimators (budget_check, long_run_stats, "
                "utility_moments) or reduce n_paths * horizon / dt"
            )
        if increments is None:
            increments = _PathStreams(
                cfg.seed, _P_RECORD, cfg.n_paths, cfg.antithetic
            ).normals(n_steps)
        else:
            increments = np.asarray(increments, dtype=float)
            if increments.shape != (cfg.n_paths, n_steps):
                raise ConfigError(f"increments must have shape {(cfg.n_paths, n_steps)}")
        kappa = self.constants.kappa
        dt = cfg.dt
        log_y = np.empty((cfg.n_paths, n_steps + 1))
        log_y[:, 0] = math.log(y0)
        np.cumsum(self.nu * dt - kappa * math.sqrt(dt) * increments, axis=1,
                  out=log_y[:, 1:])
        log_y[:, 1:] += math.log(y0)
        Y = np.exp(log_y)
        run_min = np.minimum.accumulate(Y, axis=1)
        run_max = np.maximum.accumulate(Y, axis=1)
        H1, H2 = self._ref_caps(run_min, run_max, h1, h2)
        return PathRecord(
            times=np.arange(n_steps + 1) * dt,
            Y=Y,
            H1=H1,
            H2=H2,
            increments=increments,
            y0=float(y0),
            h1_init=float(h1),
            h2_init=float(h2),
        )

    def reconstruct_wealth(self, record: PathRecord) -> PathRecord:
        """Fill wealth, controls, utility bookkeeping, and the Euler cross-check.

        The primary wealth path is X = -v_y(Y, H1, H2); the Euler integration
        of the wealth SDE with the same increments is reported as a maximum
        relative deviation, never raised.  Euler wealth dipping below zero is
        clipped and counted.
        """
        p = self.params
        Y, H1, H2 = record.Y, record.H1, record.H2
        _, v_y, v_yy = self.solution.dual._eval(Y, H1, H2)
        X = -v_y
        cons = np.clip(Y ** (-1.0 / p.gamma), H2, H1)
        pi = (p.mu - p.r) / p.sigma**2 * Y * v_yy

        dt = self.config.dt
        disc = np.exp(-p.delta * record.times)
        integrand = disc[None, :] * self._utility(cons)
        disc_utility = np.zeros_like(Y)
        np.cumsum(0.5 * (integrand[:, 1:] + integrand[:, :-1]) * dt, axis=1,
                  out=disc_utility[:, 1:])

        v_h1 = self._utility(H1)
        v_h2 = self._utility(H2)
        adj_up = np.zeros_like(Y)
        adj_dn = np.zeros_like(Y)
        # initial jumps are charged at t = 0, later increments at their grid time
        adj_up[:, 0] = p.alpha * (v_h1[:, 0] - self._utility(np.float64(record.h1_init)))
        adj_dn[:, 0] = p.beta * (self._utility(np.float64(record.h2_init)) - v_h2[:, 0])
        np.cumsum(p.alpha * disc[None, 1:] * (v_h1[:, 1:] - v_h1[:, :-1]), axis=1,
                  out=adj_up[:, 1:])
        adj_up[:, 1:] += adj_up[:, [0]]
        np.cumsum(p.beta * disc[None, 1:] * (v_h2[:, :-1] - v_h2[:, 1:]), axis=1,
                  out=adj_dn[:, 1:])
        adj_dn[:, 1:] += adj_dn[:, [0]]

        # Euler-Maruyama cross-check on the wealth SDE, same increments
        sqdt = math.sqrt(dt)
        x_hat = X[:, 0].copy()
        max_dev = 0.0
        clipped = 0
        for k in range(self.config.n_steps):
            drift = p.r * x_hat + (p.mu - p.r) * pi[:, k] - cons[:, k]
            x_hat = x_hat + drift * dt + p.sigma * pi[:, k] * sqdt * record.increments[:, k]
            if np.any(x_hat < 0.0):
                clipped += int(np.count_nonzero(x_hat < -1e-9))
                np.maximum(x_hat, 0.0, out=x_hat)
            dev = np.max(np.abs(x_hat - X[:, k + 1]) / np.maximum(1.0, X[:, k + 1]))
            max_dev = max(max_dev, float(dev))

        return replace(
            record,
            X=X,
            c=cons,
            pi=pi,
            disc_utility=disc_utility,
            adj_cost_up=adj_up,
            adj_cost_down=adj_dn,
            euler_max_rel_dev=max_dev,
            euler_clipped=clipped,
        )

    # ------------------------------------------------------------------
    # budget constraint

    def budget_check(self, x: float, h1: float, h2: float) -> BudgetCheck:
        """Monte Carlo estimate of E[int_0^inf c xi dt] started at y* = f(x, h1, h2).

        Truncated at the configured horizon with the analytic tail bound
        mean(H1_T) e^{-rT} / r reported alongside (consumption never exceeds
        the running peak).  Raises ConfigError when even the initial peak
        makes that bound exceed 0.1% of x.
        """
        p, cfg = self.params, self.config
        if x <= 0.0:
            raise DomainError("budget check needs x > 0")
        T = cfg.n_steps * cfg.dt
        if h1 * math.exp(-p.r * T) / p.r >= 1e-3 * x:
            raise ConfigError(
                "horizon too short: the tail bound h1 e^{-rT}/r already "
                "exceeds 0.1% of x"
            )
        y_star = self.solution.invert(x, h1, h2)
        g = p.gamma
        kappa, dt = self.constants.kappa, cfg.dt
        streams = _PathStreams(cfg.seed, _P_BUDGET, cfg.n_paths, cfg.antithetic)

        n = cfg.n_paths
        carry_ly = np.full(n, math.log(y_star))
        run_min = np.full(n, y_star)
        run_max = np.full(n, y_star)
        acc = np.zeros(n)
        # trapezoid carry: integrand at the slab's left edge
        H1_0, H2_0 = self._ref_caps(run_min, run_max, h1, h2)
        c_0 = np.clip(y_star ** (-1.0 / g), H2_0, H1_0)
        f_carry = c_0 * np.exp(-p.delta * 0.0) * y_star / y_star

        k = 0
        while k < cfg.n_steps:
            m = min(_CHUNK, cfg.n_steps - k)
            z = streams.normals(m)
            ly, carry_ly = _chunk_log_paths(carry_ly, self.nu * dt, -kappa * math.sqrt(dt), z)
            Y = np.exp(ly)
            rmin = _running_extreme(run_min, Y, np.minimum)
            rmax = _running_extreme(run_max, Y, np.maximum)
            H1, H2 = self._ref_caps(rmin, rmax, h1, h2)
            cons = np.clip(np.exp(-ly / g), H2, H1)
            t_cols = (np.arange(k + 1, k + m + 1) * dt)[None, :]
            F = cons * np.exp(-p.delta * t_cols) * Y / y_star
            acc += dt * (0.5 * f_carry + F[:, :-1].sum(axis=1) + 0.5 * F[:, -1])
            f_carry = F[:, -1].copy()
            k += m

        H1_T, _ = self._ref_caps(run_min, run_max, h1, h2)
        tail_bound = float(np.mean(H1_T)) * math.exp(-p.r * T) / p.r
        est, se = self._pair_stats(acc)
        return BudgetCheck(
            estimate=est,
            std_error=se,
            tail_bound=tail_bound,
            y_star=y_star,
            x=float(x),
            horizon=T,
            n_paths=cfg.n_paths,
        )

    # ------------------------------------------------------------------
    # long-run statistics

    def long_run_stats(
        self,
        x: float,
        h1: float,
        h2: float,
        burn_fraction: float = 0.5,
        refinements: int = 2,
    ) -> LongRunStats:
        """Occupation fractions and boundary hitting statistics vs closed forms.

        The start state must lie weakly inside the no-adjustment band
        (f(x, h1, h2) between the two outer dual thresholds).  Occupation is
        measured after ``burn_fraction`` of the horizon on a dt ladder with
        ``refinements`` halvings; hitting times are first grid crossings of
        the fixed outer thresholds on a dt and dt/4 ladder.  Both are
        sqrt(dt)-extrapolated across their two finest levels using common
        random numbers.
        """
        if not 0.0 <= burn_fraction < 1.0:
            raise ConfigError("burn_fraction must be in [0, 1)")
        if refinements < 0:
            raise ConfigError("refinements must be nonnegative")
        y_star = self.solution.invert(x, h1, h2)
        t0, t1, t2, t3 = (float(t) for t in self.solution.dual.thresholds(h1, h2))
        if not (t0 <= y_star <= t3):
            raise DomainError("long-run statistics start outside the no-adjustment band")
        occupation = self._occupation(y_star, h1, h2, burn_fraction, refinements)
        gloom = self._hitting(y_star, boundary="gloom", up_level=t3)
        lavish = self._hitting(y_star, boundary="lavish", down_level=t0)
        return LongRunStats(y_star=y_star, occupation=occupation, gloom=gloom, lavish=lavish)

    def _occupation(
        self, y0: float, h1: float, h2: float, burn_fraction: float, refinements: int
    ) -> OccupationStats:
        p, c, cfg = self.params, self.constants, self.config
        g = p.gamma
        n_levels = refinements + 1
        stride = 2**refinements
        dt_f = cfg.dt / stride
        n_fine = cfg.n_steps * stride
        kappa = c.kappa
        burn_steps = int(math.floor(burn_fraction * n_fine))

        streams = _PathStreams(cfg.seed, _P_OCCUPATION, cfg.n_paths, cfg.antithetic)
        n = cfg.n_paths
        carry_ly = np.full(n, math.log(y0))
        t1_cap = h1**-g  # region edges while the references are untouched
        t2_cap = h2**-g
        run_min = [np.full(n, y0) for _ in range(n_levels)]
        run_max = [np.full(n, y0) for _ in range(n_levels)]
        peak_n = [np.zeros(n) for _ in range(n_levels)]
        valley_n = [np.zeros(n) for _ in range(n_levels)]
        count = [0] * n_levels

        k = 0
        while k < n_fine:
            m = min(_CHUNK * stride, n_fine - k)
            z = streams.normals(m)
            ly, carry_ly = _chunk_log_paths(
                carry_ly, self.nu * dt_f, -kappa * math.sqrt(dt_f), z
            )
            Y = np.exp(ly)
            steps = np.arange(k + 1, k + m + 1)
            for lev in range(n_levels):
                stride_l = 2 ** (n_levels - 1 - lev)
                cols = np.nonzero(steps % stride_l == 0)[0]
                if cols.size == 0:
                    continue
                Ys = Y[:, cols]
                rmin = _running_extreme(run_min[lev], Ys, np.minimum)
                rmax = _running_extreme(run_max[lev], Ys, np.maximum)
                post = steps[cols] > burn_steps
                if np.any(post):
                    Yp = Ys[:, post]
                    if c.z_alpha > 0.0:
                        peak_edge = np.minimum(t1_cap, rmin[:, post] / c.z_alpha)
                    else:
                        peak_edge = t1_cap
                    valley_edge = np.maximum(t2_cap, rmax[:, post] / c.z_beta)
                    peak_n[lev] += (Yp < peak_edge).sum(axis=1)
                    valley_n[lev] += (Yp > valley_edge).sum(axis=1)
                    count[lev] += int(np.count_nonzero(post))
            k += m

        if min(count) == 0:
            raise ConfigError("no post-burn samples; shorten the burn or extend the horizon")
        peak_frac = [peak_n[lev] / count[lev] for lev in range(n_levels)]
        valley_frac = [valley_n[lev] / count[lev] for lev in range(n_levels)]

        def summarize(fracs: list[np.ndarray]) -> tuple[float, float, list[float]]:
            level_means = [float(np.mean(f)) for f in fracs]
            if n_levels >= 2:
                # one sqrt(dt) Richardson step on the two finest levels
                fine, mid = fracs[-1], fracs[-2]
                extr = fine - (mid - fine) / (math.sqrt(2.0) - 1.0)
            else:
                extr = fracs[-1]
            est, se = self._pair_stats(extr)
            return est, se, level_means

        peak_est, peak_se, peak_levels = summarize(peak_frac)
        valley_est, valley_se, valley_levels = summarize(valley_frac)
        expo = c.m1 + c.m2  # = 1 + 2(r - delta)/kappa^2
        if c.z_alpha > 0.0:
            peak_cf = max(0.0, 1.0 - c.z_alpha**expo)
        else:
            peak_cf = 1.0 if expo > 0 else 0.0
        valley_cf = max(0.0, 1.0 - c.z_beta**expo)
        levels = tuple(
            (cfg.dt / 2**lev, peak_levels[lev], valley_levels[lev])
            for lev in range(n_levels)
        )
        return OccupationStats(
            peak_fraction=peak_est,
            peak_se=peak_se,
            peak_closed_form=peak_cf,
            valley_fraction=valley_est,
            valley_se=valley_se,
            valley_closed_form=valley_cf,
            levels=levels,
        )

    def _hitting(
        self,
        y0: float,
        boundary: str,
        up_level: float | None = None,
        down_level: float | None = None,
    ) -> HittingStats:
        """First grid crossing of one fixed dual threshold, dt-extrapolated.

        Reaching the gloom boundary means Y rising to z_beta h2^-gamma (a new
        global maximum); reaching the lavish boundary means falling to
        z_alpha h1^-gamma.  Crossings are detected on a dt and a dt/4 grid of
        the same paths and Richardson-extrapolated in sqrt(dt).
        """
        c, cfg = self.constants, self.config
        nu = self.nu
        expo = c.m1 + c.m2
        if up_level is not None:
            b = math.log(up_level / y0)
            crossed_up = True
            if nu > 0:
                regime, closed = "expectation", b / nu
            elif nu == 0.0:
                regime, closed = "probability", 1.0
            else:
                regime, closed = "probability", math.exp(expo * math.log(y0 / up_level))
        else:
            if down_level is None or down_level <= 0.0:
                return HittingStats(
                    boundary=boundary,
                    regime="probability",
                    estimate=0.0,
                    std_error=0.0,
                    closed_form=0.0,
                    n_censored=cfg.n_paths,
                    note="threshold degenerate (z_alpha = 0): never reached",
                )
            b = math.log(down_level / y0)  # <= 0
            crossed_up = False
            if nu < 0:
                regime, closed = "expectation", b / nu
            elif nu == 0.0:
                regime, closed = "probability", 1.0
            else:
                regime, closed = "probability", math.exp(expo * math.log(y0 / down_level))
        note = ""
        if regime == "probability" and nu == 0.0:
            note = "driftless: hits almost surely but the mean time is infinite"

        if b == 0.0:
            est = closed if regime == "probability" else 0.0
            return HittingStats(boundary, regime, est, 0.0, closed, 0, note)

        stride = 4
        dt_f = cfg.dt / stride
        n_fine = cfg.n_steps * stride
        kappa = c.kappa
        streams = _PathStreams(cfg.seed, _P_HITTING, cfg.n_paths, cfg.antithetic)
        n = cfg.n_paths
        carry = np.zeros(n)  # log(Y / y0)
        tau = [np.full(n, np.inf), np.full(n, np.inf)]  # coarse, fine

        k = 0
        while k < n_fine:
            m = min(_CHUNK * stride, n_fine - k)
            z = streams.normals(m)
            lrel, carry = _chunk_log_paths(carry, nu * dt_f, -kappa * math.sqrt(dt_f), z)
            steps = np.arange(k + 1, k + m + 1)
            for lev, stride_l in enumerate((stride, 1)):
                cols = np.nonzero(steps % stride_l == 0)[0]
                if cols.size == 0:
                    continue
                sub = lrel[:, cols]
                crossed = sub >= b if crossed_up else sub <= b
                hit_any = crossed.any(axis=1)
                fresh = hit_any & np.isinf(tau[lev])
                if np.any(fresh):
                    first = np.argmax(crossed[fresh], axis=1)
                    tau[lev][fresh] = steps[cols][first] * dt_f
            k += m

        censored = int(np.count_nonzero(np.isinf(tau[1])))
        T = cfg.n_steps * cfg.dt
        if regime == "expectation":
            samp_c = np.where(np.isinf(tau[0]), T, tau[0])
            samp_f = np.where(np.isinf(tau[1]), T, tau[1])
        else:
            samp_c = np.isfinite(tau[0]).astype(float)
            samp_f = np.isfinite(tau[1]).astype(float)
        # bias ~ sqrt(dt): extrapolate the dt and dt/4 levels per path
        samples = 2.0 * samp_f - samp_c
        est, se = self._pair_stats(samples)
        return HittingStats(
            boundary=boundary,
            regime=regime,
            estimate=est,
            std_error=se,
            closed_form=closed,
            n_censored=censored,
            note=note,
        )

    # ------------------------------------------------------------------
    # cumulative utility moments vs the Merton baseline

    def utility_moments(
        self, x: float, h1: float, h2: float, n_report: int = 101
    ) -> UtilityMoments:
        """Mean and variance of int_0^t e^{-delta s} U(c_s) ds on a report grid.

        The Merton baseline consumes and invests at the constant frictionless
        ratios from the same initial wealth, driven by the same Brownian
        increments.
        """
        p, c, cfg = self.params, self.constants, self.config
        if x <= 0.0:
            raise DomainError("utility moments need x > 0")
        g = p.gamma
        y_star = self.solution.invert(x, h1, h2)
        c_m, pi_m = c.merton_c_ratio, c.merton_pi_ratio
        sig_m = p.sigma * pi_m
        drift_m = p.r + (p.mu - p.r) * pi_m - c_m - 0.5 * sig_m**2

        n_steps = cfg.n_steps
        every = max(1, n_steps // max(1, n_report - 1))
        report_idx = np.arange(every, n_steps + 1, every)
        times = report_idx * cfg.dt

        streams = _PathStreams(cfg.seed, _P_MOMENTS, cfg.n_paths, cfg.antithetic)
        kappa, dt = c.kappa, cfg.dt
        n = cfg.n_paths

        carry_ly = np.full(n, math.log(y_star))
        carry_lxm = np.full(n, math.log(x))
        run_min = np.full(n, y_star)
        run_max = np.full(n, y_star)
        acc = np.zeros(n)
        acc_m = np.zeros(n)
        H1_0, H2_0 = self._ref_caps(run_min, run_max, h1, h2)
        f_carry = self._utility(np.clip(y_star ** (-1.0 / g), H2_0, H1_0))
        fm_carry = self._utility(c_m * np.full(n, x))
        out = np.empty((n, len(report_idx)))
        out_m = np.empty((n, len(report_idx)))
        next_report = 0

        k = 0
        while k < n_steps:
            m = min(_CHUNK, n_steps - k)
            z = streams.normals(m)
            ly, carry_ly = _chunk_log_paths(carry_ly, self.nu * dt, -kappa * math.sqrt(dt), z)
            lxm, carry_lxm = _chunk_log_paths(carry_lxm, drift_m * dt, sig_m * math.sqrt(dt), z)
            Y = np.exp(ly)
            rmin = _running_extreme(run_min, Y, np.minimum)
            rmax = _running_extreme(run_max, Y, np.maximum)
            H1, H2 = self._ref_caps(rmin, rmax, h1, h2)
            t_cols = (np.arange(k + 1, k + m + 1) * dt)[None, :]
            disc = np.exp(-p.delta * t_cols)
            F = disc * self._utility(np.clip(np.exp(-ly / g), H2, H1))
            Fm = disc * self._utility(c_m * np.exp(lxm))
            # prefix trapezoid within the slab
            left = np.concatenate([f_carry[:, None], F[:, :-1]], axis=1)
            left_m = np.concatenate([fm_carry[:, None], Fm[:, :-1]], axis=1)
            pre = acc[:, None] + dt * np.cumsum(0.5 * (left + F), axis=1)
            pre_m = acc_m[:, None] + dt * np.cumsum(0.5 * (left_m + Fm), axis=1)
            acc = pre[:, -1].copy()
            acc_m = pre_m[:, -1].copy()
            f_carry = F[:, -1].copy()
            fm_carry = Fm[:, -1].copy()
            while next_report < len(report_idx) and report_idx[next_report] <= k + m:
                col = report_idx[next_report] - k - 1
                out[:, next_report] = pre[:, col]
                out_m[:, next_report] = pre_m[:, col]
                next_report += 1
            k += m

        def stats(a: np.ndarray):
            n_s = a.shape[0]
            mean = a.mean(axis=0)
            mean_se = a.std(axis=0, ddof=1) / math.sqrt(n_s)
            dev = a - mean
            var = (dev**2).sum(axis=0) / (n_s - 1)
            m4 = (dev**4).mean(axis=0)
            var_se = np.sqrt(np.maximum(m4 - var**2, 0.0) / n_s)
            return mean, mean_se, var, var_se, dev

        mean, mean_se, var, var_se, dev = stats(out)
        mmean, mmean_se, mvar, mvar_se, mdev = stats(out_m)
        n_s = out.shape[0]
        d = out - out_m
        vd = dev**2 - mdev**2
        return UtilityMoments(
            times=times,
            mean=mean,
            mean_se=mean_se,
            var=var,
            var_se=var_se,
            merton_mean=mmean,
            merton_mean_se=mmean_se,
            merton_var=mvar,
            merton_var_se=mvar_se,
            mean_diff=d.mean(axis=0),
            mean_diff_se=d.std(axis=0, ddof=1) / math.sqrt(n_s),
            var_diff=var - mvar,
            var_diff_se=vd.std(axis=0, ddof=1) / math.sqrt(n_s),
            n_paths=n_s,
        )
