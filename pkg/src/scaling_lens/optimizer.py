"""Compute-optimal allocation of concepts vs texts under a FLOP budget.

A budget C buys N*D = C/6 parameter-token products; with N = varsigma*R
and D = tau*T that leaves R*T <= C' = C/(6*varsigma*tau) graph cells.
Since extra texts never hurt peeling, the constraint binds: T = C'/R,
and the problem is one-dimensional in R.

The objective is the expected number of concepts learned,
R * (1 - P_b/epsilon), with P_b the post-peeling erasure rate.  Up to
the threshold the waterfall law nu* Q(sqrt(R/eps)(eps*-eps)/alpha)
supplies P_b, including its finite-size rounding near eps* = eps.
Strictly above threshold the law saturates at nu* while the true rate
keeps growing along the density-evolution fixed point, so there the
effective rate is the max of the law and the DE value at the operating
erasure.  The DE value also covers the two no-transition regimes: data
rich (DE -> 0, every concept learnable) and subcritical (DE stalls
high, the curve tail collapses).  Monte-Carlo runs back this choice;
the all-law objective overshoots the failure regime by an order of
magnitude.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .degree import DegreeModel
from .threshold import (
    ThresholdSolution,
    bit_erasure_rate,
    de_bit_erasure,
    find_threshold,
)

__all__ = [
    "BudgetSpec",
    "EmptyGrid",
    "InsufficientPoints",
    "IsoflopCurve",
    "OptimumPoint",
    "ScalingFit",
    "effective_bit_erasure",
    "expected_learned",
    "interior_maxima",
    "isoflop_curve",
    "optimize_budget",
    "scaling_exponents",
    "smooth3",
]

COARSE_POINTS_PER_DECADE = 64

# half-width assigned to the near-exhaustive small-budget path
EXHAUSTIVE_LIMIT = 4096

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class EmptyGrid(ValueError):
    """No feasible R values under the budget."""


class InsufficientPoints(ValueError):
    """Too few budgets for a slope fit."""


@dataclass(frozen=True)
class BudgetSpec:
    """FLOP budget plus the linear maps from graph size to (N, D)."""

    C: float
    varsigma: float = 1.0
    tau: float = 1.0
    d_t: float = 6.0
    epsilon: float = 0.5

    def __post_init__(self):
        if self.C <= 0 or self.varsigma <= 0 or self.tau <= 0:
            raise ValueError("C, varsigma, tau must all be positive")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.d_t <= 0:
            raise ValueError(f"d_t must be positive, got {self.d_t}")
        if self.C_prime <= 1.0:
            raise ValueError(
                f"C' = C/(6*varsigma*tau) = {self.C_prime:.3g} must exceed 1"
            )

    @property
    def C_prime(self) -> float:
        return self.C / (6.0 * self.varsigma * self.tau)


@dataclass(frozen=True)
class OptimumPoint:
    R_star: int
    T_star: int
    N_star: float
    D_star: float
    objective: float
    eps_star_at_opt: float


@dataclass(frozen=True)
class IsoflopCurve:
    spec: BudgetSpec
    R: np.ndarray
    T: np.ndarray
    objective: np.ndarray
    eps_star: np.ndarray


@dataclass(frozen=True)
class ScalingFit:
    a: float
    b: float
    r2: float


def _solve_threshold(model: DegreeModel, coarse: bool) -> ThresholdSolution:
    if coarse:
        return find_threshold(model, tol=1e-4, grid_points=512, refine_passes=1)
    return find_threshold(model)


def effective_bit_erasure(model: DegreeModel, sol: ThresholdSolution) -> float:
    """Post-peeling erasure rate at the model's operating epsilon.

    The waterfall law alone below/at threshold; joined with the DE
    fixed-point rate strictly above threshold and in the no-transition
    regimes, where the frozen-at-threshold law cannot follow the truth.
    """
    law = bit_erasure_rate(model, sol)
    if not sol.no_transition and model.epsilon <= sol.eps_star:
        return law
    return max(law, de_bit_erasure(model, model.epsilon))


def _evaluate(R: int, spec: BudgetSpec, coarse: bool) -> tuple[float, float, int]:
    """Objective, threshold, and T at one grid point (T = floor(C'/R))."""
    T = int(spec.C_prime // R)
    model = DegreeModel(R=R, T=T, d_t=spec.d_t, epsilon=spec.epsilon)
    sol = _solve_threshold(model, coarse)
    p_b = effective_bit_erasure(model, sol)
    frac = min(1.0, p_b / spec.epsilon)
    value = min(float(R), max(0.0, R * (1.0 - frac)))
    return value, sol.eps_star, T


def expected_learned(R: int, T: int, spec: BudgetSpec) -> float:
    """Expected concepts learned for an explicit (R, T) pair."""
    if R < 1 or T < 1:
        raise ValueError("R and T must be at least 1")
    model = DegreeModel(R=int(R), T=int(T), d_t=spec.d_t, epsilon=spec.epsilon)
    sol = _solve_threshold(model, coarse=False)
    p_b = effective_bit_erasure(model, sol)
    frac = min(1.0, p_b / spec.epsilon)
    return min(float(R), max(0.0, R * (1.0 - frac)))


def _r_bounds(spec: BudgetSpec) -> tuple[int, int]:
    r_lo = int(math.floor(spec.d_t)) + 1
    r_hi = int(spec.C_prime)
    return r_lo, r_hi


def _geometric_ints(r_lo: int, r_hi: int, points_per_decade: int) -> np.ndarray:
    decades = math.log10(r_hi / r_lo) if r_hi > r_lo else 0.0
    n = max(2, int(round(points_per_decade * decades)) + 1)
    grid = np.unique(np.rint(np.geomspace(r_lo, r_hi, n)).astype(np.int64))
    return grid[(grid >= r_lo) & (grid <= r_hi)]


def isoflop_curve(
    spec: BudgetSpec,
    R_grid: np.ndarray | None = None,
    points_per_decade: int = COARSE_POINTS_PER_DECADE,
) -> IsoflopCurve:
    """Objective and threshold along a geometric R grid, T = floor(C'/R)."""
    r_lo, r_hi = _r_bounds(spec)
    if R_grid is None:
        if r_hi < r_lo:
            raise EmptyGrid(
                f"no feasible R: need R in [{r_lo}, C'={spec.C_prime:.3g}]"
            )
        grid = _geometric_ints(r_lo, r_hi, points_per_decade)
    else:
        grid = np.unique(np.asarray(R_grid, dtype=np.int64))
        grid = grid[(grid >= r_lo) & (grid <= r_hi)]
    if grid.size == 0:
        raise EmptyGrid("R grid is empty after clipping to [R_min, C']")

    values = np.empty(grid.size)
    stars = np.empty(grid.size)
    texts = np.empty(grid.size, dtype=np.int64)
    for i, r in enumerate(grid):
        values[i], stars[i], texts[i] = _evaluate(int(r), spec, coarse=True)
    return IsoflopCurve(spec=spec, R=grid, T=texts, objective=values, eps_star=stars)


def smooth3(values: np.ndarray) -> np.ndarray:
    """3-point median filter with endpoints passed through."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 3:
        return v.copy()
    out = v.copy()
    stacked = np.stack([v[:-2], v[1:-1], v[2:]])
    out[1:-1] = np.median(stacked, axis=0)
    return out


def interior_maxima(values: np.ndarray, tol: float = 0.0) -> int:
    """Count interior local maxima, collapsing flat plateaus to one.

    A maximum registers only when the curve first rises more than tol
    above a preceding low and then falls more than tol below the high
    (turning-point detection with hysteresis).  Evaluating the
    objective at integer T = floor(C'/R) leaves a sawtooth of relative
    size ~1/C' in the deep tail; a tol of about 1e-6 of the peak
    removes it without masking any macroscopic structure.  tol = 0
    counts every strict reversal.
    """
    v = np.asarray(values, dtype=np.float64)
    count = 0
    direction = 0
    hi = lo = v[0]
    for x in v[1:]:
        if direction == 1:
            if x > hi:
                hi = x
            elif x < hi - tol:
                count += 1
                direction = -1
                lo = x
        elif direction == -1:
            if x < lo:
                lo = x
            elif x > lo + tol:
                direction = 1
                hi = x
        else:
            hi = max(hi, x)
            lo = min(lo, x)
            if x < hi - tol:
                direction = -1
                lo = x
            elif x > lo + tol:
                direction = 1
                hi = x
    return count


def optimize_budget(spec: BudgetSpec) -> OptimumPoint:
    """Maximize expected concepts learned subject to R*T <= C'.

    Coarse geometric scan at 64 points per decade, then golden-section
    refinement on log R around the best coarse point; evaluation always
    happens at integer (R, T).  Small budgets fall through to an
    exhaustive integer scan.
    """
    r_lo, r_hi = _r_bounds(spec)
    if r_hi < r_lo:
        raise EmptyGrid(
            f"no feasible R: need R in [{r_lo}, C'={spec.C_prime:.3g}]"
        )

    cache: dict[int, tuple[float, float, int]] = {}

    def full(r: int) -> tuple[float, float, int]:
        if r not in cache:
            cache[r] = _evaluate(r, spec, coarse=False)
        return cache[r]

    if r_hi - r_lo + 1 <= EXHAUSTIVE_LIMIT:
        best_r = max(range(r_lo, r_hi + 1), key=lambda r: full(r)[0])
    else:
        grid = _geometric_ints(r_lo, r_hi, COARSE_POINTS_PER_DECADE)
        coarse_vals = [
            _evaluate(int(r), spec, coarse=True)[0] for r in grid
        ]
        j = int(np.argmax(coarse_vals))
        lo = float(grid[max(0, j - 1)])
        hi = float(grid[min(grid.size - 1, j + 1)])
        a, b = math.log(lo), math.log(hi)

        def at(u: float) -> float:
            return full(max(r_lo, min(r_hi, int(round(math.exp(u))))))[0]

        c = b - GOLDEN * (b - a)
        d = a + GOLDEN * (b - a)
        fc, fd = at(c), at(d)
        for _ in range(80):
            if b - a < math.log1p(1.0 / max(lo, 1.0)):
                break
            if fc >= fd:
                b, d, fd = d, c, fc
                c = b - GOLDEN * (b - a)
                fc = at(c)
            else:
                a, c, fc = c, d, fd
                d = a + GOLDEN * (b - a)
                fd = at(d)
        center = int(round(math.exp(0.5 * (a + b))))
        candidates = {
            max(r_lo, min(r_hi, r))
            for r in (center - 2, center - 1, center, center + 1, center + 2,
                      int(grid[j]))
        }
        best_r = max(candidates, key=lambda r: full(r)[0])

    value, eps_star, t_star = full(best_r)
    return OptimumPoint(
        R_star=best_r,
        T_star=t_star,
        N_star=spec.varsigma * best_r,
        D_star=spec.tau * t_star,
        objective=value,
        eps_star_at_opt=eps_star,
    )


def scaling_exponents(
    specs: list[BudgetSpec],
    allocations: list[OptimumPoint] | None = None,
) -> ScalingFit:
    """Log-log slopes of the compute-optimal N* and D* against C."""
    if len(specs) < 5:
        raise InsufficientPoints(
            f"need at least 5 budgets for a slope fit, got {len(specs)}"
        )
    if allocations is None:
        opts = [optimize_budget(s) for s in specs]
    elif len(allocations) != len(specs):
        raise ValueError("allocations must match specs one-to-one")
    else:
        opts = allocations
    log_c = np.log10([s.C for s in specs])
    log_n = np.log10([o.N_star for o in opts])
    log_d = np.log10([o.D_star for o in opts])

    def fit(y: np.ndarray) -> tuple[float, float]:
        slope, intercept = np.polyfit(log_c, y, 1)
        resid = y - (slope * log_c + intercept)
        total = y - y.mean()
        ss_tot = float(np.dot(total, total))
        r2 = 1.0 - float(np.dot(resid, resid)) / ss_tot if ss_tot > 0 else 1.0
        return float(slope), r2

    a, r2_a = fit(log_n)
    b, r2_b = fit(log_d)
    return ScalingFit(a=a, b=b, r2=min(r2_a, r2_b))
