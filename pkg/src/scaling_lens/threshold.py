"""Erasure-decoding thresholds and finite-size scaling for peeling decoders.

Density evolution for the parent bipartite graph tracks the probability x
that an edge message is still unknown:

    x_next = f(x, eps) = eps * lam(1 - rho(1 - x))

Peeling succeeds at erasure fraction eps when iterating f from x = 1
escapes to the trivial branch; it stalls when f has a fixed point above
that branch.  The decoding threshold eps_star is the smallest eps for
which such a fixed point exists, located by bisection over a log-spaced
x grid.  At threshold the curve f - x is tangent at x_star, which feeds
the finite-size waterfall law

    P_b(eps) ~= nu_star * Q(sqrt(R/eps) * (eps_star - eps) / alpha)

with nu_star the stalled-bit fraction and alpha the scaling slope
assembled from the degree polynomials and their derivatives.

Binomial ensembles have concepts of degree 0 and 1, so f(0+, eps) > 0 and
a tiny "junk" fixed point exists at every eps (isolated concepts can never
be learned).  The solver excludes that trivial branch by iterating f from
x = 0 and restricting the fixed-point search to x above twice the limit;
for clean operating points the branch sits far below the 1e-9 grid floor
and the exclusion is inert.  The exclusion is capped at a few times the
seed mass eps*lam(0): once the orbit from 0 climbs past that scale the
junk branch has merged with a genuine fixed point, which must count.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .degree import DegreeModel, PolynomialPair

__all__ = [
    "ThresholdSolution",
    "DegenerateThreshold",
    "NonPositiveRadicand",
    "qfunc",
    "de_map",
    "de_fixed_point",
    "de_bit_erasure",
    "find_threshold",
    "matching_upper_bound",
    "scaling_alpha",
    "bit_erasure_rate",
    "prob_concept_unlearned",
]

logger = logging.getLogger(__name__)

X_GRID_LO = 1e-9
X_GRID_POINTS = 2048


class DegenerateThreshold(Exception):
    """A fixed point already exists at the lower end of the eps bracket."""


class NonPositiveRadicand(Exception):
    """The scaling-slope radicand is not positive at the given point."""


@dataclass(frozen=True)
class ThresholdSolution:
    """Decoding threshold and finite-size scaling constants for one model."""

    eps_star: float
    x_star: float
    nu_star: float
    alpha: float
    no_transition: bool = False
    tied_maximizer: bool = False


def qfunc(z: float) -> float:
    """Gaussian tail probability Q(z) = 0.5*erfc(z/sqrt(2))."""
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def de_map(model, x, eps):
    """One density-evolution update eps*lam(1 - rho(1 - x))."""
    x = np.asarray(x, dtype=np.float64)
    out = eps * model.lam(1.0 - model.rho(1.0 - x))
    return float(out) if np.ndim(out) == 0 else out


def _scalar_de(model, x: float, eps: float) -> float:
    return eps * model._scalar_lam(1.0 - model._scalar_rho(1.0 - x))


def _iterate(model, eps: float, x0: float, max_iter: int, stop_below: float = -1.0):
    """Iterate the DE map from x0 until it converges or drops below stop_below.

    The map is monotone in x so orbits are monotone; from above they bound
    the nearest fixed point from above at every step.
    """
    x = x0
    for _ in range(max_iter):
        x_next = _scalar_de(model, x, eps)
        if x_next <= stop_below:
            return x_next
        if abs(x_next - x) <= 1e-15 + 1e-12 * x_next:
            return x_next
        x = x_next
    return x


def _trivial_branch(model, eps: float, max_iter: int = 2000) -> float:
    """Smallest DE fixed point, reached by iterating upward from x = 0."""
    return _iterate(model, eps, 0.0, max_iter)


def de_fixed_point(model, eps: float, max_iter: int = 30000) -> float:
    """Stable DE fixed point reached from x = 1 (the decoder's end state).

    Converges to the trivial branch when decoding succeeds.  If the
    iteration cap is hit mid-transit (possible only within ~sqrt(tol) of
    a tangency) the current iterate is returned; orbits from above always
    bound the fixed point from above, so the result errs conservative.
    """
    x_lo = _trivial_branch(model, eps)
    exit_level = x_lo * (1.0 + 1e-9) + 1e-15
    x = _iterate(model, eps, 1.0, max_iter, stop_below=exit_level)
    return max(x, x_lo)


def de_bit_erasure(model, eps: float) -> float:
    """Asymptotic post-decoding bit erasure rate eps*L(1 - rho(1 - x_inf))."""
    x_inf = de_fixed_point(model, eps)
    return eps * model.L(1.0 - model.rho(1.0 - x_inf))


def _grid_max(model, eps: float, cut: float, base_grid, refine_passes: int):
    """Max of f(x, eps) - x over the grid restricted to (cut, 1].

    Returns (gmax, x_at_max, tied).  Refinement zooms geometrically around
    the maximizer; the tangency at threshold is quadratic, so the zoom is
    what recovers x_star beyond bare grid resolution.
    """
    xs = base_grid[base_grid > cut]
    if xs.size == 0:
        return -np.inf, math.nan, False
    gmax = -np.inf
    x_best = math.nan
    tied = False
    for _ in range(refine_passes + 1):
        g = de_map(model, xs, eps) - xs
        i = int(np.argmax(g))
        near = np.nonzero(g >= g[i] - 1e-9)[0]
        # tie rule: among maxima within 1e-9, keep the largest x
        j = int(near[-1])
        if j != i and xs[j] > xs[i] * (1.0 + 1e-6):
            tied = True
        if g[j] > gmax:
            gmax = float(g[j])
            x_best = float(xs[j])
        lo = xs[max(j - 2, 0)]
        hi = xs[min(j + 2, xs.size - 1)]
        if hi <= lo:
            break
        xs = np.geomspace(lo, hi, 65)
    return gmax, x_best, tied


def find_threshold(
    model,
    eps_lo: float = 0.0,
    eps_hi: float = 1.0,
    tol: float = 1e-7,
    grid_points: int = X_GRID_POINTS,
    refine_passes: int = 2,
) -> ThresholdSolution:
    """Locate the decoding threshold by bisection on eps.

    The inner predicate asks whether f(x, eps) - x >= 0 anywhere on a
    log-spaced x grid above the trivial branch.  Works for DegreeModel and
    for PolynomialPair (classical ensembles given by coefficient lists).

    Raises DegenerateThreshold if a fixed point already exists at eps_lo.
    If none exists even at eps_hi the returned solution carries
    eps_star = eps_hi with no_transition set; its law-based erasure rate
    is zero by convention.
    """
    if not 0.0 <= eps_lo < eps_hi <= 1.0:
        raise ValueError(f"need 0 <= eps_lo < eps_hi <= 1, got [{eps_lo}, {eps_hi}]")
    base_grid = np.geomspace(X_GRID_LO, 1.0, grid_points)

    def probe(eps):
        # the junk fixed point stays within a small factor of its seed
        # eps*lam(0) while genuinely separated; an orbit that climbs past
        # 4x the seed has merged with a real fixed point, so the cut must
        # not exclude it
        x_triv = _trivial_branch(model, eps)
        junk_cap = 4.0 * eps * model._scalar_lam(0.0) + X_GRID_LO
        cut = max(X_GRID_LO, min(2.0 * x_triv, junk_cap))
        return _grid_max(model, eps, cut, base_grid, refine_passes)

    g_lo, _, _ = probe(eps_lo)
    if g_lo >= 0.0:
        raise DegenerateThreshold(
            f"fixed point already present at eps_lo={eps_lo}; no transition to bracket"
        )
    g_hi, x_hi, tied_hi = probe(eps_hi)
    if g_hi < 0.0:
        logger.debug("no fixed point up to eps_hi=%g; returning sentinel", eps_hi)
        nu, al = _solution_constants(model, eps_hi, x_hi)
        return ThresholdSolution(eps_hi, x_hi, nu, al, no_transition=True, tied_maximizer=tied_hi)

    lo, hi = eps_lo, eps_hi
    bisect_tol = min(tol, 1e-9)
    while hi - lo > bisect_tol:
        mid = 0.5 * (lo + hi)
        g_mid, _, _ = probe(mid)
        if g_mid >= 0.0:
            hi = mid
        else:
            lo = mid
    eps_star = hi
    _, x_star, tied = probe(eps_star)
    if tied:
        logger.info("tied maximizers of f - x at eps=%.9g; keeping largest x", eps_star)
    nu_star, alpha = _solution_constants(model, eps_star, x_star)
    return ThresholdSolution(eps_star, x_star, nu_star, alpha, tied_maximizer=tied)


def _solution_constants(model, eps_star: float, x_star: float):
    if not math.isfinite(x_star):
        return math.nan, math.nan
    nu_star = eps_star * model.L(1.0 - model.rho(1.0 - x_star))
    try:
        alpha = scaling_alpha(model, x_star, eps_star)
    except (NonPositiveRadicand, ZeroDivisionError):
        alpha = math.nan
    return float(nu_star), alpha


def matching_upper_bound(model) -> float:
    """Threshold upper bound from edge matching: integral of rho over integral of lam.

    For exponent-form generating functions the integral of (p*x + 1-p)**(n-1)
    over [0, 1] is (1 - (1-p)**n) / (n*p), evaluated in log space.
    """
    if isinstance(model, PolynomialPair):
        return model.rho_integral() / model.lam_integral()
    p = model.p

    def integral(n):
        return -math.expm1(n * math.log1p(-p)) / (n * p)

    return integral(model.R / model.epsilon) / integral(float(model.T))


def scaling_alpha(model, x_star: float, eps_star: float) -> float:
    """Finite-size scaling slope at the threshold tangency point.

    Variance of the stalled fraction decomposes into a text-side and a
    concept-side summand, each normalized by the mean concept degree
    L'(1); the slope is the square root of their sum.  Raises
    NonPositiveRadicand if the bracketed sum is not positive.
    """
    xbar = 1.0 - x_star
    y = 1.0 - model.rho(xbar)
    lp1 = model.l_prime_at_one()

    rho_xb = model.rho(xbar)
    rho_xb2 = model.rho(xbar * xbar)
    drho_xb = model.rho(xbar, 1)
    drho_xb2 = model.rho(xbar * xbar, 1)
    lam_y = model.lam(y)
    lam_y2 = model.lam(y * y)
    dlam_y2 = model.lam(y * y, 1)

    num_text = (
        rho_xb**2
        - rho_xb2
        + drho_xb * (1.0 - 2.0 * x_star * rho_xb)
        - xbar**2 * drho_xb2
    )
    den_text = lp1 * lam_y**2 * drho_xb**2
    num_concept = eps_star**2 * (lam_y**2 - lam_y2 - y * y * dlam_y2)
    den_concept = lp1 * lam_y**2

    radicand = num_text / den_text + num_concept / den_concept
    if not radicand > 0.0:
        raise NonPositiveRadicand(
            f"scaling radicand {radicand:.6g} at x_star={x_star:.6g}, eps_star={eps_star:.6g}"
        )
    return math.sqrt(radicand)


def bit_erasure_rate(model: DegreeModel, sol: ThresholdSolution) -> float:
    """Waterfall-law bit erasure rate nu_star*Q(sqrt(R/eps)*(eps_star - eps)/alpha).

    Evaluated at the model's operating erasure fraction; the sqrt scale is
    the parent-graph size R/eps.  A no-transition solution decodes at any
    eps, so its law value is 0.  Deep in either regime the Q factor
    saturates to 0 or 1 on its own.
    """
    if sol.no_transition:
        return 0.0
    eps = model.epsilon
    z = math.sqrt(model.R / eps) * (sol.eps_star - eps) / sol.alpha
    return sol.nu_star * qfunc(z)


def prob_concept_unlearned(model: DegreeModel, sol: ThresholdSolution) -> float:
    """Probability an erased concept stays unlearned: bit rate over eps, clamped to [0, 1]."""
    return min(1.0, max(0.0, bit_erasure_rate(model, sol) / model.epsilon))
