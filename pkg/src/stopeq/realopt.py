"""Binomial real-options example with hyperbolic discounting.

The price moves on ``{u**i}`` (up with probability ``p``), the payoff is
``(K - x)^+`` and ``delta(t) = 1 / (1 + beta t)``.  Every equilibrium is a
down-set ``(0, y]``, and exactly the lattice points ``y`` in ``(L K, U K]``
give one, with

    L = (1 - a1) / (u - a1)
    U = (1 - (1-p)/(1+beta) - p a') / (1 - (1-p)/(u (1+beta)) - p a')

where ``a1 = E^1[delta(xi)]`` and ``a' = E^1[delta(xi + 1)]`` for the
descent time ``xi`` of a +-1 random walk from 1 to 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from stopeq.discounting import DiscountCurve
from stopeq.equilibrium import (
    TIE_TOL,
    Method,
    is_equilibrium,
    iterate_to_fixpoint,
    optimal_equilibrium,
)
from stopeq.errors import (
    EmptyEquilibriumFamily,
    NonConvergentSeries,
    ValidationError,
    WindowTooNarrow,
)
from stopeq.evaluate import Region, StoppingProblem, hitting_profile
from stopeq.markov import Boundary, LatticeSpec, build_lattice_chain

SERIES_TOL = 1e-9
MAX_TERMS = 10**7
# rounding allowance on the remaining first-passage mass
_MASS_SLACK = 1e-15


@dataclass(frozen=True)
class RealOptionParams:
    u: float
    p: float
    beta: float
    K: float

    def __post_init__(self):
        u, p, beta, K = (float(v) for v in (self.u, self.p, self.beta, self.K))
        if not u > 1:
            raise ValidationError(f"u must exceed 1, got {u}")
        if not 0 < p < 1:
            raise ValidationError(f"p must lie in (0, 1), got {p}")
        if p < 1 / (u + 1) - 1e-15:
            raise ValidationError(
                f"p = {p} < 1/(u+1) = {1 / (u + 1):.6g}: the price is not a submartingale")
        if not beta > 0:
            raise ValidationError(f"beta must be positive, got {beta}")
        if not K > 0:
            raise ValidationError(f"K must be positive, got {K}")

    def to_dict(self):
        return {"u": self.u, "p": self.p, "beta": self.beta, "K": self.K}


@dataclass(frozen=True)
class SeriesResult:
    value: float
    tail_bound: float
    terms: int


def first_passage_law(p: float, n: int, t_max: int) -> np.ndarray:
    """``P(xi = t)`` for ``t = 0..t_max``, walk started at ``n``.

    Ballot theorem: ``P(xi = t) = (n / t) C(t, (t - n)/2) p^((t-n)/2) q^((t+n)/2)``
    for ``t >= n`` of the same parity as ``n``.
    """
    out = np.zeros(t_max + 1)
    j = np.arange(0, max((t_max - n) // 2 + 1, 0))
    if len(j):
        t = n + 2 * j
        out[t] = np.exp(_log_law(p, n, j))
    return out


def _log_law(p, n, j):
    t = n + 2 * j
    return (math.log(n) - np.log(t) + gammaln(t + 1) - gammaln(j + 1) - gammaln(n + j + 1)
            + j * math.log(p) + (n + j) * math.log1p(-p))


def alpha_series(p: float, beta: float, n: int = 1, shift: int = 0, tol: float = SERIES_TOL,
                 max_terms: int = MAX_TERMS) -> SeriesResult:
    """``E^n[1 / (1 + beta (xi + shift))]`` summed over finite descent times.

    The tail after the last summed time ``t`` is at most
    ``(P(xi < oo) - summed mass) / (1 + beta (t + 1 + shift))``, with
    ``P(xi < oo) = min(1, (q/p)^n)``.  Summation stops once that bound is
    below ``tol``.
    """
    if not 0 < p < 1:
        raise ValidationError(f"p must lie in (0, 1), got {p}")
    if not beta > 0:
        raise ValidationError(f"beta must be positive, got {beta}")
    if n < 1 or shift < 0:
        raise ValidationError("need n >= 1 and shift >= 0")
    if tol <= 0:
        raise ValidationError("tol must be positive")
    q = 1.0 - p
    total_mass = 1.0 if p <= q else (q / p) ** n
    value = mass = 0.0
    start, chunk = 0, 1024
    bound = math.inf
    while start < max_terms:
        j = np.arange(start, min(start + chunk, max_terms))
        w = np.exp(_log_law(p, n, j))
        t = n + 2 * j
        remaining = np.maximum(total_mass - (mass + np.cumsum(w)), 0.0) + _MASS_SLACK
        bounds = remaining / (1.0 + beta * (t + 1 + shift))
        done = np.flatnonzero(bounds <= tol)
        stop = done[0] + 1 if len(done) else len(j)
        value += float(np.sum(w[:stop] / (1.0 + beta * (t[:stop] + shift))))
        mass += float(np.sum(w[:stop]))
        bound = float(bounds[stop - 1])
        start += stop
        if len(done):
            return SeriesResult(value, bound, start)
        chunk = min(chunk * 2, 1 << 20)
    raise NonConvergentSeries(
        f"tail bound {bound:.3g} above tol {tol:.3g} after {start} terms",
        value=value, tail_bound=bound, terms=start)


def alpha1(p, beta, tol=SERIES_TOL) -> float:
    return alpha_series(p, beta, 1, 0, tol).value


def alpha_prime(p, beta, tol=SERIES_TOL) -> float:
    return alpha_series(p, beta, 1, 1, tol).value


def alpha_n(p, beta, n, tol=SERIES_TOL) -> float:
    return alpha_series(p, beta, n, 0, tol).value


@dataclass(frozen=True)
class LatticeAlpha:
    """Lattice estimate of an alpha with a certified bracket ``[lower, upper]``."""

    lower: float
    upper: float
    horizon: int
    window: int

    @property
    def value(self):
        return self.lower


def alpha_lattice(p: float, beta: float, n=1, shift: int = 0, window: int = 60,
                  horizon: int = 4000):
    """Alpha from first-passage masses on a truncated walk (an independent oracle).

    Uses the generic hitting-profile engine on a lattice of ``2 window + 1``
    states with absorbing edges.  ``upper`` adds the mass still wandering at
    ``horizon`` (discounted at ``horizon + 1``) and the mass absorbed at the
    top edge (discounted by the earliest time it could have come back).
    ``n`` may be a sequence of start levels, computed in one pass; a list of
    results is returned in that case.
    """
    levels = np.atleast_1d(np.asarray(n, dtype=int))
    if levels.min() < 1 or levels.max() >= window:
        raise WindowTooNarrow(f"start levels must lie in 1..{window - 1}")
    # only the topology matters; a tiny up-factor keeps coordinates finite
    chain = build_lattice_chain(LatticeSpec(u=1.001, p=p, window=window))
    problem = StoppingProblem(chain, np.ones(chain.n), DiscountCurve.hyperbolic(beta))
    below = Region.from_mask(np.arange(chain.n) <= window)
    prof = hitting_profile(problem, below, horizon, starts=window + levels, by_state=False)
    t = np.arange(1, horizon + 1)
    lower = prof.time_mass @ (1.0 / (1.0 + beta * (t + shift)))
    newly_trapped = np.diff(prof.trapped, axis=1, prepend=0.0)
    top_return = newly_trapped @ (1.0 / (1.0 + beta * (t + window + shift)))
    wandering = prof.surviving[:, -1] - prof.trapped[:, -1]
    upper = lower + wandering / (1.0 + beta * (horizon + 1 + shift)) + top_return
    out = [LatticeAlpha(lower=float(lo), upper=float(hi), horizon=horizon, window=window)
           for lo, hi in zip(lower, upper)]
    return out if np.ndim(n) else out[0]


def boundary_continuation(params: RealOptionParams, y: float, a_prime: float) -> float:
    """Continuation value at the top ``y`` of the down-set ``(0, y]``."""
    u, p, beta, K = params.u, params.p, params.beta, params.K
    return (1 - p) * (K - y / u) / (1 + beta) + p * (K - y) * a_prime


@dataclass(frozen=True)
class ThresholdReport:
    params: RealOptionParams
    alpha1: float
    alpha_prime: float
    L: float
    U: float
    y_star: float
    y_star_exponent: int
    equilibrium_thresholds: tuple
    exponents: tuple
    series_tail_bound: float

    def to_dict(self):
        return {
            "params": self.params.to_dict(),
            "alpha1": self.alpha1,
            "alpha_prime": self.alpha_prime,
            "L": self.L,
            "U": self.U,
            "y_star": self.y_star,
            "y_star_exponent": self.y_star_exponent,
            "equilibrium_thresholds": list(self.equilibrium_thresholds),
            "exponents": list(self.exponents),
            "series_tail_bound": self.series_tail_bound,
        }


def _first_exponent_above(u, level):
    i = math.floor(math.log(level) / math.log(u)) + 1
    while u ** (i - 1) > level:
        i -= 1
    while u ** i <= level:
        i += 1
    return i


def _last_exponent_at_most(u, level):
    i = math.floor(math.log(level) / math.log(u))
    while u ** (i + 1) <= level:
        i += 1
    while u ** i > level:
        i -= 1
    return i


def thresholds(params: RealOptionParams, tol: float = SERIES_TOL) -> ThresholdReport:
    """Closed-form threshold band and the equilibrium family it implies.

    Raises :class:`EmptyEquilibriumFamily` (carrying the report) when no
    lattice point falls in ``(L K, U K]``.
    """
    u, p, beta, K = params.u, params.p, params.beta, params.K
    s1 = alpha_series(p, beta, 1, 0, tol)
    s2 = alpha_series(p, beta, 1, 1, tol)
    a1, ap = s1.value, s2.value
    L = (1 - a1) / (u - a1)
    U = (1 - (1 - p) / (1 + beta) - p * ap) / (1 - (1 - p) / (u * (1 + beta)) - p * ap)
    lo = _first_exponent_above(u, L * K)
    hi = _last_exponent_at_most(u, U * K)
    exps = tuple(range(lo, hi + 1))
    report = ThresholdReport(
        params=params, alpha1=a1, alpha_prime=ap, L=L, U=U,
        y_star=u ** lo, y_star_exponent=lo,
        equilibrium_thresholds=tuple(u ** i for i in exps), exponents=exps,
        series_tail_bound=max(s1.tail_bound, s2.tail_bound))
    if not exps:
        raise EmptyEquilibriumFamily(
            f"no lattice point in (L K, U K] = ({L * K:.6g}, {U * K:.6g}]", report=report)
    return report


def lattice_problem(params: RealOptionParams, window: int,
                    boundary=Boundary.REFLECT) -> StoppingProblem:
    chain = build_lattice_chain(LatticeSpec(params.u, params.p, window, boundary))
    payoff = np.maximum(params.K - chain.coords, 0.0)
    return StoppingProblem(chain, payoff, DiscountCurve.hyperbolic(params.beta))


def is_down_set(problem: StoppingProblem, region: Region, ignore=()) -> bool:
    """Whether ``region`` (minus ``ignore``) is ``{x <= y}`` for its largest member ``y``."""
    members = [i for i in region.members if i not in ignore]
    if not members:
        return False
    top = max(problem.chain.coords[i] for i in members)
    want = {i for i in range(problem.n) if problem.chain.coords[i] <= top and i not in ignore}
    return set(members) == want


@dataclass(eq=False)
class CrossValidation:
    closed: ThresholdReport
    window: int
    boundary: Boundary
    closed_exponents: tuple
    lattice_exponents: tuple
    family_agrees: bool
    optimal_exponent_closed: int
    optimal_exponent_lattice: int | None
    optimal_agrees: bool
    full_space_limit_exponent: int | None
    down_sets_only: bool
    rows: list = field(default_factory=list)
    edge_margins: dict = field(default_factory=dict)

    @property
    def agrees(self):
        return self.family_agrees and self.optimal_agrees and self.down_sets_only

    def to_dict(self):
        return {
            "closed_form": self.closed.to_dict(),
            "window": self.window,
            "boundary": self.boundary.value,
            "closed_exponents": list(self.closed_exponents),
            "lattice_exponents": list(self.lattice_exponents),
            "family_agrees": self.family_agrees,
            "optimal_exponent_closed": self.optimal_exponent_closed,
            "optimal_exponent_lattice": self.optimal_exponent_lattice,
            "optimal_agrees": self.optimal_agrees,
            "full_space_limit_exponent": self.full_space_limit_exponent,
            "down_sets_only": self.down_sets_only,
            "edge_margins": self.edge_margins,
            "rows": self.rows,
        }


def cross_validate(params: RealOptionParams, window: int = 12, tol: float = 1e-10,
                   boundary=Boundary.REFLECT, series_tol: float = SERIES_TOL,
                   tie_tol: float = TIE_TOL) -> CrossValidation:
    """Compare the closed-form equilibrium family with the generic lattice solver.

    Every down-set ``(0, u**i]`` below ``K`` in the window is tested with
    :func:`is_equilibrium`; the optimal equilibrium is found by refining the
    equilibria reached from the whole space and from those down-sets.  With
    absorbing edges the top state (zero payoff, never leaves) belongs to every
    best response, so it is added to each candidate and ignored when reading
    off thresholds.
    """
    boundary = Boundary(boundary)
    try:
        closed = thresholds(params, series_tol)
    except EmptyEquilibriumFamily as exc:
        closed = exc.report
    u, K = params.u, params.K
    if not (u ** -window <= closed.L * K / u and u ** window >= K * u * u):
        raise WindowTooNarrow(
            f"window {window} too narrow: need u^-m <= L K / u and u^m >= K u^2")
    problem = lattice_problem(params, window, boundary)
    coords = problem.chain.coords
    n = problem.n
    forced = frozenset({n - 1}) if boundary is Boundary.ABSORB_TOP_ZERO else frozenset()

    rows, lattice_exps, seeds = [], [], []
    for k in range(n):
        if not coords[k] < K:
            break
        i = k - window
        cand = Region(frozenset(range(k + 1)) | forced)
        cert = is_equilibrium(problem, cand, tol, tie_tol)
        if cert.is_equilibrium:
            lattice_exps.append(i)
            seeds.append(cand)
        y = float(coords[k])
        rows.append({
            "exponent": i,
            "y": y,
            "closed_form_equilibrium": i in closed.exponents,
            "lattice_equilibrium": cert.is_equilibrium,
            "J_at_y_lattice": float(cert.report.J[k]),
            "J_at_y_closed_form": boundary_continuation(params, y, closed.alpha_prime),
            "margin_at_y": float(problem.payoff[k] - cert.report.J[k]),
        })

    full = iterate_to_fixpoint(problem, None, tol, tie_tol)
    found = [full.S_infinity] if full.converged else []
    down_ok = all(is_down_set(problem, r, forced) for r in found + seeds)
    full_exp = _top_exponent(problem, full.S_infinity, forced, window) if full.converged else None

    opt_exp = None
    edge = {}
    if seeds or found:
        opt = optimal_equilibrium(problem, tol, tie_tol, method=Method.ITERATIVE_REFINE,
                                  limit_n=0, seeds=[Region.full(n)] + seeds)
        down_ok = down_ok and all(is_down_set(problem, c.region, forced) for c in opt.equilibria)
        opt_exp = _top_exponent(problem, opt.region, forced, window)
        st = {s.index: s for s in opt.certificate.states}
        edge = {"bottom": st[0].margin, "top": st[n - 1].margin}

    closed_exps = tuple(e for e in closed.exponents if -window <= e <= window)
    return CrossValidation(
        closed=closed, window=window, boundary=boundary,
        closed_exponents=closed_exps, lattice_exponents=tuple(lattice_exps),
        family_agrees=tuple(lattice_exps) == closed_exps,
        optimal_exponent_closed=closed.y_star_exponent, optimal_exponent_lattice=opt_exp,
        optimal_agrees=opt_exp == closed.y_star_exponent,
        full_space_limit_exponent=full_exp, down_sets_only=down_ok,
        rows=rows, edge_margins=edge)


def _top_exponent(problem, region, forced, window):
    members = [i for i in region.members if i not in forced]
    return max(members) - window if members else None
