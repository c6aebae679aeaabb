"""Continuation and equilibrium values of stopping regions.

For a region ``S`` the agent who continues today stops at the first time
``t >= 1`` the chain is in ``S``.  Its value under an arbitrary discount
curve is the series

    J(x) = sum_{t >= 1} delta(t) * E^x[f(X_t); first entry into S at t]

which is computed for all start states at once by propagating the
not-yet-stopped mass through the kernel.  The series is cut at the first
horizon ``T`` where ``survivors(T) * delta(T + 1) * max f <= tol``; that
product bounds everything left out, so the reported ``tail_bound`` is a
certified error bar rather than an estimate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from stopeq.discounting import DiscountCurve, Family
from stopeq.errors import (
    DimensionMismatch,
    HorizonExceeded,
    IndexOutOfRange,
    SolverError,
    ValidationError,
)
from stopeq.markov import Chain

DEFAULT_TOL = 1e-10
MAX_HORIZON = 10**6


@dataclass(frozen=True)
class Region:
    """A set of state indices (a stopping region)."""

    members: frozenset = frozenset()

    def __post_init__(self):
        members = frozenset(int(i) for i in self.members)
        if any(i < 0 for i in members):
            raise IndexOutOfRange("region members must be nonnegative state indices")
        object.__setattr__(self, "members", members)

    @classmethod
    def of(cls, *indices):
        return cls(frozenset(indices))

    @classmethod
    def full(cls, n):
        return cls(frozenset(range(n)))

    @classmethod
    def empty(cls):
        return cls(frozenset())

    @classmethod
    def from_mask(cls, mask):
        return cls(frozenset(np.flatnonzero(np.asarray(mask, dtype=bool)).tolist()))

    def mask(self, n: int) -> np.ndarray:
        if self.members and max(self.members) >= n:
            raise IndexOutOfRange(f"region {sorted(self.members)} exceeds state space of size {n}")
        m = np.zeros(n, dtype=bool)
        m[list(self.members)] = True
        return m

    def sorted(self) -> tuple:
        return tuple(sorted(self.members))

    def __contains__(self, i):
        return i in self.members

    def __iter__(self):
        return iter(self.sorted())

    def __len__(self):
        return len(self.members)

    def __and__(self, other):
        return Region(self.members & other.members)

    def __or__(self, other):
        return Region(self.members | other.members)

    def __le__(self, other):
        return self.members <= other.members

    def __lt__(self, other):
        return self.members < other.members

    def __repr__(self):
        return f"Region({set(self.sorted()) or '{}'})"


@dataclass(frozen=True, eq=False)
class StoppingProblem:
    """Chain, nonnegative payoff vector and discount curve."""

    chain: Chain
    payoff: np.ndarray
    discount: DiscountCurve

    def __post_init__(self):
        f = np.array(self.payoff, dtype=float)
        if f.shape != (self.chain.n,):
            raise DimensionMismatch(f"payoff has shape {f.shape}, expected ({self.chain.n},)")
        if not np.all(np.isfinite(f)) or np.any(f < 0):
            raise ValidationError("payoff must be finite and nonnegative")
        f.flags.writeable = False
        object.__setattr__(self, "payoff", f)
        # region -> ValueReport; every operator application goes through here
        object.__setattr__(self, "_memo", {})

    @property
    def n(self) -> int:
        return self.chain.n

    @property
    def M(self) -> float:
        return float(self.payoff.max())

    @property
    def degenerate(self) -> bool:
        return self.M == 0.0

    def labels_of(self, region: Region) -> list:
        return [self.chain.labels[i] for i in sorted(region.members, key=self._order_key)]

    def region(self, labels: Iterable) -> Region:
        return Region(frozenset(self.chain.index(lab) for lab in labels))

    def _order_key(self, i):
        return (self.chain.coords[i], i)


@dataclass(frozen=True, eq=False)
class ValueReport:
    """Values of a region for every state.

    ``J`` is the continuation value, ``V`` the equilibrium value (payoff on
    the region, continuation off it) and ``V_sup`` the pointwise maximum of
    payoff and continuation.  ``V`` and ``V_sup`` agree exactly when the
    region is an equilibrium.
    """

    region: Region
    f: np.ndarray
    J: np.ndarray
    V: np.ndarray
    V_sup: np.ndarray
    horizon_used: int
    tail_bound: np.ndarray

    def rows(self, problem: StoppingProblem):
        order = sorted(range(problem.n), key=problem._order_key)
        for i in order:
            yield (problem.chain.labels[i], self.f[i], self.J[i], self.V[i], self.tail_bound[i])


def _check_problem_region(problem, region):
    if not isinstance(region, Region):
        region = Region(frozenset(region))
    return region, region.mask(problem.n)


def reaches(P: np.ndarray, target: np.ndarray) -> np.ndarray:
    """States from which ``target`` is reachable in zero or more steps."""
    edge = P > 0
    seen = np.asarray(target, dtype=bool).copy()
    frontier = seen.copy()
    while frontier.any():
        frontier = edge[:, frontier].any(axis=1) & ~seen
        seen |= frontier
    return seen


def continuation_value(problem: StoppingProblem, region, tol: float = DEFAULT_TOL,
                       max_horizon: int = MAX_HORIZON) -> ValueReport:
    """Continuation values ``J(x, rho(x, S))`` for all states ``x``.

    Mass that sits in states from which ``S`` is unreachable is dropped as
    soon as it arrives there: it never stops, so it contributes exactly zero.
    """
    if tol <= 0:
        raise ValidationError("tol must be positive")
    region, S = _check_problem_region(problem, region)
    key = (region.members, tol, max_horizon)
    memo = problem._memo
    if key not in memo:
        memo[key] = _continuation_value(problem, region, S, tol, max_horizon)
    return memo[key]


def _continuation_value(problem, region, S, tol, max_horizon):
    n, f = problem.n, problem.payoff
    if not S.any():
        return _report(problem, region, S, np.zeros(n), 0, np.zeros(n))

    P = problem.chain.transition
    live = np.flatnonzero(reaches(P, S) & ~S)
    # expected payoff of stopping at the very next step, from each state
    g = P[:, S] @ f[S]
    g_live = g[live]
    M = problem.M
    curve = problem.discount

    d = curve.array(1024)
    J = d[1] * g
    # column x of W is the not-yet-stopped mass of the chain started at x
    W = np.ascontiguousarray(P[:, live].T)
    step_T = np.ascontiguousarray(P[np.ix_(live, live)].T)
    t = 1
    while True:
        if t + 1 >= len(d):
            d = curve.array(min(2 * len(d), max_horizon + 2))
        bound = W.sum(axis=0) * (d[t + 1] * M)
        if bound.max(initial=0.0) <= tol:
            break
        if t >= max_horizon:
            raise HorizonExceeded(
                f"tail bound {bound.max():.3g} still above tol {tol:.3g} after {t} steps")
        t += 1
        J += d[t] * (g_live @ W)
        W = step_T @ W
    return _report(problem, region, S, J, t, bound)


def _report(problem, region, S, J, horizon, bound):
    f = problem.payoff
    arrays = dict(f=f.copy(), J=J, V=np.where(S, f, J), V_sup=np.maximum(f, J),
                  tail_bound=np.array(bound, dtype=float))
    for a in arrays.values():
        a.flags.writeable = False
    return ValueReport(region=region, horizon_used=horizon, **arrays)


def equilibrium_value(problem: StoppingProblem, region, tol: float = DEFAULT_TOL,
                      max_horizon: int = MAX_HORIZON) -> ValueReport:
    """Equilibrium value ``V(x, S)``: ``f`` on ``S`` and ``J`` off it.

    Same computation as :func:`continuation_value`; both ``V`` and ``V_sup``
    are populated on the returned report.
    """
    return continuation_value(problem, region, tol=tol, max_horizon=max_horizon)


def exact_exponential_value(problem: StoppingProblem, region, gamma: float | None = None) -> np.ndarray:
    """Continuation values under ``delta(t) = gamma**t`` by a direct linear solve.

    Independent of the series engine; used as its oracle.  With ``gamma``
    omitted the problem's own exponential curve supplies it.
    """
    if gamma is None:
        if problem.discount.family is not Family.EXPONENTIAL:
            raise ValidationError("gamma is required unless the problem discounts exponentially")
        gamma = 1.0 / (1.0 + problem.discount.params["beta"])
    if not 0 < gamma < 1:
        raise ValidationError("gamma must lie in (0, 1)")
    region, S = _check_problem_region(problem, region)
    n, f, P = problem.n, problem.payoff, problem.chain.transition
    if not S.any():
        return np.zeros(n)
    C = ~S
    h = np.zeros(n)
    if C.any():
        A = np.eye(C.sum()) - gamma * P[np.ix_(C, C)]
        b = gamma * P[np.ix_(C, S)] @ f[S]
        try:
            h[C] = np.linalg.solve(A, b)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - gamma < 1 keeps A invertible
            raise SolverError(f"singular continuation system: {exc}") from exc
    g = np.where(S, f, h)
    return gamma * (P @ g)


@dataclass(frozen=True, eq=False)
class HittingProfile:
    """First-entry decomposition up to a fixed horizon.

    ``entry[k, t-1, y]`` is the probability that the chain started at
    ``starts[k]`` first enters the region at time ``t`` and does so at state
    ``y`` (present only when requested by state).  ``time_mass[k, t-1]`` sums
    it over ``y``.  ``surviving[k, t-1]`` is the mass still outside the region
    after step ``t``; ``trapped[k, t-1]`` is the part of it sitting in states
    from which the region can never be reached.
    """

    starts: np.ndarray
    horizon: int
    time_mass: np.ndarray
    surviving: np.ndarray
    trapped: np.ndarray
    entry: np.ndarray | None = None

    def value(self, curve: DiscountCurve, payoff=None) -> np.ndarray:
        """Truncated discounted value ``sum_t delta(t) * E[payoff at entry]``."""
        d = curve.array(self.horizon)[1:]
        if payoff is None:
            return self.time_mass @ d
        if self.entry is None:
            raise ValidationError("profile was built without per-state entries")
        return np.einsum("kty,y,t->k", self.entry, np.asarray(payoff, float), d)


def hitting_profile(problem: StoppingProblem, region, T: int, starts=None,
                    by_state: bool = True) -> HittingProfile:
    """Exact first-passage masses into ``region`` for ``t = 1..T``."""
    if T < 1:
        raise ValidationError("T must be at least 1")
    region, S = _check_problem_region(problem, region)
    n, P = problem.n, problem.chain.transition
    starts = np.arange(n) if starts is None else np.atleast_1d(np.asarray(starts, dtype=int))
    if np.any((starts < 0) | (starts >= n)):
        raise IndexOutOfRange("start state outside the chain")
    C = np.flatnonzero(~S)
    Sx = np.flatnonzero(S)
    dead = np.flatnonzero(~reaches(P, S)[C])
    # mass is kept as columns, one per start
    step_T = np.ascontiguousarray(P[np.ix_(C, C)].T)
    hit_T = np.ascontiguousarray(P[np.ix_(C, Sx)].T)
    exit_C = P[np.ix_(C, Sx)].sum(axis=1)
    k = len(starts)
    time_mass = np.zeros((T, k))
    surviving = np.zeros((T, k))
    trapped = np.zeros((T, k))
    entry = np.zeros((k, T, n)) if by_state else None
    first = P[starts]
    w = np.ascontiguousarray(first[:, C].T)
    time_mass[0] = first[:, Sx].sum(axis=1)
    if by_state:
        entry[:, 0, Sx] = first[:, Sx]
    for t in range(T):
        if t:
            if by_state:
                hit = hit_T @ w
                entry[:, t, Sx] = hit.T
                time_mass[t] = hit.sum(axis=0)
            else:
                time_mass[t] = exit_C @ w
            w = step_T @ w
        surviving[t] = w.sum(axis=0)
        if len(dead):
            trapped[t] = w[dead].sum(axis=0)
    time_mass, surviving, trapped = time_mass.T.copy(), surviving.T.copy(), trapped.T.copy()
    return HittingProfile(starts=starts, horizon=T, time_mass=time_mass,
                          surviving=surviving, trapped=trapped, entry=entry)
