"""N-period problems: backward optimization and the time-extended iteration.

A time-indexed region assigns a stopping region to each ``t = 0..N-1``;
at ``t = N`` the agent stops regardless.  Both procedures here return the
same (unique) equilibrium.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from stopeq.equilibrium import TIE_TOL
from stopeq.errors import ValidationError
from stopeq.evaluate import Region, StoppingProblem


@dataclass(frozen=True)
class TimedRegion:
    sections: tuple

    def __post_init__(self):
        secs = tuple(s if isinstance(s, Region) else Region(frozenset(s)) for s in self.sections)
        object.__setattr__(self, "sections", secs)

    @property
    def N(self) -> int:
        return len(self.sections)

    @classmethod
    def constant(cls, region: Region, N: int):
        return cls(tuple([region] * N))

    def __getitem__(self, t):
        return self.sections[t]

    def to_list(self, problem):
        return [problem.labels_of(s) for s in self.sections]


def _check(problem, N):
    if N < 1:
        raise ValidationError("horizon N must be at least 1")


def finite_continuation(problem: StoppingProblem, region: TimedRegion) -> np.ndarray:
    """``J[t, x]``: value of continuing at ``(t, x)`` when later selves follow ``region``.

    Forward propagation from each ``t``; independent of the backward recursion.
    """
    N, n = region.N, problem.n
    P, f, curve = problem.chain.transition, problem.payoff, problem.discount
    masks = [s.mask(n) for s in region.sections]
    J = np.zeros((N, n))
    for t in range(N):
        u = P.copy()
        for s in range(t + 1, N + 1):
            d = curve(s - t)
            if s == N:
                J[t] += d * (u @ f)
                break
            S = masks[s]
            J[t] += d * (u[:, S] @ f[S])
            u = np.where(S, 0.0, u) @ P
    return J


def theta_finite(problem: StoppingProblem, region: TimedRegion, tie_tol=TIE_TOL):
    J = finite_continuation(problem, region)
    stop = problem.payoff[None, :] >= J - tie_tol
    return TimedRegion(tuple(Region.from_mask(row) for row in stop)), J


@dataclass(eq=False)
class BackwardResult:
    region: TimedRegion
    J: np.ndarray
    V: np.ndarray


def backward_induction(problem: StoppingProblem, N: int, tie_tol=TIE_TOL) -> BackwardResult:
    """Sequential optimization from ``t = N-1`` down to ``t = 0``.

    Because discounting is not exponential, a single value function per
    time is not enough: the recursion carries ``W[x, k]``, the expected
    payoff collected exactly ``k`` steps after the current time when the
    agent at that time sits at ``x`` and every later self follows its
    section.  The continuation value at ``(t, x)`` is then
    ``sum_k delta(k + 1) * (P @ W_{t+1})[x, k]``.
    """
    _check(problem, N)
    n, P, f, curve = problem.n, problem.chain.transition, problem.payoff, problem.discount
    d = curve.array(N + 1)
    W = f[:, None].copy()           # time N: forced stop, offset 0
    sections = [None] * N
    J = np.zeros((N, n))
    for t in range(N - 1, -1, -1):
        PW = P @ W                  # offsets 0..N-t-1 counted from t+1
        J[t] = PW @ d[1:PW.shape[1] + 1]
        stop = f >= J[t] - tie_tol
        sections[t] = Region.from_mask(stop)
        nxt = np.zeros((n, PW.shape[1] + 1))
        nxt[stop, 0] = f[stop]
        nxt[~stop, 1:] = PW[~stop]
        W = nxt
    V = np.where([s.mask(n) for s in sections], f[None, :], J)
    return BackwardResult(region=TimedRegion(tuple(sections)), J=J, V=V)


@dataclass(eq=False)
class FiniteIteration:
    region: TimedRegion
    trace: list = field(default_factory=list)
    iterations: int = 0
    J: np.ndarray | None = None


def iterate_finite(problem: StoppingProblem, N: int, seed: TimedRegion | None = None,
                   max_iter: int | None = None, tie_tol=TIE_TOL) -> FiniteIteration:
    """Apply the time-extended best response until it stops changing.

    ``trace[k]`` is the k-th iterate (``trace[0]`` is the seed).  The fixed
    point is reached after at most ``N`` applications whatever the seed.
    """
    _check(problem, N)
    if seed is None:
        seed = TimedRegion.constant(Region.full(problem.n), N)
    if seed.N != N:
        raise ValidationError(f"seed has {seed.N} sections, expected {N}")
    max_iter = N + 1 if max_iter is None else max_iter
    trace = [seed]
    current = seed
    for k in range(1, max_iter + 1):
        image, J = theta_finite(problem, current, tie_tol)
        trace.append(image)
        if image == current:
            return FiniteIteration(region=image, trace=trace, iterations=k - 1, J=J)
        current = image
    # max_iter >= N + 1 cannot end here; a smaller cap returns the last iterate
    return FiniteIteration(region=current, trace=trace, iterations=max_iter, J=J)
