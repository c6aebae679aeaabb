"""The best-response operator on stopping regions and its fixed points."""

from __future__ import annotations

import enum
import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from stopeq.errors import (
    DominanceViolation,
    IntersectionNotEquilibrium,
    MaxIterExceeded,
    NoEquilibrium,
    NotAnEquilibrium,
    StateSpaceTooLarge,
)
from stopeq.evaluate import DEFAULT_TOL, Region, StoppingProblem, ValueReport, continuation_value

log = logging.getLogger(__name__)

TIE_TOL = 1e-9
DEFAULT_MAX_ITER = 1000
ENUMERATION_LIMIT = 20


class Method(str, enum.Enum):
    ENUMERATE_INTERSECT = "enumerate_intersect"
    ITERATIVE_REFINE = "iterative_refine"


def _stop_mask(problem, report, tie_tol):
    # weak inequality: exact ties stop
    return problem.payoff >= report.J - tie_tol


def theta_report(problem: StoppingProblem, region, tol=DEFAULT_TOL, tie_tol=TIE_TOL):
    """``theta(region)`` together with the value report it was derived from."""
    report = continuation_value(problem, region, tol=tol)
    return Region.from_mask(_stop_mask(problem, report, tie_tol)), report


def theta(problem: StoppingProblem, region, tol=DEFAULT_TOL, tie_tol=TIE_TOL) -> Region:
    """States where stopping now is at least as good as continuing into ``region``."""
    return theta_report(problem, region, tol, tie_tol)[0]


def mandatory_core(problem: StoppingProblem) -> Region:
    """States whose payoff beats every possible continuation value.

    A zero payoff makes the core empty; that case is logged as degenerate.
    """
    if problem.degenerate:
        log.warning("payoff is identically zero; the mandatory core is empty")
    bar = problem.M * problem.discount(1)
    return Region.from_mask(problem.payoff > bar)


@dataclass(frozen=True, eq=False)
class StateMargin:
    index: int
    label: object
    f: float
    J: float
    stop: bool
    margin: float


@dataclass(frozen=True, eq=False)
class Certificate:
    region: Region
    theta_region: Region
    is_equilibrium: bool
    states: tuple
    report: ValueReport

    def to_dict(self, problem):
        return {
            "region": problem.labels_of(self.region),
            "theta_region": problem.labels_of(self.theta_region),
            "is_equilibrium": self.is_equilibrium,
            "states": [{"label": s.label, "f": s.f, "J": s.J, "stop": s.stop, "margin": s.margin}
                       for s in self.states],
        }


def is_equilibrium(problem: StoppingProblem, region, tol=DEFAULT_TOL, tie_tol=TIE_TOL) -> Certificate:
    """Check ``theta(region) == region`` and record per-state margins ``f - J``."""
    if not isinstance(region, Region):
        region = Region(frozenset(region))
    image, report = theta_report(problem, region, tol, tie_tol)
    order = sorted(range(problem.n), key=problem._order_key)
    states = tuple(
        StateMargin(index=i, label=problem.chain.labels[i], f=float(problem.payoff[i]),
                    J=float(report.J[i]), stop=i in image,
                    margin=float(problem.payoff[i] - report.J[i]))
        for i in order)
    return Certificate(region=region, theta_region=image, is_equilibrium=image == region,
                       states=states, report=report)


@dataclass(eq=False)
class IterationTrace:
    """Regions ``seed, theta(seed), theta^2(seed), ...`` with their values.

    ``steps[k]`` holds ``theta^k(seed)``.  On convergence the fixed point is
    repeated as the last step, so the last two regions coincide and
    ``fixed_at`` is the index ``k`` with ``theta^k(seed)`` a fixed point.
    ``cycle`` lists the periodic orbit if exploratory iteration found one.
    """

    seed: Region
    steps: list = field(default_factory=list)
    converged: bool = False
    S_infinity: Region | None = None
    precondition_held: bool = False
    monotone: bool = True
    fixed_at: int | None = None
    cycle: list | None = None

    @property
    def regions(self):
        return [r for r, _ in self.steps]

    def to_dict(self, problem):
        return {
            "seed": problem.labels_of(self.seed),
            "regions": [problem.labels_of(r) for r in self.regions],
            "converged": self.converged,
            "S_infinity": problem.labels_of(self.S_infinity) if self.S_infinity is not None else None,
            "precondition_held": self.precondition_held,
            "monotone": self.monotone,
            "fixed_at": self.fixed_at,
            "cycle": [problem.labels_of(r) for r in self.cycle] if self.cycle else None,
        }


def iterate_to_fixpoint(problem: StoppingProblem, seed=None, tol=DEFAULT_TOL, tie_tol=TIE_TOL,
                        max_iter: int = DEFAULT_MAX_ITER) -> IterationTrace:
    """Iterate ``theta`` from ``seed`` (default: the whole state space).

    When ``theta(seed)`` is contained in ``seed`` the iterates shrink and, on
    a finite space, settle within ``n`` steps.  Otherwise the iteration runs
    in exploratory mode: it stops at the first fixed point or the first
    revisited region, in which case the cycle is reported and
    ``converged`` stays false.
    """
    seed = Region.full(problem.n) if seed is None else seed
    if not isinstance(seed, Region):
        seed = Region(frozenset(seed))
    seed.mask(problem.n)
    trace = IterationTrace(seed=seed)
    current = seed
    visited = {}
    for k in range(max_iter + 1):
        image, report = theta_report(problem, current, tol, tie_tol)
        trace.steps.append((current, report))
        if k == 0:
            trace.precondition_held = image <= current
        elif not image <= current:
            trace.monotone = False
        visited[current] = k
        if image == current:
            _, rep = trace.steps[-1]
            trace.steps.append((current, rep))
            trace.converged = True
            trace.S_infinity = current
            trace.fixed_at = k
            return trace
        if image in visited:
            trace.cycle = [r for r, _ in trace.steps[visited[image]:]]
            trace.monotone = False
            return trace
        current = image
    raise MaxIterExceeded(f"no fixed point or cycle within {max_iter} iterations")


def enumerate_equilibria(problem: StoppingProblem, tol=DEFAULT_TOL, tie_tol=TIE_TOL,
                         limit_n: int = ENUMERATION_LIMIT) -> list:
    """All equilibria by brute force over supersets of the mandatory core.

    Sorted by size, then by member indices.
    """
    n = problem.n
    if n > limit_n:
        raise StateSpaceTooLarge(f"{n} states exceed the enumeration limit of {limit_n}")
    core = mandatory_core(problem)
    free = [i for i in range(n) if i not in core]
    found = []
    for r in range(len(free) + 1):
        for extra in itertools.combinations(free, r):
            cand = Region(core.members | frozenset(extra))
            if not cand:
                continue
            cert = is_equilibrium(problem, cand, tol, tie_tol)
            if cert.is_equilibrium:
                found.append(cert)
    found.sort(key=lambda c: (len(c.region), c.region.sorted()))
    return found


def dominates(a: ValueReport, b: ValueReport, slack: float) -> bool:
    return bool(np.all(a.V >= b.V - slack))


def refine_pair(problem: StoppingProblem, S, T, tol=DEFAULT_TOL, tie_tol=TIE_TOL,
                max_iter: int = DEFAULT_MAX_ITER) -> IterationTrace:
    """Iterate ``theta`` from ``S & T`` for two equilibria ``S`` and ``T``.

    Under decreasing impatience the result is an equilibrium whose value
    dominates both inputs everywhere; a failed dominance check is logged.
    """
    certs = []
    for name, reg in (("S", S), ("T", T)):
        cert = is_equilibrium(problem, reg, tol, tie_tol)
        if not cert.is_equilibrium:
            raise NotAnEquilibrium(f"{name} = {problem.labels_of(cert.region)} is not an equilibrium")
        certs.append(cert)
    trace = iterate_to_fixpoint(problem, certs[0].region & certs[1].region, tol, tie_tol, max_iter)
    if trace.converged:
        final = trace.steps[-1][1]
        for cert in certs:
            if not dominates(final, cert.report, 2 * tol):
                log.warning("refined equilibrium %s does not dominate %s",
                            problem.labels_of(trace.S_infinity), problem.labels_of(cert.region))
    return trace


@dataclass(eq=False)
class OptimalResult:
    certificate: Certificate
    equilibria: list
    dominance: np.ndarray
    method: Method
    exhaustive: bool

    @property
    def region(self) -> Region:
        return self.certificate.region

    def to_dict(self, problem):
        return {
            "optimal": problem.labels_of(self.region),
            "method": self.method.value,
            "exhaustive": self.exhaustive,
            "equilibria": [problem.labels_of(c.region) for c in self.equilibria],
            "dominance": self.dominance.tolist(),
            "certificate": self.certificate.to_dict(problem),
        }


def optimal_equilibrium(problem: StoppingProblem, tol=DEFAULT_TOL, tie_tol=TIE_TOL,
                        method=Method.ENUMERATE_INTERSECT, limit_n: int = ENUMERATION_LIMIT,
                        seeds=None, max_iter: int = DEFAULT_MAX_ITER) -> OptimalResult:
    """The equilibrium whose value dominates every other equilibrium's.

    ``enumerate_intersect`` intersects all enumerated equilibria.
    ``iterative_refine`` folds :func:`refine_pair` over the enumerated
    equilibria, or, above ``limit_n`` states, over the equilibria reached
    from ``seeds`` (whole space by default), in which case the result is
    flagged as non-exhaustive.

    ``dominance[i, x]`` is ``V(x, S*) - V(x, S_i)`` for each equilibrium
    ``S_i`` considered.
    """
    method = Method(method)
    exhaustive = problem.n <= limit_n
    if exhaustive:
        equilibria = enumerate_equilibria(problem, tol, tie_tol, limit_n)
    elif method is Method.ENUMERATE_INTERSECT:
        raise StateSpaceTooLarge(
            f"{problem.n} states exceed the enumeration limit of {limit_n}; use iterative_refine")
    else:
        equilibria = _equilibria_from_seeds(problem, seeds, tol, tie_tol, max_iter)
    if not equilibria:
        raise NoEquilibrium("the problem has no equilibrium" if exhaustive
                            else "no equilibrium reached from the given seeds")

    if method is Method.ENUMERATE_INTERSECT:
        inter = Region.full(problem.n)
        for c in equilibria:
            inter = inter & c.region
        cert = is_equilibrium(problem, inter, tol, tie_tol)
        if not cert.is_equilibrium:
            raise IntersectionNotEquilibrium(
                f"intersection {problem.labels_of(inter)} of all equilibria is not an equilibrium")
    else:
        best = equilibria[0].region
        for c in equilibria[1:]:
            trace = refine_pair(problem, best, c.region, tol, tie_tol, max_iter)
            if not trace.converged:
                raise IntersectionNotEquilibrium("refinement of two equilibria did not converge")
            best = trace.S_infinity
        cert = is_equilibrium(problem, best, tol, tie_tol)

    table = np.array([cert.report.V - c.report.V for c in equilibria])
    if np.any(table < -2 * tol):
        raise DominanceViolation(
            f"{problem.labels_of(cert.region)} fails to dominate every equilibrium")
    return OptimalResult(certificate=cert, equilibria=equilibria, dominance=table,
                         method=method, exhaustive=exhaustive)


def _equilibria_from_seeds(problem, seeds, tol, tie_tol, max_iter):
    seeds = [Region.full(problem.n)] if seeds is None else list(seeds)
    found = {}
    for seed in seeds:
        if not isinstance(seed, Region):
            seed = Region(frozenset(seed))
        trace = iterate_to_fixpoint(problem, seed, tol, tie_tol, max_iter)
        if trace.converged and trace.S_infinity not in found:
            found[trace.S_infinity] = is_equilibrium(problem, trace.S_infinity, tol, tie_tol)
    out = list(found.values())
    out.sort(key=lambda c: (len(c.region), c.region.sorted()))
    return out

