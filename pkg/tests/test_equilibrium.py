import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stopeq import DiscountCurve, Region, StoppingProblem, build_finite_chain
from stopeq.equilibrium import (
    Method,
    dominates,
    enumerate_equilibria,
    is_equilibrium,
    iterate_to_fixpoint,
    mandatory_core,
    optimal_equilibrium,
    refine_pair,
    theta,
)
from stopeq.errors import (
    MaxIterExceeded,
    NoEquilibrium,
    NotAnEquilibrium,
    StateSpaceTooLarge,
)
from stopeq.evaluate import continuation_value

import oracles
from instances import problems, random_problem, region_masks


def test_theta_of_empty_is_everything(two_equilibria_problem):
    assert theta(two_equilibria_problem, Region.empty()) == Region.full(2)


def test_theta_examples(no_equilibrium_problem, two_equilibria_problem):
    assert theta(no_equilibrium_problem, Region.of(0, 1)) == Region.of(1)
    assert theta(two_equilibria_problem, Region.of(0, 1)) == Region.of(0, 1)


def test_exact_ties_stop():
    # f(0) = 0.5 equals J(0) = 1 * 0.5 when the next step lands in state 1
    ch = build_finite_chain([0, 1], [[0, 1], [0, 1]])
    pr = StoppingProblem(ch, [0.5, 1.0], DiscountCurve.table([1.0, 0.5, 0.25]))
    assert 0 in theta(pr, Region.of(1))


def test_mandatory_core_examples(no_equilibrium_problem, two_state_chain, caplog):
    assert mandatory_core(no_equilibrium_problem) == Region.of(1)
    const = StoppingProblem(two_state_chain, [3.0, 3.0], DiscountCurve.hyperbolic(1))
    assert mandatory_core(const) == Region.full(2)
    zero = StoppingProblem(two_state_chain, [0.0, 0.0], DiscountCurve.hyperbolic(1))
    with caplog.at_level(logging.WARNING):
        assert mandatory_core(zero) == Region.empty()
    assert zero.degenerate
    assert "identically zero" in caplog.text


def test_iterate_from_full_space_on_two_equilibria(two_equilibria_problem):
    tr = iterate_to_fixpoint(two_equilibria_problem)
    assert tr.converged and tr.precondition_held
    assert tr.fixed_at == 0
    assert tr.S_infinity == Region.of(0, 1)
    assert tr.regions[-1] == tr.regions[-2]


def test_iterate_from_core(two_equilibria_problem):
    core = mandatory_core(two_equilibria_problem)
    assert core == Region.of(1)
    tr = iterate_to_fixpoint(two_equilibria_problem, core)
    assert tr.precondition_held and tr.converged
    assert tr.S_infinity == Region.of(1)
    J = tr.steps[-1][1].J
    assert J[0] == pytest.approx(oracles.two_state_geometric_J1(7 / 12, 0.99), abs=1e-9)
    assert J[1] == pytest.approx(7 / 6 * 0.99, abs=1e-9)


def test_iterate_reports_cycle_without_equilibrium(no_equilibrium_problem):
    tr = iterate_to_fixpoint(no_equilibrium_problem)
    assert not tr.converged
    assert tr.S_infinity is None
    assert tr.cycle == [Region.of(0, 1), Region.of(1)]
    assert not tr.monotone


def test_iterate_exploratory_from_a_growing_seed(two_equilibria_problem):
    # theta({}) is the whole space, which is then fixed
    tr = iterate_to_fixpoint(two_equilibria_problem, Region.empty())
    assert not tr.precondition_held
    assert tr.converged and tr.S_infinity == Region.full(2)


def test_max_iter(no_equilibrium_problem):
    with pytest.raises(MaxIterExceeded):
        iterate_to_fixpoint(no_equilibrium_problem, max_iter=0)


def test_is_equilibrium_examples(no_equilibrium_problem, two_equilibria_problem):
    cert = is_equilibrium(two_equilibria_problem, Region.of(1))
    assert cert.is_equilibrium
    assert [s.stop for s in cert.states] == [False, True]
    assert cert.states[0].margin == pytest.approx(1 - 7 / 6 * 0.495 / 0.505, abs=1e-9)
    bad = is_equilibrium(no_equilibrium_problem, Region.of(1))
    assert not bad.is_equilibrium and bad.theta_region == Region.of(0, 1)
    assert not is_equilibrium(two_equilibria_problem, Region.empty()).is_equilibrium


def test_certificate_serializes(two_equilibria_problem):
    d = is_equilibrium(two_equilibria_problem, [1]).to_dict(two_equilibria_problem)
    assert d["region"] == [2] and d["is_equilibrium"] is True
    assert [s["label"] for s in d["states"]] == [1, 2]


def test_enumeration_examples(no_equilibrium_problem, two_equilibria_problem):
    found = [c.region for c in enumerate_equilibria(two_equilibria_problem)]
    assert found == [Region.of(1), Region.of(0, 1)]
    assert enumerate_equilibria(no_equilibrium_problem) == []
    single = StoppingProblem(build_finite_chain(["s"], [[1.0]]), [2.0], DiscountCurve.hyperbolic(1))
    assert [c.region for c in enumerate_equilibria(single)] == [Region.of(0)]


def test_enumeration_limit():
    n = 21
    pr = StoppingProblem(build_finite_chain(list(range(n)), np.eye(n)), np.ones(n),
                         DiscountCurve.hyperbolic(1))
    with pytest.raises(StateSpaceTooLarge):
        enumerate_equilibria(pr)
    with pytest.raises(StateSpaceTooLarge):
        optimal_equilibrium(pr)


def test_refine_pair_examples(two_equilibria_problem):
    tr = refine_pair(two_equilibria_problem, Region.of(1), Region.of(0, 1))
    assert tr.S_infinity == Region.of(1)
    same = refine_pair(two_equilibria_problem, Region.of(0, 1), Region.of(0, 1))
    assert same.S_infinity == Region.of(0, 1)
    with pytest.raises(NotAnEquilibrium):
        refine_pair(two_equilibria_problem, Region.of(0), Region.of(1))


@pytest.mark.parametrize("method", list(Method))
def test_optimal_on_two_equilibria(two_equilibria_problem, method):
    res = optimal_equilibrium(two_equilibria_problem, method=method)
    assert res.region == Region.of(1)
    assert res.exhaustive
    V = res.certificate.report.V
    assert V[0] == pytest.approx(1.143564, abs=1e-6)
    assert V[0] > 1.0
    assert np.all(res.dominance >= -2e-10)


def test_optimal_with_unique_equilibrium():
    ch = build_finite_chain([0, 1], [[0, 1], [1, 0]])
    pr = StoppingProblem(ch, [1.0, 1.0], DiscountCurve.hyperbolic(1))
    res = optimal_equilibrium(pr)
    assert res.region == Region.full(2)
    np.testing.assert_array_equal(res.dominance, [[0.0, 0.0]])


def test_optimal_without_equilibrium(no_equilibrium_problem):
    with pytest.raises(NoEquilibrium):
        optimal_equilibrium(no_equilibrium_problem)


def test_iterative_refine_beyond_the_limit_is_flagged(two_equilibria_problem):
    res = optimal_equilibrium(two_equilibria_problem, method="iterative_refine", limit_n=1,
                              seeds=[Region.full(2), Region.of(1)])
    assert not res.exhaustive
    assert res.region == Region.of(1)


def test_enumeration_matches_brute_force_with_an_independent_theta():
    rng = np.random.default_rng(5)
    for _ in range(15):
        n = int(rng.integers(2, 6))
        gamma = rng.uniform(0.3, 0.95)
        pr = random_problem(rng, n, DiscountCurve.exponential(gamma=gamma))
        P, f = pr.chain.transition, pr.payoff
        expected = []
        for S in oracles.all_subsets(n):
            mask = np.zeros(n, bool)
            mask[list(S)] = True
            J = oracles.exponential_J(P, f, mask, gamma)
            if S and frozenset(np.flatnonzero(f >= J - 1e-9).tolist()) == S:
                expected.append(S)
        got = {c.region.members for c in enumerate_equilibria(pr)}
        assert got == set(expected)


# -- properties -------------------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(st.data())
def test_theta_contains_the_core(data):
    pr = data.draw(problems())
    S = Region.from_mask(data.draw(region_masks(pr.n)))
    assert mandatory_core(pr) <= theta(pr, S)


@settings(max_examples=30, deadline=None)
@given(problems(max_n=5))
def test_equilibria_contain_the_core_and_intersection_is_optimal(pr):
    eqs = enumerate_equilibria(pr)
    core = mandatory_core(pr)
    assert all(core <= c.region for c in eqs)
    if eqs:
        res = optimal_equilibrium(pr)
        inter = Region.full(pr.n)
        for c in eqs:
            inter = inter & c.region
        assert res.region == inter
        for c in eqs:
            assert dominates(res.certificate.report, c.report, 2e-10)


@settings(max_examples=30, deadline=None)
@given(problems(max_n=6))
def test_monotone_traces_shrink_within_n_steps(pr):
    tr = iterate_to_fixpoint(pr)
    assert tr.precondition_held
    regions = tr.regions
    assert all(b <= a for a, b in zip(regions, regions[1:]))
    assert tr.converged and tr.fixed_at <= pr.n
    core = mandatory_core(pr)
    assert all(core <= r for r in regions)
    assert is_equilibrium(pr, tr.S_infinity).is_equilibrium


@settings(max_examples=30, deadline=None)
@given(problems(max_n=5))
def test_intersection_of_two_equilibria_improves_continuation(pr):
    eqs = enumerate_equilibria(pr)
    for a in eqs:
        for b in eqs:
            Ja = continuation_value(pr, a.region).J
            Jb = continuation_value(pr, b.region).J
            Jab = continuation_value(pr, a.region & b.region).J
            assert np.all(Jab >= np.maximum(Ja, Jb) - 2e-10)
