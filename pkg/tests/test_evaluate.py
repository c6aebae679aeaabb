import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stopeq import DiscountCurve, Region, StoppingProblem, build_finite_chain
from stopeq.errors import DimensionMismatch, HorizonExceeded, IndexOutOfRange, ValidationError
from stopeq.evaluate import (
    continuation_value,
    equilibrium_value,
    exact_exponential_value,
    hitting_profile,
)
from stopeq.markov import LatticeSpec, build_lattice_chain

import oracles
from instances import problems, random_problem, region_masks


def test_example_values_under_fast_decay(no_equilibrium_problem):
    pr = no_equilibrium_problem
    assert continuation_value(pr, Region.of(1)).J[1] == pytest.approx(1.5, abs=1e-12)
    assert continuation_value(pr, Region.of(0, 1)).J[0] == pytest.approx(9 / 8, abs=1e-12)


def test_empty_region_has_zero_value(no_equilibrium_problem):
    rep = continuation_value(no_equilibrium_problem, Region.empty())
    np.testing.assert_array_equal(rep.J, [0.0, 0.0])
    assert rep.horizon_used == 0


def test_geometric_example_against_closed_form(two_equilibria_problem):
    rep = continuation_value(two_equilibria_problem, Region.of(1))
    expected = oracles.two_state_geometric_J1(7 / 12, 0.99)
    assert expected == pytest.approx(7 / 6 * 0.495 / 0.505, rel=1e-15)
    assert rep.J[0] == pytest.approx(expected, abs=1e-9)
    assert rep.tail_bound.max() <= 1e-10


def test_equilibrium_value_on_and_off_region(two_equilibria_problem):
    rep = equilibrium_value(two_equilibria_problem, Region.of(1))
    assert rep.V[1] == 2.0
    assert rep.V[0] == pytest.approx(7 / 6 * 0.495 / 0.505, abs=1e-9)


def test_full_region_value_is_payoff(two_equilibria_problem):
    rep = equilibrium_value(two_equilibria_problem, Region.full(2))
    np.testing.assert_array_equal(rep.V, two_equilibria_problem.payoff)


def test_sup_value_flags_non_equilibrium(no_equilibrium_problem):
    rep = equilibrium_value(no_equilibrium_problem, Region.of(0, 1))
    assert rep.V[0] == 1.0
    assert rep.V_sup[0] == pytest.approx(9 / 8)


def test_exponential_solve_matches_series_on_two_state_chain(two_state_chain):
    pr = StoppingProblem(two_state_chain, [1.0, 2.0], DiscountCurve.exponential(gamma=0.5))
    exact = exact_exponential_value(pr, Region.of(1))
    series = continuation_value(pr, Region.of(1)).J
    # entry at t with probability 2^-t: J(1) = 2 sum (1/4)^t = 2/3
    assert exact[0] == pytest.approx(2 / 3, abs=1e-14)
    np.testing.assert_allclose(series, exact, atol=1e-10)


def test_exponential_solve_edge_cases(two_state_chain):
    pr = StoppingProblem(two_state_chain, [1.0, 2.0], DiscountCurve.exponential(gamma=0.5))
    np.testing.assert_array_equal(exact_exponential_value(pr, Region.empty()), [0, 0])
    # entry at t = 1 with certainty
    ch = build_finite_chain(["a", "b"], [[0, 1], [0, 1]])
    pr2 = StoppingProblem(ch, [0.0, 3.0], DiscountCurve.exponential(gamma=0.7))
    assert exact_exponential_value(pr2, Region.of(1))[0] == pytest.approx(0.7 * 3.0)


def test_exponential_solve_needs_gamma_for_other_curves(two_equilibria_problem):
    with pytest.raises(ValidationError):
        exact_exponential_value(two_equilibria_problem, Region.of(1))
    with pytest.raises(ValidationError):
        exact_exponential_value(two_equilibria_problem, Region.of(1), gamma=1.0)
    J = exact_exponential_value(two_equilibria_problem, Region.of(1), gamma=0.5)
    assert J[0] == pytest.approx(2 / 3)


def test_mass_that_cannot_reach_the_region_is_dropped():
    # state 0 leaks into an absorbing trap; hyperbolic tails would never close otherwise
    ch = build_finite_chain([0, 1, 2], [[0.5, 0.25, 0.25], [0, 1, 0], [0, 0, 1]])
    pr = StoppingProblem(ch, [0.0, 1.0, 0.0], DiscountCurve.hyperbolic(0.01))
    rep = continuation_value(pr, Region.of(1))
    assert rep.horizon_used < 100
    w = [0.25 * 0.5 ** (t - 1) for t in range(1, 200)]
    expected = sum(wt / (1 + 0.01 * t) for t, wt in enumerate(w, start=1))
    assert rep.J[0] == pytest.approx(expected, abs=1e-10)
    assert rep.J[2] == 0.0


def test_horizon_cap_is_enforced():
    ch = build_finite_chain([0, 1], [[1 - 1e-6, 1e-6], [0, 1]])
    pr = StoppingProblem(ch, [0.0, 1.0], DiscountCurve.hyperbolic(0.01))
    with pytest.raises(HorizonExceeded):
        continuation_value(pr, Region.of(1), max_horizon=50)


def test_bad_inputs(two_equilibria_problem):
    with pytest.raises(ValidationError):
        continuation_value(two_equilibria_problem, Region.of(1), tol=0)
    with pytest.raises(IndexOutOfRange):
        continuation_value(two_equilibria_problem, Region.of(5))
    with pytest.raises(DimensionMismatch):
        StoppingProblem(two_equilibria_problem.chain, [1.0], DiscountCurve.hyperbolic(1))
    with pytest.raises(ValidationError):
        StoppingProblem(two_equilibria_problem.chain, [1.0, -1.0], DiscountCurve.hyperbolic(1))


def test_region_set_operations():
    a, b = Region.of(0, 1), Region.of(1, 2)
    assert (a & b) == Region.of(1)
    assert (a | b) == Region.of(0, 1, 2)
    assert Region.of(1) <= a and Region.of(1) < a and not a < a
    assert list(Region.of(2, 0)) == [0, 2]
    np.testing.assert_array_equal(Region.of(1).mask(3), [False, True, False])
    assert Region.from_mask([True, False, True]) == Region.of(0, 2)
    with pytest.raises(IndexOutOfRange):
        Region.of(-1)


def test_labels_sorted_by_coordinate():
    ch = build_finite_chain([3, 1, 2], np.eye(3))
    pr = StoppingProblem(ch, [1, 1, 1], DiscountCurve.hyperbolic(1))
    assert pr.labels_of(Region.full(3)) == [1, 2, 3]
    assert pr.region(["3", 1]) == Region.of(0, 1)


# -- hitting profiles -------------------------------------------------------

def test_geometric_profile_on_two_state_chain(no_equilibrium_problem):
    hp = hitting_profile(no_equilibrium_problem, Region.of(1), 20, starts=[0])
    t = np.arange(1, 21)
    np.testing.assert_allclose(hp.entry[0, :, 1], 0.5 ** t, rtol=1e-15)
    np.testing.assert_allclose(hp.time_mass[0], 0.5 ** t, rtol=1e-15)


def test_trapped_start_keeps_all_mass():
    ch = build_finite_chain([0, 1, 2], [[0, 1, 0], [0, 1, 0], [0, 0, 1]])
    pr = StoppingProblem(ch, [1, 1, 1], DiscountCurve.hyperbolic(1))
    hp = hitting_profile(pr, Region.of(2), 5, starts=[0])
    assert hp.time_mass.sum() == 0
    np.testing.assert_array_equal(hp.surviving[0], np.ones(5))
    np.testing.assert_array_equal(hp.trapped[0], np.ones(5))


def test_deterministic_cycle_enters_at_three():
    ch = build_finite_chain([0, 1, 2, 3], [[0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1], [1, 0, 0, 0]])
    pr = StoppingProblem(ch, [0, 0, 0, 1], DiscountCurve.hyperbolic(1))
    hp = hitting_profile(pr, Region.of(3), 6, starts=[0])
    np.testing.assert_array_equal(hp.time_mass[0], [0, 0, 1, 0, 0, 0])
    assert hp.value(pr.discount, pr.payoff)[0] == pytest.approx(1 / (1 + 3))


def test_profile_requires_positive_horizon(two_equilibria_problem):
    with pytest.raises(ValidationError):
        hitting_profile(two_equilibria_problem, Region.of(1), 0)
    with pytest.raises(IndexOutOfRange):
        hitting_profile(two_equilibria_problem, Region.of(1), 3, starts=[7])


def test_profile_matches_path_enumeration():
    rng = np.random.default_rng(11)
    for _ in range(10):
        n = int(rng.integers(2, 5))
        pr = random_problem(rng, n, DiscountCurve.hyperbolic(0.5))
        S = rng.random(n) < 0.4
        T = 6
        hp = hitting_profile(pr, Region.from_mask(S), T)
        for x in range(n):
            mass, survive = oracles.first_entry_by_paths(pr.chain.transition, S, x, T)
            np.testing.assert_allclose(hp.entry[x], mass, atol=1e-15)
            assert hp.surviving[x, -1] == pytest.approx(survive, abs=1e-14)


def test_wide_lattice_agrees_with_the_solve():
    ch = build_lattice_chain(LatticeSpec(u=1.05, p=0.45, window=150, boundary="reflect"))
    f = np.maximum(1.0 - ch.coords, 0.0)
    pr = StoppingProblem(ch, f, DiscountCurve.exponential(gamma=0.97))
    S = Region.from_mask(ch.coords <= 0.8)
    np.testing.assert_allclose(continuation_value(pr, S).J, exact_exponential_value(pr, S),
                               atol=1e-10)


# -- properties -------------------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(st.data())
def test_values_lie_between_zero_and_the_discounted_max(data):
    pr = data.draw(problems())
    S = data.draw(region_masks(pr.n))
    J = continuation_value(pr, Region.from_mask(S)).J
    assert np.all(J >= 0)
    assert np.all(J <= pr.M * pr.discount(1) + 1e-12)


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_series_matches_exponential_solve(data):
    gamma = data.draw(st.floats(0.3, 0.95))
    pr = data.draw(problems(curve=DiscountCurve.exponential(gamma=gamma), max_n=8))
    S = data.draw(region_masks(pr.n))
    rep = continuation_value(pr, Region.from_mask(S))
    oracle = oracles.exponential_J(pr.chain.transition, pr.payoff, S, gamma)
    np.testing.assert_allclose(rep.J, oracle, atol=1e-10)
    np.testing.assert_allclose(exact_exponential_value(pr, Region.from_mask(S)), oracle, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.data())
def test_two_exponential_mixtures_match_linear_solves(data):
    lam, r1, r2 = (data.draw(st.floats(0.1, 0.9)), data.draw(st.floats(0.05, 1.0)),
                   data.draw(st.floats(0.05, 1.0)))
    curve = DiscountCurve.pseudo_exponential(lam, r1, r2)
    pr = data.draw(problems(curve=curve))
    S = data.draw(region_masks(pr.n))
    oracle = oracles.mixture_J(pr.chain.transition, pr.payoff, S, [lam, 1 - lam],
                               [np.exp(-r1), np.exp(-r2)])
    np.testing.assert_allclose(continuation_value(pr, Region.from_mask(S)).J, oracle, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.data())
def test_quasi_hyperbolic_is_a_scaled_exponential(data):
    b, rho = data.draw(st.floats(0.2, 1.0)), data.draw(st.floats(0.3, 0.95))
    pr = data.draw(problems(curve=DiscountCurve.quasi_hyperbolic(b, rho)))
    S = data.draw(region_masks(pr.n))
    oracle = b * oracles.exponential_J(pr.chain.transition, pr.payoff, S, rho)
    np.testing.assert_allclose(continuation_value(pr, Region.from_mask(S)).J, oracle, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.data())
def test_tighter_tolerance_moves_values_by_at_most_the_old_bound(data):
    pr = data.draw(problems())
    S = Region.from_mask(data.draw(region_masks(pr.n)))
    loose = continuation_value(pr, S, tol=1e-4)
    tight = continuation_value(pr, S, tol=1e-12)
    assert np.all(loose.tail_bound <= 1e-4)
    assert np.all(np.abs(tight.J - loose.J) <= loose.tail_bound + 1e-12)


@settings(max_examples=40, deadline=None)
@given(st.data())
def test_profile_masses_and_survivors_sum_to_one(data):
    pr = data.draw(problems(max_n=6))
    S = Region.from_mask(data.draw(region_masks(pr.n)))
    T = data.draw(st.integers(1, 30))
    hp = hitting_profile(pr, S, T)
    total = hp.time_mass.cumsum(axis=1) + hp.surviving
    np.testing.assert_allclose(total, 1.0, atol=1e-12)
