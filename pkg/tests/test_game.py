import warnings

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from mvno_pricing import game, solvers
from mvno_pricing.game import NONPART, PART, PayoffMatrix
from mvno_pricing.solvers import NegativePriceWarning

from conftest import markets

PP, PN, NP, NN = (PART, PART), (PART, NONPART), (NONPART, PART), (NONPART, NONPART)


def test_reference_matrix(p0):
    m = game.build_payoff_matrix(p0, 1)
    assert (m.cells[NN].r1, m.cells[NN].r2) == (16800, 8400)
    assert m.cells[PP].r1 == pytest.approx(15293.65, abs=1e-2)
    assert m.cells[PP].r2 == pytest.approx(9935.29, abs=1e-2)
    assert m.cells[PN].r2 == pytest.approx(8312.71, abs=1e-2)
    assert m.cells[NP].r1 == pytest.approx(14246.65, abs=1e-2)
    assert m.cells[PP].source == "part-part-fs(leader=1)"


def test_mixed_cells_share_one_price_vector(p0):
    m = game.build_payoff_matrix(p0, 1)
    s = solvers.solve_part_nonpart(p0, 1)
    assert (m.cells[PN].r1, m.cells[PN].r2) == (s.profit_mno1, s.profit_mno2)


def test_default_leader_is_larger_operator(p0):
    assert game.default_leader(p0) == 1
    assert game.default_leader(p0.replace(q2=700.0)) == 2
    assert game.default_leader(p0.replace(q2=600.0)) == 1


def test_dominant_strategy_game():
    m = PayoffMatrix.from_payoffs({PP: (5, 5), PN: (4, 1), NP: (1, 4), NN: (0, 0)})
    assert game.find_pure_nash(m).equilibria == [PP]


def test_coordination_game_reports_both_equilibria():
    m = PayoffMatrix.from_payoffs({PP: (2, 2), PN: (0, 0), NP: (0, 0), NN: (2, 2)})
    assert game.find_pure_nash(m).equilibria == [PP, NN]


def test_zero_margin_counts_as_equilibrium():
    m = PayoffMatrix.from_payoffs({PP: (1, 1), PN: (1, 1), NP: (1, 1), NN: (1, 1)})
    assert len(game.find_pure_nash(m).equilibria) == 4


def test_matching_pennies_has_no_pure_equilibrium():
    m = PayoffMatrix.from_payoffs({PP: (1, -1), PN: (-1, 1), NP: (-1, 1), NN: (1, -1)})
    assert game.find_pure_nash(m).equilibria == []


def test_reference_game_at_r0_10(p0):
    rep = game.partnership_report(p0, 1)
    assert PP in rep.equilibria
    assert rep.hypothesis_a and not rep.hypothesis_b
    assert rep.r0_below_r_bar_0 and not rep.r0_below_r_bar_20
    assert game.conclusions_consistent(rep)
    d_part, d_nonpart, holds = rep.customer_loss[1]
    assert d_part == pytest.approx(75.0, abs=1e-9)
    assert d_nonpart >= 75.0 and holds


def test_reference_game_at_r0_1_fails_the_cost_condition(p0):
    """At r0 = 1 the leader's optimal price falls below its network cost.

    Partnering then no longer pays for MNO 1, and the unique equilibrium is
    (NonPart, Part).
    """
    params = p0.replace(r0=1.0)
    rep = game.partnership_report(params, 1)
    assert rep.r0_below_r_bar_0 and rep.r0_below_r_bar_20
    assert not rep.fs_prices_above_cost
    assert solvers.solve_part_part_fs(params, 1).w1 < params.c1
    assert not rep.hypothesis_a and not rep.hypothesis_b
    assert rep.equilibria == [NP]
    assert game.conclusions_consistent(rep)


def test_customer_loss_equal_when_mvno_pinned_at_cheaper_price(p0):
    params = p0.replace(r0=1.0)
    d_part, d_nonpart, holds = game.customer_loss_check(params, 1, 1)
    assert d_part == pytest.approx(d_nonpart, rel=1e-12) and holds


def test_inflated_costs_switch_off_hypotheses(p0):
    params = p0.replace(c1=32.0)
    rep = game.partnership_report(params, 1)
    assert not rep.fs_prices_above_cost
    assert not rep.hypothesis_a


# -- properties ---------------------------------------------------------------


@given(markets())
def test_no_entry_cell_ignores_mvno_parameters(params):
    a = game.build_payoff_matrix(params).cells[NN]
    b = game.build_payoff_matrix(params.replace(gamma=0.5, r0=2.0 * params.r0 + 1.0, eps=0.9, ct0=0.0)).cells[NN]
    assert (a.r1, a.r2) == (b.r1, b.r2)
    d = params.derived
    assert a.r1 == pytest.approx(d.h1 * params.q1 - params.cf1, rel=1e-15)


@given(st.lists(st.floats(-100, 100), min_size=8, max_size=8), st.floats(-1e3, 1e3), st.sampled_from([1, 2]))
def test_equilibria_invariant_under_payoff_shift(vals, shift, player):
    pay = {PP: vals[0:2], PN: vals[2:4], NP: vals[4:6], NN: vals[6:8]}
    base = game.find_pure_nash(PayoffMatrix.from_payoffs(pay), tol=1e-9)
    k = player - 1
    shifted = {pr: tuple(v + (shift if j == k else 0.0) for j, v in enumerate(x)) for pr, x in pay.items()}
    moved = game.find_pure_nash(PayoffMatrix.from_payoffs(shifted), tol=1e-9)
    margins_equal = all(
        np.allclose(base.margins[pr], moved.margins[pr], atol=1e-9) for pr in pay
    )
    assert margins_equal
    clear = all(min(abs(m) for m in base.margins[pr]) > 1e-6 for pr in pay)
    if clear:
        assert base.equilibria == moved.equilibria


@settings(max_examples=40)
@given(markets())
def test_sufficient_conditions_imply_their_conclusions(params):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NegativePriceWarning)
        rep = game.partnership_report(params)
    assert game.conclusions_consistent(rep)
    if rep.hypothesis_a:
        assert rep.margins[PP][0] >= -1e-9 * params.derived.h1 * params.q1
        assert rep.customer_loss_holds


@settings(max_examples=40)
@given(markets(), st.floats(0.0, 1.0))
def test_cheaper_operator_keeps_all_customers_below_its_threshold(params, frac):
    r = solvers.thresholds(params).r_bar_20
    assume(r >= 0)
    params = params.replace(r0=frac * r)
    s = solvers.solve_part_nonpart(params, 2)
    assert s.boundary
    assert s.flows.d2 == pytest.approx(0.0, abs=1e-9 * params.q2)
