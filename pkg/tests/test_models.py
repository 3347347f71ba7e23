import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arena.game import counterfactual_global, counterfactual_payoff
from arena.models import (
    ResourceGame,
    ResourceGameParams,
    TaskGameParams,
    TaskInstance,
    gen_resource_game,
    gen_task_game,
    load_instance,
    save_instance,
    survival_prob,
    target_utility,
    task_global_utility,
)


def logistic(d, alpha, beta):
    return 1.0 / (1.0 + math.exp(-alpha * d + beta))


# -- resource selection --------------------------------------------------------------


def test_rate_split_among_three_users():
    rates = np.array([[60.0, 1.0], [10.0, 1.0], [20.0, 1.0]])
    g = ResourceGame(rates)
    assert g.payoff((0, 0, 0), 0) == 20.0


def test_lone_user_gets_full_rate():
    rates = np.array([[60.0, 7.0], [10.0, 1.0]])
    g = ResourceGame(rates)
    assert g.payoff((1, 0), 0) == 7.0
    assert g.payoff((1, 0), 1) == 10.0


def test_resource_generator_is_seed_deterministic():
    a = gen_resource_game(ResourceGameParams(6, 3, seed=11))
    b = gen_resource_game(ResourceGameParams(6, 3, seed=11))
    c = gen_resource_game(ResourceGameParams(6, 3, seed=12))
    assert np.array_equal(a.rates, b.rates)
    assert not np.array_equal(a.rates, c.rates)


def test_resource_rates_within_range():
    g = gen_resource_game(ResourceGameParams(30, 7, rate_min=5, rate_max=9, seed=1))
    assert g.rates.shape == (30, 7)
    assert g.rates.min() >= 5 and g.rates.max() <= 9
    assert g.action_counts == (7,) * 30


@pytest.mark.parametrize("kwargs", [dict(n_players=0, n_resources=2), dict(n_players=2, n_resources=0),
                                    dict(n_players=2, n_resources=2, rate_min=0),
                                    dict(n_players=2, n_resources=2, rate_min=5, rate_max=4)])
def test_resource_params_validated(kwargs):
    with pytest.raises(ValueError):
        ResourceGameParams(**kwargs)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 5), st.integers(0, 10**6))
def test_resource_payoff_never_exceeds_rate_and_sums_to_welfare(n, m, seed):
    g = gen_resource_game(ResourceGameParams(n, m, seed=seed))
    rng = np.random.default_rng(seed)
    prof = tuple(int(x) for x in rng.integers(0, m, size=n))
    u = g.payoffs(prof)
    assert np.all(u <= g.rates[np.arange(n), prof] + 1e-12)
    loads = np.bincount(prof, minlength=m)
    expected = sum(g.rates[i, prof[i]] / loads[prof[i]] for i in range(n))
    assert math.isclose(g.global_utility(prof), expected, rel_tol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 5), st.integers(0, 10**6))
def test_resource_vectorised_deviations_match_reference(n, m, seed):
    g = gen_resource_game(ResourceGameParams(n, m, seed=seed))
    prof = tuple(int(x) for x in np.random.default_rng(seed).integers(0, m, size=n))
    dp, dg = g.deviation_payoffs(prof), g.deviation_globals(prof)
    for i in range(n):
        for k in range(m):
            assert math.isclose(dp[i, k], counterfactual_payoff(g, prof, i, k), rel_tol=1e-12)
            assert math.isclose(dg[i, k], counterfactual_global(g, prof, i, k), rel_tol=1e-12, abs_tol=1e-9)


# -- survival model -----------------------------------------------------------------------


def test_survival_half_where_exponent_vanishes():
    assert survival_prob(0.5, 2.0, 1.0) == 0.5


def test_survival_at_zero_distance():
    assert math.isclose(survival_prob(0.0, 2.0, 1.0), 1.0 / (1.0 + math.e), rel_tol=1e-12)
    assert round(float(survival_prob(0.0, 2.0, 1.0)), 6) == 0.268941


def test_survival_tends_to_one_far_away():
    assert survival_prob(1e3, 2.0, 1.0) == 1.0
    assert survival_prob(20.0, 2.0, 1.0) > 1 - 1e-15


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 5), st.floats(1e-3, 5))
def test_survival_strictly_increasing_and_in_unit_interval(d, step):
    a, b = survival_prob(d, 2.0, 1.0), survival_prob(d + step, 2.0, 1.0)
    assert 0 < a < 1
    assert b > a
    assert math.isclose(a, logistic(d, 2.0, 1.0), rel_tol=1e-12)


# -- target assignment -------------------------------------------------------------------


def two_target_instance(values, beta=1.0, d1=0.5, d2=0.5):
    """Agent 0 at the origin, agent 1 at x=1; target 0 at distance d1 from
    agent 0, target 1 at distance d2 from agent 1."""
    agents = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]
    targets = [[d1, 0.0, 0.0], [1.0, d2, 0.0]]
    return TaskInstance(np.array(agents), np.array(targets), np.array(values, dtype=float), alpha=2.0, beta=beta)


def test_unassigned_target_is_worth_nothing():
    inst = two_target_instance([50, 80])
    assert target_utility(inst, 1, (0, 0)) == 0.0


def test_single_agent_target_utility():
    inst = TaskInstance(np.array([[0.0, 0, 0]]), np.array([[0.5, 0, 0]]), np.array([50.0]))
    assert inst.survival()[0, 0] == 0.5
    assert target_utility(inst, 0, (0,)) == 25.0


def test_two_agents_on_one_target():
    inst = TaskInstance(np.array([[0.0, 0, 0], [1.0, 0, 0]]), np.array([[0.5, 0, 0]]), np.array([50.0]))
    assert np.allclose(inst.survival()[:, 0], [0.5, 0.5])
    assert target_utility(inst, 0, (0, 0)) == 37.5


def test_two_agents_on_distinct_targets():
    # with beta = ln 3 the survival is 0.25 at distance 0 and 0.5 at ln(3)/2
    beta = math.log(3.0)
    inst = two_target_instance([50, 80], beta=beta, d1=beta / 2, d2=0.0)
    p = inst.survival()
    assert math.isclose(p[0, 0], 0.5, rel_tol=1e-12)
    assert math.isclose(p[1, 1], 0.25, rel_tol=1e-12)
    assert math.isclose(task_global_utility(inst, (0, 1)), 85.0, rel_tol=1e-12)


def test_single_agent_global_equals_its_target():
    inst = TaskInstance(np.array([[0.1, 0.2, 0.3]]), np.array([[0.5, 0.5, 0.5], [0.9, 0.1, 0.2]]),
                        np.array([40.0, 70.0]))
    assert task_global_utility(inst, (1,)) == target_utility(inst, 1, (1,))


@pytest.mark.parametrize("n,m", [(20, 40), (40, 80)])
def test_task_generator_action_counts(n, m):
    game, inst = gen_task_game(TaskGameParams(n, m, seed=5))
    assert game.action_counts == (m,) * n
    assert inst.values.min() >= 10 and inst.values.max() <= 100
    assert inst.agent_positions.min() >= 0 and inst.agent_positions.max() <= 1
    assert inst.target_positions.min() >= 0 and inst.target_positions.max() <= 1


def test_task_generator_is_seed_deterministic():
    _, a = gen_task_game(TaskGameParams(5, 7, seed=3))
    _, b = gen_task_game(TaskGameParams(5, 7, seed=3))
    assert np.array_equal(a.agent_positions, b.agent_positions)
    assert np.array_equal(a.values, b.values)


def test_task_params_validated():
    with pytest.raises(ValueError):
        TaskGameParams(0, 3)
    with pytest.raises(ValueError):
        TaskGameParams(2, 3, alpha=float("inf"))
    with pytest.raises(ValueError):
        TaskGameParams(2, 3, value_min=5, value_max=1)


def test_instance_rejects_bad_shapes():
    with pytest.raises(ValueError):
        TaskInstance(np.zeros((2, 2)), np.zeros((3, 3)), np.ones(3))
    with pytest.raises(ValueError):
        TaskInstance(np.zeros((2, 3)), np.zeros((3, 3)), np.ones(2))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 10**6))
def test_task_welfare_bounded_and_shares_sum(n, m, seed):
    game, inst = gen_task_game(TaskGameParams(n, m, seed=seed))
    prof = tuple(int(x) for x in np.random.default_rng(seed).integers(0, m, size=n))
    w = task_global_utility(inst, prof)
    assert 0 <= w <= inst.values.sum()
    assert math.isclose(game.global_utility(prof), w, rel_tol=1e-12)
    assert math.isclose(game.payoffs(prof).sum(), w, rel_tol=1e-12)
    assert math.isclose(w, sum(target_utility(inst, k, prof) for k in range(m)), rel_tol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 10**6))
def test_task_vectorised_deviations_match_reference(n, m, seed):
    game, _ = gen_task_game(TaskGameParams(n, m, seed=seed))
    prof = tuple(int(x) for x in np.random.default_rng(seed).integers(0, m, size=n))
    dp, dg = game.deviation_payoffs(prof), game.deviation_globals(prof)
    for i in range(n):
        for k in range(m):
            assert math.isclose(dp[i, k], counterfactual_payoff(game, prof, i, k), rel_tol=1e-9, abs_tol=1e-9)
            assert math.isclose(dg[i, k], counterfactual_global(game, prof, i, k), rel_tol=1e-9, abs_tol=1e-9)


# -- instance files ------------------------------------------------------------------------


@pytest.mark.parametrize("make", [
    lambda: gen_resource_game(ResourceGameParams(4, 3, seed=2)),
    lambda: gen_task_game(TaskGameParams(3, 4, seed=2))[0],
])
def test_instance_file_round_trip(tmp_path, make):
    game = make()
    back = load_instance(save_instance(game, tmp_path / "g.json"))
    assert type(back) is type(game)
    for prof in game.profiles():
        assert np.array_equal(back.payoffs(prof), game.payoffs(prof))


def test_matrix_instance_round_trip(tmp_path):
    from arena.game import TensorGame, stag_hunt_fixture

    back = load_instance(save_instance(stag_hunt_fixture(), tmp_path / "s.json"))
    assert isinstance(back, TensorGame)
    assert back.labels == [["stag", "hare"], ["stag", "hare"]]
    assert back.payoff((0, 0), 0) == 3.0


def test_unreadable_instance_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ValueError):
        load_instance(bad)
    with pytest.raises(ValueError):
        load_instance(tmp_path / "missing.json")
    (tmp_path / "odd.json").write_text('{"kind": "hexagon"}')
    with pytest.raises(ValueError, match="hexagon"):
        load_instance(tmp_path / "odd.json")
