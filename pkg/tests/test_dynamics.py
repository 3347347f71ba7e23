import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arena.dynamics import (
    DynamicsConfig,
    LearnerState,
    RunTrace,
    ThresholdMonitor,
    _explore_and_prune,
    detect_pure_convergence,
    exploration_rate,
    gurm_run,
    lurm_run,
    prune_strategy,
    regret_update,
    run_algorithm,
    satisfaction,
    sorm_run,
    strategy_from_regrets,
    threshold_update,
)
from arena.game import GameSpec, from_matrix, resource_2x2_fixture, stag_hunt_fixture
from arena.models import ResourceGameParams, gen_resource_game

R1, R2 = 0, 1
STAG, HARE = 0, 1


def one_player(values):
    return GameSpec([len(values)], lambda i, a: float(values[a[0]]))


# -- regret update ---------------------------------------------------------------------


def test_first_regret_update():
    s = regret_update(LearnerState.fresh(2), 8.0, [8.0, 10.0])
    assert list(s.avg_regret) == [0.0, 2.0]
    assert s.t == 1


def test_zero_instant_regret_decays_average():
    s = LearnerState(np.array([3.0, -1.5]), np.array([0.5, 0.5]), t=4)
    s2 = regret_update(s, 1.0, [1.0, 1.0])
    assert np.allclose(s2.avg_regret, s.avg_regret * 4 / 5)


def test_two_step_average():
    s = regret_update(LearnerState.fresh(2), 0.0, [0.0, 2.0])
    s = regret_update(s, 0.0, [0.0, 0.0])
    assert s.avg_regret[1] == 1.0


def test_regret_update_length_mismatch():
    with pytest.raises(ValueError):
        regret_update(LearnerState.fresh(3), 0.0, [1.0, 2.0])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_incremental_average_matches_batch_mean(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 5))
    cf = rng.uniform(-50, 50, size=(1000, m))
    played = rng.integers(0, m, size=1000)
    realized = cf[np.arange(1000), played]
    s = LearnerState.fresh(m)
    for t in range(1000):
        s = regret_update(s, realized[t], cf[t])
    batch = (cf - realized[:, None]).mean(axis=0)
    assert np.allclose(s.avg_regret, batch, rtol=1e-9, atol=1e-9)


# -- strategy -------------------------------------------------------------------------------


def test_lock_puts_all_mass_on_current_action():
    s = LearnerState(np.array([1.0, 2.0, 3.0]), np.full(3, 1 / 3), action=1)
    assert list(strategy_from_regrets(s, 5, DynamicsConfig(), lock=True)) == [0.0, 1.0, 0.0]


def test_no_positive_regret_gives_uniform():
    s = LearnerState(np.array([-1.0, -2.0]), np.array([0.5, 0.5]))
    assert list(strategy_from_regrets(s, 3, DynamicsConfig(), lock=False)) == [0.5, 0.5]


def test_exploratory_matching():
    cfg = DynamicsConfig(delta=0.1, gamma=0.5, prune=False)
    s = LearnerState(np.array([2.0, 0.0]), np.array([0.5, 0.5]))
    assert np.allclose(strategy_from_regrets(s, 1, cfg, lock=False), [0.95, 0.05], atol=1e-15)


def test_lock_needs_a_played_action():
    with pytest.raises(ValueError):
        strategy_from_regrets(LearnerState.fresh(2), 1, DynamicsConfig(), lock=True)


def test_exploration_rate_decays():
    assert exploration_rate(1, 0.5, 0.5) == 0.5
    assert exploration_rate(100, 0.5, 0.5) == 0.05


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=8), st.integers(1, 10**5),
       st.floats(0.01, 1.0), st.floats(0.01, 1.0), st.booleans())
def test_strategies_are_distributions_with_exploration_floor(regrets, t, delta, gamma, prune):
    cfg = DynamicsConfig(delta=delta, gamma=gamma, prune=prune)
    r = np.array(regrets)
    p = strategy_from_regrets(LearnerState(r, np.full(len(r), 1 / len(r))), t, cfg, lock=False)
    assert np.all(p >= 0)
    assert math.isclose(p.sum(), 1.0, abs_tol=1e-9)
    if not prune and np.any(r > 0):
        floor = exploration_rate(t, delta, gamma) / len(r)
        assert np.all(p >= floor * (1 - 1e-12))


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**6), st.booleans(), st.booleans())
def test_fused_strategy_path_matches_reference(seed, prune, ragged):
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(1, 5)), int(rng.integers(1, 40))
    counts = rng.integers(1, m + 1, size=n) if ragged else np.full(n, m)
    mask = np.arange(m)[None, :] < counts[:, None]
    R = np.where(mask, rng.normal(size=(n, m)) * (rng.random((n, m)) < 0.5), 0.0)
    t = int(rng.integers(1, 1000))
    cfg = DynamicsConfig(prune=prune)
    uniform = mask / mask.sum(axis=1, keepdims=True)
    fused = _explore_and_prune(R, None if mask.all() else mask, uniform,
                               exploration_rate(t, cfg.delta, cfg.gamma), cfg.prune_eps if prune else None)
    for i in range(n):
        c = int(counts[i])
        ref = strategy_from_regrets(LearnerState(R[i, :c], uniform[i, :c]), t, cfg, lock=False)
        assert np.allclose(fused[i, :c], ref, atol=1e-12)
        assert np.all(fused[i, c:] == 0)


# -- pruning ------------------------------------------------------------------------------------


def test_prune_keeps_entries_above_threshold():
    assert list(prune_strategy([0.95, 0.05], 0.03)) == [0.95, 0.05]
    assert list(prune_strategy([0.5, 0.5], 0.03)) == [0.5, 0.5]


def test_prune_zeroes_and_renormalises():
    assert list(prune_strategy([0.97, 0.02, 0.01], 0.03)) == [1.0, 0.0, 0.0]


def test_prune_everything_small_keeps_lowest_index_max():
    p = np.full(50, 0.02)
    out = prune_strategy(p, 0.03)
    assert out[0] == 1.0 and out[1:].sum() == 0


# -- threshold --------------------------------------------------------------------------------


def test_threshold_from_resource_deviations():
    g = resource_2x2_fixture()
    mon = threshold_update(ThresholdMonitor(), g.deviation_globals((R1, R1)))
    assert mon.U == 10


def test_threshold_never_decreases():
    mon = ThresholdMonitor(U=12.0)
    threshold_update(mon, [np.array([3.0, 4.0]), np.array([11.0])])
    assert mon.U == 12.0


def test_threshold_rises_to_best_counterfactual():
    mon = threshold_update(ThresholdMonitor(U=5.0), [np.array([7.0, 1.0]), np.array([2.0])])
    assert mon.U == 7.0


def test_satisfaction_ratio():
    assert satisfaction(ThresholdMonitor(U=10.0), 10.0) == 1.0
    assert satisfaction(ThresholdMonitor(U=10.0), 8.0) == 0.8
    assert satisfaction(ThresholdMonitor(U=0.0), 3.0) == 0.0


# -- convergence detection ------------------------------------------------------------------------


def test_pure_and_stable_window_converges():
    strategies = [np.array([0.0, 1.0]), np.array([1.0, 0.0])]
    assert detect_pure_convergence(strategies, [(1, 0)] * 50, window=50)


def test_mixed_strategy_does_not_converge():
    strategies = [np.array([0.8, 0.2]), np.array([1.0, 0.0])]
    assert not detect_pure_convergence(strategies, [(0, 0)] * 50, window=50)


def test_profile_change_inside_window_does_not_converge():
    strategies = [np.array([0.0, 1.0]), np.array([1.0, 0.0])]
    history = [(1, 0)] * 30 + [(0, 0)] + [(1, 0)] * 19
    assert not detect_pure_convergence(strategies, history, window=50)


def test_short_history_does_not_converge():
    strategies = [np.array([1.0])]
    assert not detect_pure_convergence(strategies, [(0,)] * 10, window=50)


def test_positive_deviation_gain_blocks_convergence():
    strategies = [np.array([1.0, 0.0])]
    assert detect_pure_convergence(strategies, [(0,)] * 5, window=5, deviation_gains=[0.0])
    assert not detect_pure_convergence(strategies, [(0,)] * 5, window=5, deviation_gains=[0.5])


# -- whole runs -------------------------------------------------------------------------------------


def test_sorm_resource_fixture_reaches_optimum():
    r = sorm_run(resource_2x2_fixture(), DynamicsConfig(seed=3))
    assert r.profile == (R2, R1)
    assert r.W == 10
    assert r.status == "certified"


def test_sorm_stag_hunt_reaches_mutual_stag():
    r = sorm_run(stag_hunt_fixture(), DynamicsConfig(seed=7))
    assert r.profile == (STAG, STAG)
    assert r.W == 6
    assert r.trace.profiles[-1] == (STAG, STAG)


def test_sorm_single_player_picks_argmax():
    r = sorm_run(one_player([1.0, 5.0, 2.0]), DynamicsConfig(seed=0))
    assert r.profile == (1,)
    assert r.W == 5.0


@pytest.mark.parametrize("seed", range(6))
def test_lurm_fixtures_end_in_a_pure_equilibrium(seed):
    assert lurm_run(resource_2x2_fixture(), DynamicsConfig(seed=seed)).profile in {(R1, R2), (R2, R1)}
    assert lurm_run(stag_hunt_fixture(), DynamicsConfig(seed=seed)).profile in {(STAG, STAG), (HARE, HARE)}


def test_lurm_finds_dominant_strategies():
    # action 1 strictly dominates action 0 for both players
    row = [[1.0, 0.0], [2.0, 0.5]]
    col = [[1.0, 2.0], [0.0, 0.5]]
    r = lurm_run(from_matrix(np.array([row, col])), DynamicsConfig(seed=1))
    assert r.profile == (1, 1)
    assert r.status == "converged"


def test_gurm_single_player_argmax():
    assert gurm_run(one_player([4.0, -1.0, 9.0, 3.0]), DynamicsConfig(seed=2)).profile == (2,)


def test_global_regret_toward_lone_stag_is_negative():
    dev = stag_hunt_fixture().deviation_globals((HARE, HARE))
    assert dev[0, STAG] - dev[0, HARE] == -1.0


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10**4))
def test_threshold_monotone_and_ratio_bounded(seed):
    g = gen_resource_game(ResourceGameParams(5, 3, seed=seed))
    r = sorm_run(g, DynamicsConfig(seed=seed, max_iterations=3000))
    U = np.array(r.trace.U)
    assert np.all(np.diff(U) >= 0)
    assert np.all(np.array(r.trace.omega) <= 1 + 1e-9)
    assert np.all(np.array(r.trace.global_utility) <= U * (1 + 1e-12))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10**4))
def test_sorm_answer_is_a_welfare_rest_point(seed):
    g = gen_resource_game(ResourceGameParams(6, 3, seed=seed))
    r = sorm_run(g, DynamicsConfig(seed=seed))
    assert r.checkpoints
    dev = g.deviation_globals(r.profile)
    assert dev.max() <= r.W + 1e-9
    assert r.W == max(c.W for c in r.checkpoints)


def test_iteration_budget_respected():
    g = gen_resource_game(ResourceGameParams(8, 4, seed=1))
    r = sorm_run(g, DynamicsConfig(seed=1, max_iterations=300))
    assert r.iterations <= 300 and len(r.trace) == r.iterations
    assert r.status == "budget"


@pytest.mark.parametrize("algo", ["sorm", "lurm", "gurm"])
def test_runs_are_bit_reproducible(algo):
    g = gen_resource_game(ResourceGameParams(6, 3, seed=4))
    a = run_algorithm(algo, g, DynamicsConfig(seed=9, max_iterations=2000))
    b = run_algorithm(algo, g, DynamicsConfig(seed=9, max_iterations=2000))
    assert a.trace.to_csv() == b.trace.to_csv()


def test_message_and_query_counts_in_trace():
    g = gen_resource_game(ResourceGameParams(4, 3, seed=0))
    for algo in ("sorm", "gurm"):
        r = run_algorithm(algo, g, DynamicsConfig(seed=0, max_iterations=200))
        k = len(r.trace)
        assert r.trace.cumulative_queries[-1] == 4 * 3 * 3 * k
        assert r.trace.cumulative_messages[-1] == 4 * 3 * k
    r = lurm_run(g, DynamicsConfig(seed=0, T=200))
    assert r.trace.cumulative_queries[-1] == 0


def test_trace_csv_round_trip(tmp_path):
    r = sorm_run(stag_hunt_fixture(), DynamicsConfig(seed=1))
    path = tmp_path / "trace.csv"
    r.trace.to_csv(path)
    back = RunTrace.from_csv(path)
    assert back.to_csv() == r.trace.to_csv()
    header = path.read_text().splitlines()[0].split(",")
    assert header[:8] == ["round", "t", "global_utility", "U", "omega", "max_avg_regret", "pure_profile_flag",
                          "cumulative_messages"]


def test_baseline_traces_mark_threshold_as_missing():
    r = gurm_run(stag_hunt_fixture(), DynamicsConfig(seed=0))
    assert math.isnan(r.trace.U[0]) and math.isnan(r.final_omega)


@pytest.mark.parametrize("kwargs", [dict(delta=0.0), dict(delta=1.5), dict(gamma=0.0), dict(T=0), dict(max_rounds=0),
                                    dict(prune_eps=1.0), dict(delta_U=-1.0), dict(max_iterations=0)])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        DynamicsConfig(**kwargs)


def test_config_dict_round_trip_and_unknown_keys():
    cfg = DynamicsConfig(seed=5, T=77, prune=False)
    assert DynamicsConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError, match="bogus"):
        DynamicsConfig.from_dict({"bogus": 1})


def test_unknown_algorithm():
    with pytest.raises(ValueError, match="unknown algorithm"):
        run_algorithm("fictitious", stag_hunt_fixture())
