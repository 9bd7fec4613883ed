import itertools
import math
import warnings
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from elephant_abm.calibration import distributions as dist
from elephant_abm.calibration.hmm import (
    ConvergenceWarning,
    HmmFit,
    emission_logs,
    fit_families,
    fit_hmm,
    path_loglik,
    series_loglik,
    state_posteriors,
    stationary_distribution,
    viterbi_decode,
)
from elephant_abm.calibration.nsga2 import (
    EvaluationError,
    GaConfig,
    crowding_distance,
    dominates,
    nondominated_sort,
    nsga2,
    polynomial_mutation,
    sbx_crossover,
)
from elephant_abm.calibration.objectives import (
    Estimate,
    MovementObjectives,
    apply_variables,
    hinge_penalties,
    movement_objectives,
)
from elephant_abm.calibration.steps import (
    REFERENCE_MODEL,
    RelocationTrack,
    StepSeries,
    extract_steps,
    read_track_csv,
    simulate_series,
    track_from_series,
    wrap_angle,
    write_track_csv,
)
from elephant_abm.calibration.tuning import NoFeasibleTolerance, steep_tick_fraction, tune_slope_tolerance
from elephant_abm.engine import LandscapeConfig, RunConfig
from elephant_abm.environment import SyntheticLandscapeSpec


def reference_fit(initial=None):
    m = REFERENCE_MODEL
    g = np.asarray(m["transition"])
    init = stationary_distribution(g) if initial is None else np.asarray(initial, float)
    return HmmFit("gamma", "vonmises", init, g, m["step_params"], m["turn_params"], 0.0, 0)


# ------------------------------------------------------------ step extraction


def test_step_length_in_km():
    s = extract_steps(RelocationTrack.regular([0, 30, 60], [0, 0, 0]))
    assert s.lengths == pytest.approx([0.030, 0.030])


def test_collinear_turn_is_zero_and_u_turn_is_pi():
    s = extract_steps(RelocationTrack.regular([0, 30, 60, 30], [0, 0, 0, 0]))
    assert np.isnan(s.turns[0])
    assert s.turns[1] == 0.0
    assert s.turns[2] == pytest.approx(math.pi)


def test_left_turn_is_positive():
    s = extract_steps(RelocationTrack.regular([0, 10, 10], [0, 0, 10]))
    assert s.turns[1] == pytest.approx(math.pi / 2)


def test_gap_splits_segments():
    t = np.array([0, 300, 600, 1500, 1800, 2100], float)
    x = np.arange(6) * 10.0
    s = extract_steps(RelocationTrack(t, x, np.zeros(6)))
    assert len(s) == 4
    assert s.starts.tolist() == [True, False, True, False]
    assert np.isnan(s.turns[2])


def test_zero_step_has_undefined_turn():
    s = extract_steps(RelocationTrack.regular([0, 10, 10, 20], [0, 0, 0, 0]))
    assert s.lengths[1] == 0.0
    assert np.isnan(s.turns[1]) and np.isnan(s.turns[2])


def test_too_few_fixes():
    with pytest.raises(ValueError):
        extract_steps(RelocationTrack.regular([0, 1], [0, 1]))


def test_track_validation():
    with pytest.raises(ValueError):
        RelocationTrack(np.array([0.0, 0.0, 300.0]), np.zeros(3), np.zeros(3))
    with pytest.raises(ValueError):
        StepSeries.single([0.1, -0.1], [np.nan, 0.0])


@given(st.floats(-50, 50))
def test_wrap_angle_range(a):
    w = float(wrap_angle(a))
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)
    assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)


def test_track_csv_round_trip(tmp_path):
    series, _ = simulate_series(60, rng=1)
    track = track_from_series(series)
    path = write_track_csv(track, tmp_path / "track.csv")
    back = read_track_csv(path)
    assert np.array_equal(back.x, track.x) and np.array_equal(back.t, track.t)
    again = extract_steps(back)
    assert again.lengths == pytest.approx(series.lengths, rel=1e-9, abs=1e-12)
    ok = ~np.isnan(series.turns) & ~np.isnan(again.turns)
    assert np.allclose(np.cos(again.turns[ok] - series.turns[ok]), 1.0, atol=1e-9)


def test_read_track_csv_utc_suffix(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("timestamp,x,y\n2020-01-01T00:00:00Z,0,0\n2020-01-01T00:05:00Z,3,4\n")
    tr = read_track_csv(p)
    assert tr.t.tolist() == [0.0, 300.0]


# ------------------------------------------------------------ distributions


@pytest.mark.parametrize("x", [0.0, 1e-3, 0.3336, 1.5202, 5.0, 24.9, 25.0, 60.0, 400.0])
def test_bessel_against_scipy(x):
    assert dist.log_bessel_i0(x) == pytest.approx(math.log(special.i0e(x)) + x, rel=1e-12, abs=1e-14)
    if x > 0:
        assert dist.bessel_ratio_i1_i0(x) == pytest.approx(special.i1e(x) / special.i0e(x), rel=1e-11)


@given(st.floats(1e-4, 10.0), st.floats(1e-4, 10.0))
def test_gamma_conversion_round_trip(mean, sd):
    k, theta = dist.gamma_shape_scale(mean, sd)
    m2, s2 = dist.gamma_mean_sd(k, theta)
    assert m2 == pytest.approx(mean, rel=1e-12)
    assert s2 == pytest.approx(sd, rel=1e-12)


@pytest.mark.parametrize("family,params", [("gamma", (0.04, 0.03)), ("exponential", (0.02,)),
                                           ("weibull", (1.3, 0.05))])
def test_step_densities_integrate_to_one(family, params):
    x = np.linspace(1e-9, 2.0, 400_001)
    dens = np.exp(dist.step_logpdf(family, params, x))
    assert np.trapezoid(dens, x) == pytest.approx(1.0, abs=2e-3)


@pytest.mark.parametrize("family,params", [("vonmises", (-3.0, 0.33)), ("wrappedcauchy", (0.5, 0.7))])
def test_turn_densities_integrate_to_one(family, params):
    t = np.linspace(-math.pi, math.pi, 200_001)
    dens = np.exp(dist.turn_logpdf(family, params, t))
    assert np.trapezoid(dens, t) == pytest.approx(1.0, abs=1e-6)


def test_turn_logpdf_ignores_nan():
    out = dist.turn_logpdf("vonmises", (0.0, 1.0), np.array([np.nan, 0.0]))
    assert out[0] == 0.0 and out[1] < 0


@pytest.mark.parametrize("family,params", [("gamma", (0.04, 0.03)), ("exponential", (0.02,)),
                                           ("weibull", (1.3, 0.05))])
def test_weighted_step_mle_recovers(family, params):
    rng = np.random.default_rng(0)
    x = dist.sample_steps(family, params, 50_000, rng)
    est = dist.fit_step(family, x, np.ones(x.size))
    assert est == pytest.approx(params, rel=0.03)


def test_step_mle_weights_select_points():
    rng = np.random.default_rng(1)
    a = dist.sample_steps("gamma", (0.004, 0.0034), 20_000, rng)
    b = dist.sample_steps("gamma", (0.04, 0.038), 20_000, rng)
    x = np.concatenate([a, b])
    w = np.concatenate([np.zeros(a.size), np.ones(b.size)])
    assert dist.fit_step("gamma", x, w) == pytest.approx(dist.fit_step("gamma", b, np.ones(b.size)), rel=1e-9)


@pytest.mark.parametrize("family,params", [("vonmises", (-3.0232, 0.3336)), ("vonmises", (0.2, 8.0)),
                                           ("wrappedcauchy", (1.0, 0.6))])
def test_weighted_turn_mle_recovers(family, params):
    rng = np.random.default_rng(2)
    t = dist.sample_turns(family, params, 50_000, rng)
    mu, c = dist.fit_turn(family, t, np.ones(t.size))
    assert abs(math.remainder(mu - params[0], 2 * math.pi)) < 0.1
    assert c == pytest.approx(params[1], rel=0.06)


# ------------------------------------------------------------ forward algorithm


def _brute_loglik(initial, transition, log_b):
    total = 0.0
    T = log_b.shape[0]
    for path in itertools.product((0, 1), repeat=T):
        p = initial[path[0]] * math.exp(log_b[0, path[0]])
        for t in range(1, T):
            p *= transition[path[t - 1], path[t]] * math.exp(log_b[t, path[t]])
        total += p
    return math.log(total)


@pytest.mark.parametrize("T", range(1, 11))
def test_forward_matches_path_enumeration(T):
    rng = np.random.default_rng(T)
    for _ in range(5):
        initial = rng.dirichlet([1, 1])
        a, b = rng.uniform(0.01, 0.99, 2)
        transition = np.array([[a, 1 - a], [1 - b, b]])
        log_b = rng.normal(0.0, 2.0, (T, 2))
        starts = np.zeros(T, bool)
        starts[0] = True
        got = series_loglik(initial, transition, log_b, starts)
        assert got == pytest.approx(_brute_loglik(initial, transition, log_b), rel=1e-10)


@pytest.mark.parametrize("T", [1, 4, 9])
def test_joint_path_densities_sum_to_likelihood(T):
    series, _ = simulate_series(T, rng=T)
    fit = reference_fit()
    logs = emission_logs(fit.step_family, fit.turn_family, fit.step_params, fit.turn_params,
                         np.maximum(series.lengths, 1e-6), series.turns)
    direct = series_loglik(fit.initial, fit.transition, logs, series.starts)
    paths = [path_loglik(fit, series, p) for p in itertools.product((0, 1), repeat=T)]
    assert special.logsumexp(paths) == pytest.approx(direct, rel=1e-10)


def test_segments_restart_from_initial():
    rng = np.random.default_rng(3)
    log_b = rng.normal(size=(8, 2))
    init = np.array([0.3, 0.7])
    g = np.array([[0.9, 0.1], [0.2, 0.8]])
    starts = np.zeros(8, bool)
    starts[[0, 5]] = True
    both = series_loglik(init, g, log_b, starts)
    first = series_loglik(init, g, log_b[:5], starts[:5])
    second = series_loglik(init, g, log_b[5:], np.r_[True, False, False])
    assert both == pytest.approx(first + second, rel=1e-12)


def test_posteriors_are_distributions():
    series, _ = simulate_series(300, rng=4)
    post = state_posteriors(reference_fit(), series)
    assert post.shape == (300, 2)
    assert np.allclose(post.sum(axis=1), 1.0)


# ------------------------------------------------------------ EM fitting


@pytest.fixture(scope="module")
def simulated_1500():
    return simulate_series(1500, rng=11)


def test_em_trace_nondecreasing(simulated_1500):
    series, _ = simulated_1500
    fit = fit_hmm(series, "gamma", "vonmises", n_starts=2)
    trace = np.asarray(fit.loglik_trace)
    assert trace.size >= 2
    assert np.all(np.diff(trace) >= -1e-7 * np.abs(trace[1:]))
    assert fit.loglik == pytest.approx(trace.max(), rel=1e-9)


def test_fit_recovers_parameters(simulated_1500):
    series, _ = simulated_1500
    fit = fit_hmm(series, n_starts=3)
    assert fit.p11 == pytest.approx(0.8775, abs=0.06)
    assert fit.p22 == pytest.approx(0.9096, abs=0.06)
    enc, exp_ = fit.step_means
    assert enc < exp_
    assert exp_ == pytest.approx(0.0398, abs=0.006)
    assert np.allclose(fit.transition.sum(axis=1), 1.0)
    d = fit.to_dict()
    assert len(d["transition"]) == 2 and all(len(r) == 2 for r in d["transition"])
    assert d["n_params"] == 11


def test_nested_family_not_worse(simulated_1500):
    series, _ = simulated_1500
    cmp = fit_families(series, ["exponential", "gamma", "weibull"], ["vonmises"], n_starts=2)
    expo = cmp.fits[("exponential", "vonmises")].loglik
    assert cmp.fits[("gamma", "vonmises")].loglik >= expo - 1e-6
    assert cmp.fits[("weibull", "vonmises")].loglik >= expo - 1e-6
    table = cmp.table()
    assert table[0]["delta_aic"] == 0.0
    assert [r["aic"] for r in table] == sorted(r["aic"] for r in table)
    assert cmp.fits[("exponential", "vonmises")].n_params == 9


def test_fit_rejects_short_and_degenerate_series():
    short, _ = simulate_series(49, rng=0)
    with pytest.raises(ValueError):
        fit_hmm(short)
    zeros = StepSeries.single(np.zeros(80), np.full(80, np.nan))
    with pytest.raises(ValueError):
        fit_hmm(zeros)
    with pytest.raises(ValueError):
        fit_hmm(simulate_series(80, rng=0)[0], step_family="lognormal")


def test_nonconvergence_warns(simulated_1500):
    series, _ = simulated_1500
    with pytest.warns(ConvergenceWarning):
        fit = fit_hmm(series, n_starts=1, max_iter=2, tol=0.0)
    assert not fit.converged


def test_fit_is_deterministic_for_seed():
    series, _ = simulate_series(400, rng=5)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        a = fit_hmm(series, n_starts=2, rng=3)
        b = fit_hmm(series, n_starts=2, rng=3)
    assert a.loglik == b.loglik and np.array_equal(a.transition, b.transition)


# ------------------------------------------------------------ Viterbi


def test_viterbi_all_encamped():
    n = 200
    lengths = np.full(n, 0.002)
    turns = np.full(n, math.pi)
    turns[0] = np.nan
    path = viterbi_decode(reference_fit(), StepSeries.single(lengths, turns))
    assert np.all(path == 0)


def test_viterbi_block_boundaries():
    rng = np.random.default_rng(8)
    blocks = [0, 1, 0, 1, 0]
    truth = np.repeat(blocks, 60)
    m = REFERENCE_MODEL
    lengths = np.where(truth == 0, rng.uniform(0.002, 0.004, truth.size), rng.uniform(0.08, 0.12, truth.size))
    turns = np.where(truth == 0, rng.vonmises(m["turn_params"][0][0], 4.0, truth.size),
                     rng.vonmises(0.0, 4.0, truth.size))
    turns = wrap_angle(turns)
    turns[0] = np.nan
    path = viterbi_decode(reference_fit(), StepSeries.single(lengths, turns))
    true_changes = np.flatnonzero(np.diff(truth)) + 1
    found = np.flatnonzero(np.diff(path)) + 1
    assert found.size == true_changes.size
    assert np.all(np.abs(found - true_changes) <= 2)


def test_viterbi_single_observation():
    fit = reference_fit(initial=[0.3, 0.7])
    for length in (0.001, 0.01, 0.03, 0.2):
        series = StepSeries.single([length], [np.nan])
        logs = emission_logs("gamma", "vonmises", fit.step_params, fit.turn_params,
                             np.array([length]), np.array([np.nan]))[0]
        expected = int(np.argmax(np.log(fit.initial) + logs))
        assert viterbi_decode(fit, series).tolist() == [expected]


def test_viterbi_beats_random_paths():
    series, _ = simulate_series(120, rng=9)
    fit = reference_fit()
    best = viterbi_decode(fit, series)
    best_ll = path_loglik(fit, series, best)
    rng = np.random.default_rng(10)
    for _ in range(150):
        assert path_loglik(fit, series, rng.integers(0, 2, 120)) <= best_ll + 1e-9


def test_viterbi_exhaustive_short():
    series, _ = simulate_series(8, rng=12)
    fit = reference_fit()
    lls = {p: path_loglik(fit, series, p) for p in itertools.product((0, 1), repeat=8)}
    best = max(lls, key=lls.get)
    assert tuple(viterbi_decode(fit, series).tolist()) == best


# ------------------------------------------------------------ NSGA-II


def test_dominates():
    assert dominates([1, 2], [2, 2])
    assert not dominates([1, 2], [1, 2])
    assert not dominates([1, 3], [2, 2])


def test_nondominated_sort_layers():
    f = np.array([[1, 4], [2, 3], [3, 3], [4, 1], [4, 4], [5, 5]])
    fronts = nondominated_sort(f)
    assert [sorted(fr.tolist()) for fr in fronts] == [[0, 1, 3], [2], [4], [5]]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_nondominated_sort_properties(seed):
    f = np.random.default_rng(seed).integers(0, 6, (25, 3)).astype(float)
    fronts = nondominated_sort(f)
    assert sorted(np.concatenate(fronts).tolist()) == list(range(25))
    for k, fr in enumerate(fronts):
        for i in fr:
            assert not any(dominates(f[j], f[i]) for j in fr)
            if k:
                assert any(dominates(f[j], f[i]) for j in fronts[k - 1])


def test_crowding_boundaries_infinite():
    f = np.array([[0.0, 4.0], [1.0, 2.0], [2.0, 1.0], [4.0, 0.0]])
    d = crowding_distance(f)
    assert np.isinf(d[0]) and np.isinf(d[3])
    # oracle: (2 - 0)/4 + (4 - 1)/4 and (4 - 1)/4 + (2 - 0)/4
    assert d[1] == pytest.approx(1.25) and d[2] == pytest.approx(1.25)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31))
def test_variation_respects_bounds(seed):
    rng = np.random.default_rng(seed)
    lo, hi = np.array([-1.0, 0.0, 5.0]), np.array([1.0, 0.1, 50.0])
    p1, p2 = lo + rng.random(3) * (hi - lo), lo + rng.random(3) * (hi - lo)
    c1, c2 = sbx_crossover(p1, p2, lo, hi, 15.0, 1.0, rng)
    m = polynomial_mutation(c1, lo, hi, 20.0, 1.0, rng)
    for v in (c1, c2, m):
        assert np.all(v >= lo) and np.all(v <= hi)


def test_nsga2_biobjective_small():
    front = nsga2(lambda x: (x[0] ** 2, (x[0] - 2) ** 2), [(-10, 10)], GaConfig(pop_size=20, generations=40, seed=1))
    assert np.all(front.decisions >= -0.01) and np.all(front.decisions <= 2.01)
    for i in range(len(front)):
        for j in range(len(front)):
            assert not dominates(front.objectives[i], front.objectives[j])


def test_nsga2_deterministic_and_csv(tmp_path):
    cfg = GaConfig(pop_size=12, generations=10, seed=4)
    f = lambda x: (x[0] ** 2 + x[1], (x[0] - 1) ** 2 + (1 - x[1]))  # noqa: E731
    a = nsga2(f, [(-2, 2), (0, 1)], cfg, names=("a", "b"), objective_names=("f1", "f2"))
    b = nsga2(f, [(-2, 2), (0, 1)], cfg)
    assert np.array_equal(a.decisions, b.decisions)
    text = a.to_csv(tmp_path / "front.csv").read_text().splitlines()
    assert text[0] == "a,b,f1,f2" and len(text) == 1 + len(a)


def test_nsga2_evaluation_error():
    def bad(x):
        if x[0] > 0:
            raise ZeroDivisionError("boom")
        return (x[0], -x[0])

    with pytest.raises(EvaluationError) as info:
        nsga2(bad, [(-1, 1)], GaConfig(pop_size=8, generations=2, seed=0))
    assert info.value.vector[0] > 0
    assert isinstance(info.value.cause, ZeroDivisionError)


def test_ga_config_validation():
    with pytest.raises(ValueError):
        GaConfig(pop_size=7)
    with pytest.raises(ValueError):
        nsga2(lambda x: (x[0], x[0]), [(1, 0)])


# ------------------------------------------------------------ movement objectives


def test_stationary_track_has_zero_statistics():
    traj = np.zeros((288 * 3, 2)) + 500.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        obj = movement_objectives([traj], n_boot=50)
    assert obj.values().tolist() == [0.0, 0.0, 0.0]


def _square_day(side=1000.0):
    per_side = 71
    s = np.linspace(0.0, 4.0, 4 * per_side + 1)
    pts = []
    for v in s:
        k, f = min(int(v), 3), v - min(int(v), 3)
        corner = [(0, 0), (1, 0), (1, 1), (0, 1)][k]
        nxt = [(1, 0), (1, 1), (0, 1), (0, 0)][k]
        pts.append(((corner[0] + f * (nxt[0] - corner[0])) * side, (corner[1] + f * (nxt[1] - corner[1])) * side))
    pts += [pts[-1]] * (288 - len(pts))
    return np.array(pts)


def test_square_loop_statistics():
    day = _square_day()
    assert day.shape == (288, 2)
    traj = np.vstack([day, day])
    obj = movement_objectives([traj], n_boot=100, rng=0)
    assert obj.diel_km.value == pytest.approx(4.0, rel=1e-9)
    assert obj.net_km.value == pytest.approx(0.0, abs=1e-9)
    assert obj.mcp_km2.value == pytest.approx(1.0, rel=1e-9)
    assert obj.diel_km.low <= obj.diel_km.value <= obj.diel_km.high


def test_bootstrap_across_trajectories():
    rng = np.random.default_rng(0)
    trajs = [np.cumsum(rng.normal(0, 20 * (1 + i), (288 * 2, 2)), axis=0) for i in range(6)]
    obj = movement_objectives(trajs, n_boot=300, rng=1)
    for name in ("mcp_km2", "diel_km", "net_km"):
        e = getattr(obj, name)
        assert e.low <= e.value <= e.high
        assert e.high > e.low
    again = movement_objectives(trajs, n_boot=300, rng=1)
    assert again == obj


def test_hinge_penalties():
    targets = MovementObjectives(Estimate(10.0, 8.0, 12.0), Estimate(3.0, 2.5, 3.5), Estimate(1.0, 1.0, 1.0))
    pen = hinge_penalties([11.0, 4.0, 0.5], targets)
    assert pen.tolist() == pytest.approx([0.0, 0.5, 0.5])


def test_apply_variables():
    cfg = RunConfig()
    new = apply_variables(cfg, [0.2, 12.0, 0.5, 900.0])
    assert new.scenario.forest_food_percent == 0.2
    assert new.scenario.forest_max_food_value == 12.0
    assert new.agent.percent_memory == 0.5
    assert new.agent.radius_food_search == 900.0
    assert cfg.agent.radius_food_search == 750.0


# ------------------------------------------------------------ slope tolerance


FLAT = SyntheticLandscapeSpec(nrows=40, ncols=40, ridge_height=0.0, tilt_per_cell=0.0)


def test_flat_landscape_never_steep():
    cfg = RunConfig(landscape=LandscapeConfig(synthetic=FLAT), days=1, replicates=2)
    tuning = tune_slope_tolerance(cfg, [25, 100])
    assert tuning.fractions == {25.0: 0.0, 100.0: 0.0}
    assert tuning.tolerance == 25.0
    assert all(r["within_bound"] for r in tuning.rows())


def test_no_feasible_tolerance(small_config, small_world):
    with pytest.raises(NoFeasibleTolerance):
        tune_slope_tolerance(replace(small_config, replicates=1, days=1), [100], bound=-1.0, world=small_world)


def test_steep_fraction_counts_ticks(small_world):
    class R:
        row = np.array([0, 0, 0, 0])
        col = np.array([0, 0, 0, 0])

    stack = replace(small_world.stack, slope=np.full(small_world.stack.shape, 45.0))
    assert steep_tick_fraction([R()], stack, 30.0) == 1.0
    assert steep_tick_fraction([], stack, 30.0) == 0.0
